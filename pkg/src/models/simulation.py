"""模拟数据模型"""
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.curves import CurveSet, _as_float_array, dyadic_exponent
from src.models.mixture import Partition
from src.models.regression import Covariates

# 三个成分的混合比例
CLASS_PROBABILITIES = (0.5, 0.25, 0.25)
TRUE_GAMMA = (1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0))


class ScenarioConfig(BaseModel):
    """单个模拟副本的配置"""
    scenario: int = Field(default=1, description="1: 平移+协变量, 2: 仅协变量, 3: 仅平移")
    n: int = Field(default=100, ge=2)
    T: int = 256
    varsigma: float = Field(default=0.3, gt=0, lt=1)
    shift: int = Field(default=50, ge=0)
    shift_prob: float = Field(default=0.5, ge=0, le=1)
    shift_mode: Literal["circular", "padded"] = "circular"
    noise_scale: float = Field(default=1.0, ge=0, description="噪声路径的缩放系数，0 时无噪声")
    seed: int = 0
    replica: int = Field(default=0, ge=0)

    @field_validator('T')
    @classmethod
    def _dyadic(cls, v):
        J = dyadic_exponent(v)
        if J is None or J < 2:
            raise ValueError(f"T={v} 必须是 2 的幂且不小于 4")
        return v

    @model_validator(mode='after')
    def _check_shift(self) -> 'ScenarioConfig':
        if self.shift >= self.T:
            raise ValueError(f"平移 {self.shift} 必须小于 T={self.T}")
        return self

    @property
    def has_shift(self) -> bool:
        return self.scenario in (1, 3)

    @property
    def has_covariates(self) -> bool:
        return self.scenario in (1, 2)


class Replicate(BaseModel):
    """一个模拟副本：曲线、协变量以及生成它们的真实参数"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config: ScenarioConfig
    curves: CurveSet
    covariates: Covariates
    labels: Partition
    shifts: np.ndarray
    gamma: np.ndarray = Field(default_factory=lambda: np.array(TRUE_GAMMA))

    @field_validator('shifts', mode='before')
    @classmethod
    def _to_shifts(cls, v):
        shifts = np.array(v, dtype=int)
        shifts.setflags(write=False)
        return shifts

    @field_validator('gamma', mode='before')
    @classmethod
    def _to_gamma(cls, v):
        return _as_float_array(v)

    @model_validator(mode='after')
    def _check(self) -> 'Replicate':
        n = self.curves.n
        if self.covariates.n != n or self.labels.n != n or self.shifts.size != n:
            raise ValueError("曲线、协变量、标签与平移的个数不一致")
        if not set(np.unique(self.labels.labels)) <= {1, 2, 3}:
            raise ValueError("真实标签必须在 {1, 2, 3} 内")
        if not np.all(np.isfinite(self.curves.values)):
            raise ValueError("模拟曲线含有非有限值")
        return self

    @property
    def n(self) -> int:
        return self.curves.n

    def link(self, a) -> np.ndarray:
        """ν(a)：情景 1/2 为 1 + ς(a² - 1)，情景 3 恒为 1"""
        a = np.asarray(a, dtype=float)
        if not self.config.has_covariates:
            return np.ones_like(a)
        return 1.0 + self.config.varsigma * (a ** 2 - 1.0)

    def log_link(self, a) -> np.ndarray:
        return np.log(self.link(a))

    def effect(self) -> np.ndarray:
        """每个地区的真实 μ(X_i) = ν(X_iᵀγ)"""
        return self.link(self.covariates.values @ self.gamma)
