"""评估与基准测试数据模型"""
from typing import Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.curves import dyadic_exponent
from src.models.mixture import MixtureModel, Partition, Posteriors
from src.models.regression import CovariateEffect, IndexFit

Method = Literal["crftiw", "noTI", "noCov", "adjustFirst"]
METHODS: List[str] = ["crftiw", "noTI", "noCov", "adjustFirst"]

BENCHMARK_COLUMNS = ["scenario", "n", "replica", "method", "ari", "gamma1_err", "link_err", "seconds"]
SUMMARY_METRICS = ["ari", "gamma1_err", "link_err"]


class BenchmarkConfig(BaseModel):
    """基准测试的全因子设计"""
    scenarios: List[int] = Field(default_factory=lambda: [1, 2, 3])
    sizes: List[int] = Field(default_factory=lambda: [50, 100, 250])
    replicas: int = Field(default=100, ge=1)
    methods: List[Method] = Field(default_factory=lambda: list(METHODS))
    L: int = Field(default=3, ge=1)
    seed: int = 0
    T: int = 256
    varsigma: float = Field(default=0.3, gt=0, lt=1)
    shift: int = Field(default=50, ge=0)
    shift_mode: Literal["circular", "padded"] = "circular"
    n_jobs: int = 1
    timing: bool = Field(default=True, description="False 时 seconds 列写 0.0，保证重跑输出逐字节一致")

    @field_validator('scenarios', 'sizes', 'methods')
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("因子水平不能为空")
        return v

    @model_validator(mode='after')
    def _check_design(self) -> 'BenchmarkConfig':
        J = dyadic_exponent(self.T)
        if J is None or J < 2:
            raise ValueError(f"T={self.T} 必须是 2 的幂且不小于 4")
        if self.shift >= self.T:
            raise ValueError(f"平移 {self.shift} 必须小于 T={self.T}")
        return self

    @property
    def cells(self) -> int:
        return len(self.scenarios) * len(self.sizes) * self.replicas * len(self.methods)


class BenchmarkRow(BaseModel):
    """单元格结果：(scenario, n, replica, method) 的指标"""
    scenario: int
    n: int
    replica: int
    method: str
    ari: float = float("nan")
    gamma1_err: float = float("nan")
    link_err: float = float("nan")
    seconds: float = 0.0

    @field_validator('ari')
    @classmethod
    def _ari_range(cls, v):
        if np.isfinite(v) and not -1.0 - 1e-12 <= v <= 1.0 + 1e-12:
            raise ValueError(f"ARI={v} 超出 [-1, 1]")
        return v

    @field_validator('gamma1_err', 'link_err')
    @classmethod
    def _non_negative(cls, v):
        if np.isfinite(v) and v < 0:
            raise ValueError("误差必须非负")
        return v


class BenchmarkFailure(BaseModel):
    scenario: int
    n: int
    replica: int
    method: str
    stage: str
    message: str


class VariantResult(BaseModel):
    """一个流程变体的输出"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    method: str
    partition: Partition
    posteriors: Posteriors
    mixture: MixtureModel
    fit: Optional[IndexFit] = None
    effect: Optional[CovariateEffect] = None


class ClusterSummary(BaseModel):
    """
    每个簇的统计量

    table 的列：cluster, size, proportion, total_mean, total_sd, effect_mean, effect_sd；
    簇按调整后总量均值递增重新编号，relabel 记录原标签到新标签的映射。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    table: pd.DataFrame
    relabel: Dict[int, int]
    empty_clusters: List[int] = Field(default_factory=list)

    @property
    def L(self) -> int:
        return int(len(self.table))
