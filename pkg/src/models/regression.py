"""单指标回归数据模型"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.curves import FeatureMatrix, _as_float_array
from src.utils.exceptions import DegenerateCovariatesError, NonFiniteInputError


class Covariates(BaseModel):
    """n 个地区 × d 个风险因素"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regions: List[str]
    names: List[str]
    values: np.ndarray
    standardized: bool = False
    # 标准化时记录的均值与标准差，便于对新地区做同样的变换
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    @field_validator('values', mode='before')
    @classmethod
    def _to_matrix(cls, v):
        array = _as_float_array(v)
        if array.ndim == 1:
            array = _as_float_array(array[:, None])
        return array

    @model_validator(mode='after')
    def _check(self) -> 'Covariates':
        n, d = self.values.shape
        if d < 1:
            raise ValueError("至少需要一个协变量")
        if len(self.regions) != n or len(self.names) != d:
            raise ValueError(f"协变量维度 {self.values.shape} 与地区/因素名称不一致")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteInputError("协变量含有非有限值")
        return self

    @classmethod
    def from_array(cls, values, names: Optional[List[str]] = None,
                   regions: Optional[List[str]] = None) -> 'Covariates':
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        n, d = values.shape
        names = names or [f"x{k + 1}" for k in range(d)]
        regions = regions or [f"r{i + 1}" for i in range(n)]
        return cls(regions=list(regions), names=list(names), values=values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def d(self) -> int:
        return int(self.values.shape[1])

    def standardize(self) -> 'Covariates':
        """按列标准化（均值 0、样本标准差 1）"""
        center = self.values.mean(axis=0)
        scale = self.values.std(axis=0, ddof=1)
        if np.any(scale <= 0):
            bad = [self.names[k] for k in np.flatnonzero(scale <= 0)]
            raise DegenerateCovariatesError(f"协变量方差为零: {bad}")
        return Covariates(
            regions=list(self.regions), names=list(self.names),
            values=(self.values - center) / scale,
            standardized=True, center=center, scale=scale,
        )


class IndexOptions(BaseModel):
    """单指标拟合选项"""
    bandwidth: Optional[float] = Field(default=None, gt=0, description="固定带宽，None 时用 C n^(-1/5)")
    bandwidth_constant: Optional[float] = Field(default=None, gt=0, description="覆盖 C，None 时取指标的经验标准差")
    recompute_bandwidth: bool = True
    leave_one_out: bool = False
    restarts: int = Field(default=8, ge=1)
    candidates: int = Field(default=64, ge=1)
    seed: int = 0
    den_floor: float = 1e-300


class IndexFit(BaseModel):
    """
    单指标回归拟合结果

    responses 为列中心化后的特征 ŷ*_ij，response_means 为减去的列均值；
    链接函数 ν̂ 由 (index_values, responses) 上的 Nadaraya-Watson 估计给出。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: np.ndarray
    bandwidth: float = Field(gt=0)
    index_values: np.ndarray
    responses: np.ndarray
    response_means: np.ndarray
    design: np.ndarray
    regions: List[str]
    kernel: str = "gaussian"
    leave_one_out: bool = False
    zero_index: Optional[int] = None
    loss: float = float("nan")
    den_floor: float = 1e-300

    @field_validator('gamma', 'index_values', 'response_means', mode='before')
    @classmethod
    def _to_vector(cls, v):
        return _as_float_array(np.atleast_1d(v))

    @field_validator('responses', 'design', mode='before')
    @classmethod
    def _to_matrix(cls, v):
        array = _as_float_array(v)
        if array.ndim == 1:
            array = _as_float_array(array[:, None])
        return array

    @model_validator(mode='after')
    def _check(self) -> 'IndexFit':
        if abs(np.linalg.norm(self.gamma) - 1.0) > 1e-10:
            raise ValueError(f"||gamma|| = {np.linalg.norm(self.gamma)} 不等于 1")
        nonzero = np.flatnonzero(self.gamma != 0.0)
        if nonzero.size and self.gamma[nonzero[0]] < 0:
            raise ValueError("gamma 第一个非零分量必须为正")
        if self.zero_index is not None and self.gamma[self.zero_index] != 0.0:
            raise ValueError(f"约束拟合要求 gamma[{self.zero_index}] = 0")
        if self.index_values.size != self.responses.shape[0]:
            raise ValueError("指标值与响应行数不一致")
        if self.design.shape != (self.index_values.size, self.gamma.size):
            raise ValueError(f"设计矩阵形状 {self.design.shape} 与 (n, d) 不一致")
        return self

    @property
    def n(self) -> int:
        return int(self.index_values.size)

    @property
    def d(self) -> int:
        return int(self.gamma.size)


class ResidualMatrix(FeatureMatrix):
    """回归残差 ξ̂_ij = ŷ*_ij - ν̂(X_iᵀγ̂)"""
    kind: str = "residual"


class CovariateEffect(BaseModel):
    """协变量效应 μ̂(X_i)，样本均值归一化为 1"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regions: List[str]
    values: np.ndarray
    normalization: float
    scale: str = Field(default="log", description="log: μ̂ = exp(ν̂)；linear: μ̂ = ν̂ + 均值")

    @field_validator('values', mode='before')
    @classmethod
    def _to_vector(cls, v):
        return _as_float_array(np.atleast_1d(v))

    @model_validator(mode='after')
    def _check(self) -> 'CovariateEffect':
        if len(self.regions) != self.values.size:
            raise ValueError("地区数与效应值个数不一致")
        return self

    @classmethod
    def identity(cls, regions: List[str]) -> 'CovariateEffect':
        """μ̂ ≡ 1"""
        return cls(regions=list(regions), values=np.ones(len(regions)), normalization=1.0)
