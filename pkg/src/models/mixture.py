"""非参数混合模型数据模型"""
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.curves import _as_float_array


class MixtureOptions(BaseModel):
    """MSLE 拟合选项"""
    bandwidths: Optional[List[float]] = Field(default=None, description="每列带宽，None 时 h_j = C_j n^(-1/5)")
    bandwidth_constant: Optional[float] = Field(default=None, gt=0, description="覆盖 C_j")
    grid_points: int = Field(default=512, ge=16)
    grid_margin: float = Field(default=3.0, gt=0, description="网格覆盖数据范围 ± margin·h_j")
    density_floor: float = Field(default=1e-12, gt=0)
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=500, ge=1)
    restarts: int = Field(default=5, ge=0)
    kmeans_restarts: int = Field(default=10, ge=1)
    min_proportion: float = Field(default=1e-8, ge=0)
    soft_weight: float = Field(default=0.9, gt=0, le=1)
    seed: int = 0


class DensityTable(BaseModel):
    """均匀网格上的一元密度表"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: float
    step: float = Field(gt=0)
    values: np.ndarray

    @field_validator('values', mode='before')
    @classmethod
    def _to_vector(cls, v):
        return _as_float_array(v)

    @property
    def grid(self) -> np.ndarray:
        return self.lower + self.step * np.arange(self.values.size)

    @property
    def upper(self) -> float:
        return self.lower + self.step * (self.values.size - 1)

    def integral(self) -> float:
        return float(np.trapezoid(self.values, dx=self.step))


class MixtureModel(BaseModel):
    """
    条件独立的非参数混合模型

    densities[ℓ, j] 是第 ℓ 个成分第 j 个特征在 grids[j] 上的密度表。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    proportions: np.ndarray
    grid_lower: np.ndarray
    grid_step: np.ndarray
    densities: np.ndarray
    bandwidths: np.ndarray
    loglik: float = float("nan")
    iterations: int = 0
    trace: List[float] = Field(default_factory=list)
    seed: int = 0

    @field_validator('proportions', 'grid_lower', 'grid_step', 'bandwidths', mode='before')
    @classmethod
    def _to_vector(cls, v):
        return _as_float_array(np.atleast_1d(v))

    @field_validator('densities', mode='before')
    @classmethod
    def _to_tensor(cls, v):
        return _as_float_array(v)

    @model_validator(mode='after')
    def _check(self) -> 'MixtureModel':
        L, p, G = self.densities.shape
        if self.proportions.size != L:
            raise ValueError("比例个数与成分数不一致")
        if np.any(self.proportions <= 0) or abs(self.proportions.sum() - 1.0) > 1e-12:
            raise ValueError(f"比例必须为正且和为 1: {self.proportions}")
        if not (self.grid_lower.size == self.grid_step.size == self.bandwidths.size == p):
            raise ValueError("网格/带宽个数与特征数不一致")
        if np.any(self.bandwidths <= 0) or np.any(self.densities < 0):
            raise ValueError("带宽必须为正、密度必须非负")
        return self

    @property
    def L(self) -> int:
        return int(self.densities.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.densities.shape[1])

    @property
    def grid_points(self) -> int:
        return int(self.densities.shape[2])

    def grid(self, j: int) -> np.ndarray:
        return self.grid_lower[j] + self.grid_step[j] * np.arange(self.grid_points)

    def table(self, component: int, j: int) -> DensityTable:
        """第 component 个成分（从 0 开始）第 j 个特征的密度表"""
        return DensityTable(lower=float(self.grid_lower[j]), step=float(self.grid_step[j]),
                            values=self.densities[component, j])

    def permuted(self, order: Sequence[int]) -> 'MixtureModel':
        """按 order 重排成分"""
        order = list(order)
        return self.model_copy(update={
            "proportions": self.proportions[order],
            "densities": self.densities[order],
        })


class Posteriors(BaseModel):
    """n×L 后验概率 t_iℓ"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regions: List[str]
    values: np.ndarray

    @field_validator('values', mode='before')
    @classmethod
    def _to_matrix(cls, v):
        return _as_float_array(np.atleast_2d(v))

    @model_validator(mode='after')
    def _check(self) -> 'Posteriors':
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("后验概率必须在 [0, 1] 内")
        if np.any(np.abs(self.values.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("后验概率每行之和必须为 1")
        if len(self.regions) != self.values.shape[0]:
            raise ValueError("地区数与后验行数不一致")
        return self

    @classmethod
    def from_array(cls, values, regions: Optional[List[str]] = None) -> 'Posteriors':
        values = np.atleast_2d(np.asarray(values, dtype=float))
        regions = regions or [f"r{i + 1}" for i in range(values.shape[0])]
        return cls(regions=list(regions), values=values)

    @property
    def L(self) -> int:
        return int(self.values.shape[1])


class Partition(BaseModel):
    """硬划分，标签取值 1..L"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regions: List[str]
    labels: np.ndarray

    @field_validator('labels', mode='before')
    @classmethod
    def _to_labels(cls, v):
        labels = np.array(v, dtype=int)
        labels.setflags(write=False)
        return labels

    @model_validator(mode='after')
    def _check(self) -> 'Partition':
        if self.labels.ndim != 1 or self.labels.size == 0:
            raise ValueError("划分必须是非空一维标签数组")
        if len(self.regions) != self.labels.size:
            raise ValueError("地区数与标签个数不一致")
        return self

    @classmethod
    def from_labels(cls, labels, regions: Optional[List[str]] = None) -> 'Partition':
        labels = np.asarray(labels, dtype=int)
        regions = regions or [f"r{i + 1}" for i in range(labels.size)]
        return cls(regions=list(regions), labels=labels)

    @property
    def n(self) -> int:
        return int(self.labels.size)
