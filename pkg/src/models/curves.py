"""曲线与小波系数数据模型"""
from typing import List, Optional, Sequence, Union

import numpy as np
import pywt
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils.exceptions import NonDyadicLengthError, NonFiniteInputError


def dyadic_exponent(T: int) -> Optional[int]:
    """T = 2^J 时返回 J，否则返回 None"""
    if T < 1 or T & (T - 1):
        return None
    return T.bit_length() - 1


def _as_float_array(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.setflags(write=False)
    return array


class Curve(BaseModel):
    """单个地区长度为 T 的采样曲线 W_i"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    region: Optional[str] = None

    @field_validator('values', mode='before')
    @classmethod
    def _to_array(cls, v):
        array = _as_float_array(v)
        if array.ndim != 1:
            raise ValueError("曲线必须是一维数组")
        return array

    @property
    def T(self) -> int:
        return int(self.values.shape[0])

    @property
    def J(self) -> Optional[int]:
        return dyadic_exponent(self.T)

    def check_dyadic(self, min_exponent: int = 1) -> int:
        """检查长度为 2^J 且数值有限，返回 J"""
        J = self.J
        if J is None or J < min_exponent:
            raise NonDyadicLengthError(f"曲线长度 {self.T} 不是 2 的幂（J >= {min_exponent}）")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteInputError(f"曲线 {self.region or ''} 含有非有限值")
        return J


CurveLike = Union[Curve, np.ndarray, Sequence[float]]


def as_curve(curve: CurveLike) -> Curve:
    """把数组或 Curve 统一成 Curve"""
    if isinstance(curve, Curve):
        return curve
    return Curve(values=curve)


class CurveSet(BaseModel):
    """一组等长曲线（每行一个地区）"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regions: List[str]
    values: np.ndarray

    @field_validator('values', mode='before')
    @classmethod
    def _to_matrix(cls, v):
        array = _as_float_array(v)
        if array.ndim != 2:
            raise ValueError("曲线集必须是二维数组 (n, T)")
        return array

    @model_validator(mode='after')
    def _check_rows(self) -> 'CurveSet':
        if len(self.regions) != self.values.shape[0]:
            raise ValueError(f"地区数 {len(self.regions)} 与曲线行数 {self.values.shape[0]} 不一致")
        return self

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def T(self) -> int:
        return int(self.values.shape[1])

    def __iter__(self):
        for region, row in zip(self.regions, self.values):
            yield Curve(values=row, region=region)

    def __len__(self) -> int:
        return self.n

    def with_values(self, values: np.ndarray) -> 'CurveSet':
        return CurveSet(regions=list(self.regions), values=values)


class WaveletFilter(BaseModel):
    """正交小波滤波器对（低通 + 正交镜像高通）"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    low: np.ndarray
    high: np.ndarray

    @field_validator('low', 'high', mode='before')
    @classmethod
    def _to_array(cls, v):
        return _as_float_array(v)

    @model_validator(mode='after')
    def _check_filter(self) -> 'WaveletFilter':
        if self.low.shape != self.high.shape or self.low.size % 2:
            raise ValueError("低通/高通滤波器长度必须相同且为偶数")
        if abs(self.low.sum() - np.sqrt(2.0)) > 1e-12:
            raise ValueError(f"低通滤波器之和 {self.low.sum():.15f} 不等于 sqrt(2)")
        return self

    @classmethod
    def from_low(cls, name: str, low: Sequence[float]) -> 'WaveletFilter':
        """由低通滤波器构造正交镜像高通 g[k] = (-1)^k h[L-1-k]"""
        low = np.asarray(low, dtype=float)
        signs = (-1.0) ** np.arange(low.size)
        return cls(name=name, low=low, high=signs * low[::-1])

    @classmethod
    def symmlet(cls, name: str = "sym8") -> 'WaveletFilter':
        """从 PyWavelets 取 Symmlet 滤波器系数"""
        wavelet = pywt.Wavelet(name)
        if not wavelet.orthogonal:
            raise ValueError(f"{name} 不是正交小波")
        return cls.from_low(name, wavelet.rec_lo)

    @property
    def length(self) -> int:
        return int(self.low.size)


class DwtCoefficients(BaseModel):
    """
    周期正交 DWT 系数

    details 按尺度从粗到细排列：完全分解时 details[j] 对应尺度 j，长度 2^j。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    scaling: np.ndarray
    details: List[np.ndarray]

    @field_validator('scaling', mode='before')
    @classmethod
    def _scaling_array(cls, v):
        return _as_float_array(np.atleast_1d(v))

    @field_validator('details', mode='before')
    @classmethod
    def _detail_arrays(cls, v):
        return [_as_float_array(np.atleast_1d(d)) for d in v]

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def size(self) -> int:
        return int(self.scaling.size + sum(d.size for d in self.details))

    @property
    def coarsest_scale(self) -> int:
        """最粗细节尺度的下标 j（完全分解时为 0）"""
        return int(np.log2(self.scaling.size))

    def detail(self, j: int) -> np.ndarray:
        """尺度 j 的细节系数（j 越大越细）"""
        return self.details[j - self.coarsest_scale]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.scaling, *self.details])


class TidwtCoefficients(BaseModel):
    """
    平移不变 DWT 系数

    scaling 为 θ_0（长度 T），details[j-1] 为 θ_j（j = 1 为最细尺度，长度 T）。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    scaling: np.ndarray
    details: List[np.ndarray]

    @field_validator('scaling', mode='before')
    @classmethod
    def _scaling_array(cls, v):
        return _as_float_array(v)

    @field_validator('details', mode='before')
    @classmethod
    def _detail_arrays(cls, v):
        return [_as_float_array(d) for d in v]

    @model_validator(mode='after')
    def _check_bands(self) -> 'TidwtCoefficients':
        T = self.scaling.size
        if any(d.size != T for d in self.details):
            raise ValueError("所有 TIDWT 频带长度必须等于 T")
        return self

    @property
    def J(self) -> int:
        return len(self.details)

    @property
    def T(self) -> int:
        return int(self.scaling.size)

    def band(self, j: int) -> np.ndarray:
        """θ_j：j = 0 为尺度带，j = 1..J 为细节带"""
        return self.scaling if j == 0 else self.details[j - 1]

    def bands(self) -> np.ndarray:
        """(J+1, T) 矩阵，第 j 行为 θ_j"""
        return np.vstack([self.scaling, *self.details])


class FeatureMatrix(BaseModel):
    """n×(J+1) 对数能量特征 y_ij"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regions: List[str]
    values: np.ndarray
    kind: str = Field(default="ti", description="ti / dwt / centered / residual")

    @field_validator('values', mode='before')
    @classmethod
    def _to_matrix(cls, v):
        array = _as_float_array(v)
        if array.ndim == 1:
            array = _as_float_array(array[:, None])
        if array.ndim != 2:
            raise ValueError("特征矩阵必须是二维数组")
        return array

    @model_validator(mode='after')
    def _check_rows(self) -> 'FeatureMatrix':
        if len(self.regions) != self.values.shape[0]:
            raise ValueError("地区数与特征行数不一致")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteInputError("特征矩阵含有非有限值")
        return self

    @classmethod
    def from_array(cls, values, kind: str = "ti", regions: Optional[List[str]] = None) -> 'FeatureMatrix':
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if regions is None:
            regions = [f"r{i + 1}" for i in range(values.shape[0])]
        return cls(regions=list(regions), values=values, kind=kind)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def columns(self) -> List[str]:
        return [f"y{j}" for j in range(self.values.shape[1])]
