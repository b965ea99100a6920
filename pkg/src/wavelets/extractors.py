"""TIDWT / DWT 特征提取器"""
from typing import Union

import numpy as np

from src.models.curves import CurveLike, WaveletFilter
from src.wavelets.base import BaseFeatureExtractor
from src.wavelets.transforms import dwt_forward, tidwt_forward


class TiFeatureExtractor(BaseFeatureExtractor):
    """平移不变特征：TIDWT 各频带的对数范数"""

    kind = "ti"

    def band_norms(self, curve: CurveLike) -> np.ndarray:
        coeffs = tidwt_forward(curve, self.wavelet)
        return np.linalg.norm(coeffs.bands(), axis=1)


class DwtFeatureExtractor(BaseFeatureExtractor):
    """正交 DWT 特征（noTI 对照），频带顺序与 TI 版本一致"""

    kind = "dwt"

    def band_norms(self, curve: CurveLike) -> np.ndarray:
        coeffs = dwt_forward(curve, self.wavelet)
        J = coeffs.levels
        norms = [np.linalg.norm(coeffs.scaling)]
        # 第 j 层（j = 1 最细）对应尺度下标 J - j
        norms.extend(np.linalg.norm(coeffs.detail(J - j)) for j in range(1, J + 1))
        return np.asarray(norms)


EXTRACTORS = {
    "ti": TiFeatureExtractor,
    "dwt": DwtFeatureExtractor,
}


def get_extractor(kind: str = "ti", wavelet: Union[str, WaveletFilter] = "sym8",
                  norm_floor: float = 1e-12) -> BaseFeatureExtractor:
    """按名称取特征提取器"""
    try:
        return EXTRACTORS[kind](wavelet=wavelet, norm_floor=norm_floor)
    except KeyError:
        raise ValueError(f"未知的特征类型: {kind}（可选 {list(EXTRACTORS)}）")


def featurize_ti(curve: CurveLike, wavelet: Union[str, WaveletFilter] = "sym8",
                 norm_floor: float = 1e-12) -> np.ndarray:
    return TiFeatureExtractor(wavelet, norm_floor).featurize(curve)


def featurize_dwt(curve: CurveLike, wavelet: Union[str, WaveletFilter] = "sym8",
                  norm_floor: float = 1e-12) -> np.ndarray:
    return DwtFeatureExtractor(wavelet, norm_floor).featurize(curve)
