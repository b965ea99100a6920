"""小波特征提取基类"""
from abc import ABC, abstractmethod
from typing import Union

import numpy as np

from src.models.curves import CurveLike, CurveSet, FeatureMatrix, WaveletFilter, as_curve
from src.utils.exceptions import DegenerateScaleError
from src.utils.logger import logger


class BaseFeatureExtractor(ABC):
    """每个尺度一个对数范数特征的提取器基类"""

    kind = "base"

    def __init__(self, wavelet: Union[str, WaveletFilter] = "sym8", norm_floor: float = 1e-12):
        if isinstance(wavelet, str):
            wavelet = WaveletFilter.symmlet(wavelet)
        self.wavelet = wavelet
        self.norm_floor = norm_floor

    @abstractmethod
    def band_norms(self, curve: CurveLike) -> np.ndarray:
        """
        计算每个尺度的 L2 范数

        Args:
            curve: 长度 2^J 的曲线

        Returns:
            长度 J+1 的数组，第 0 项为尺度带，第 j 项为第 j 层细节（j = 1 最细）
        """
        pass

    def featurize(self, curve: CurveLike) -> np.ndarray:
        """y_j = ln ||θ_j||_2，退化尺度直接报错"""
        norms = self.band_norms(curve)
        degenerate = np.flatnonzero(norms <= self.norm_floor)
        if degenerate.size:
            raise DegenerateScaleError(degenerate.tolist())
        return np.log(norms)

    def featurize_batch(self, curves: CurveSet) -> FeatureMatrix:
        """对曲线集逐行提取特征"""
        logger.info(f"提取 {self.kind} 特征: {curves.n} 条曲线, T={curves.T}, 小波={self.wavelet.name}")
        rows = []
        for curve in curves:
            try:
                rows.append(self.featurize(curve))
            except DegenerateScaleError as e:
                logger.error(f"地区 {curve.region} 特征提取失败: {e}")
                raise
        features = FeatureMatrix(regions=list(curves.regions), values=np.vstack(rows), kind=self.kind)
        logger.success(f"特征提取完成: {features.values.shape}")
        return features

    def __call__(self, curve: CurveLike) -> np.ndarray:
        return self.featurize(as_curve(curve))
