"""小波变换与特征提取模块"""
from src.wavelets.base import BaseFeatureExtractor
from src.wavelets.extractors import (
    TiFeatureExtractor, DwtFeatureExtractor, get_extractor, featurize_ti, featurize_dwt
)
from src.wavelets.transforms import (
    circular_shift, dwt_forward, dwt_inverse, tidwt_forward, tidwt_energy, parseval_check
)

__all__ = [
    'BaseFeatureExtractor', 'TiFeatureExtractor', 'DwtFeatureExtractor',
    'get_extractor', 'featurize_ti', 'featurize_dwt',
    'circular_shift', 'dwt_forward', 'dwt_inverse', 'tidwt_forward',
    'tidwt_energy', 'parseval_check',
]
