"""数据模型模块"""
from src.models.curves import (
    Curve, CurveSet, WaveletFilter, DwtCoefficients, TidwtCoefficients, FeatureMatrix
)
from src.models.regression import Covariates, IndexOptions, IndexFit, ResidualMatrix, CovariateEffect
from src.models.mixture import MixtureOptions, DensityTable, MixtureModel, Posteriors, Partition
from src.models.simulation import ScenarioConfig, Replicate
from src.models.results import BenchmarkConfig, BenchmarkRow, ClusterSummary, VariantResult
from src.models.pipeline import PipelineConfig

__all__ = [
    'Curve', 'CurveSet', 'WaveletFilter', 'DwtCoefficients', 'TidwtCoefficients', 'FeatureMatrix',
    'Covariates', 'IndexOptions', 'IndexFit', 'ResidualMatrix', 'CovariateEffect',
    'MixtureOptions', 'DensityTable', 'MixtureModel', 'Posteriors', 'Partition',
    'ScenarioConfig', 'Replicate',
    'BenchmarkConfig', 'BenchmarkRow', 'ClusterSummary', 'VariantResult',
    'PipelineConfig',
]
