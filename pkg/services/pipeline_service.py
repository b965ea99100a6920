"""
流水线服务 - 特征提取、单指标回归、非参数混合聚类三步串联并写出所有中间结果
"""
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.models.curves import CurveSet, FeatureMatrix
from src.models.mixture import MixtureOptions
from src.models.pipeline import PipelineConfig
from src.models.regression import CovariateEffect, Covariates, IndexOptions
from src.utils.config import Config
from src.wavelets import get_extractor
from services.evaluation_service import EvaluationService, ari
from services.ingest_service import ingest_service, truncate_to_dyadic
from services.npmix_service import NonparametricMixture
from services.sindex_service import SingleIndexRegressor, center_features


def index_options_for(config: PipelineConfig) -> IndexOptions:
    """defaults.yaml 的 sindex 节 + 流水线覆盖项"""
    values = {k: v for k, v in Config.section("sindex").items() if k in IndexOptions.model_fields}
    values["seed"] = config.seed
    values["leave_one_out"] = config.leave_one_out
    if config.bandwidth_constant is not None:
        values["bandwidth_constant"] = config.bandwidth_constant
    return IndexOptions(**values)


def mixture_options_for(config: PipelineConfig) -> MixtureOptions:
    values = {k: v for k, v in Config.section("npmix").items() if k in MixtureOptions.model_fields}
    values["seed"] = config.seed
    if config.mixture_bandwidth_constant is not None:
        values["bandwidth_constant"] = config.mixture_bandwidth_constant
    return MixtureOptions(**values)


class PipelineService:
    """完整聚类流水线"""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.regressor = SingleIndexRegressor(index_options_for(config))
        self.mixture = NonparametricMixture(mixture_options_for(config))
        self.output_dir = Path(config.output_dir)
        self.paths: Dict[str, Path] = {}

    def _load(self) -> tuple:
        curves = ingest_service.read_curves(self.config.curves_path)
        if self.config.truncate_to_dyadic:
            kept = truncate_to_dyadic(curves.values)
            if kept.shape[1] != curves.T:
                logger.info(f"截断到最后 {kept.shape[1]} 个时间点（原长 {curves.T}）")
            curves = curves.with_values(kept)
        covariates = None
        if self.config.covariates_path is not None:
            covariates = ingest_service.read_covariates(self.config.covariates_path, curves.regions)
            if self.config.standardize_covariates:
                covariates = covariates.standardize()
        return curves, covariates

    def _write(self, name: str, path: Path):
        self.paths[name] = path

    def _report(self, fit, covariates: Covariates, scale: str = "log") -> CovariateEffect:
        """写出回归报告与每个地区的效应"""
        effect = self.regressor.covariate_effect(fit, scale=scale)
        report_path = self.output_dir / "indexfit.yaml"
        report_path.write_text(self.regressor.fit_report(fit, covariates, effect), encoding="utf-8")
        self._write("indexfit", report_path)
        self._write("effects", ingest_service.write_table(
            self.regressor.region_report(fit, covariates, effect), self.output_dir / "effects.csv"))
        if scale == "log":
            self._write("profile", ingest_service.write_table(
                self.regressor.effect_profile(fit), self.output_dir / "effect_profile.csv"))
        return effect

    def _residualize(self, curves: CurveSet, covariates: Optional[Covariates]):
        """按方法得到聚类输入，返回 (输入矩阵, 协变量效应)"""
        method = self.config.method
        effect: Optional[CovariateEffect] = None

        if method == "adjustFirst":
            fit = self.regressor.fit_mean_response(curves, covariates)
            effect = self._report(fit, covariates, scale="linear")
            curves = self.regressor.adjust_curves(curves, effect)

        kind = "dwt" if method == "noTI" else "ti"
        features = get_extractor(kind, self.config.wavelet).featurize_batch(curves)
        self._write("features", ingest_service.write_features(features, self.output_dir / "features.csv"))

        if method in ("crftiw", "noTI"):
            fit = self.regressor.fit_gamma(features, covariates)
            effect = self._report(fit, covariates)
            if self.config.refits and covariates.d >= 2:
                self._write("refits", ingest_service.write_table(
                    self.regressor.constrained_refits(features, covariates), self.output_dir / "refits.csv"))
            data = self.regressor.residuals(fit)
        else:
            data = center_features(features)
        self._write("residuals", ingest_service.write_features(data, self.output_dir / "residuals.csv"))
        return data, effect

    def _choose_L(self, data: FeatureMatrix) -> int:
        config = self.config
        if config.L is not None:
            return config.L
        table = self.mixture.fit_by_L(data, l_max=min(config.l_max, data.n), l_min=config.l_min)
        self._write("loglik", ingest_service.write_loglik(table, self.output_dir / "loglik_by_L.csv"))
        if len(table) < 2:
            return int(table["L"].iloc[0])
        chosen = config.l_min - 1 + self.mixture.select_L(table["loglik"].to_numpy(), config.tau)
        logger.info(f"肘部规则（τ={config.tau}）选择 L = {chosen}")
        return chosen

    def run(self) -> Dict[str, Path]:
        """
        运行流水线

        Returns:
            产物名称到文件路径的映射
        """
        config = self.config
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"流水线开始: 方法={config.method}, 输出目录={self.output_dir}")

        curves, covariates = self._load()
        data, effect = self._residualize(curves, covariates)

        L = self._choose_L(data)
        model, post = self.mixture.fit(data, L)
        partition = self.mixture.map_assign(post)
        if "loglik" not in self.paths:
            table = pd.DataFrame({"L": [L], "loglik": [model.loglik], "iterations": [model.iterations]})
            self._write("loglik", ingest_service.write_loglik(table, self.output_dir / "loglik_by_L.csv"))
        self._write("partition", ingest_service.write_partition(
            partition, self.output_dir / "partition.csv", posteriors=post))
        mixture_path = self.output_dir / "mixture.yaml"
        mixture_path.write_text(self.mixture.model_report(model), encoding="utf-8")
        self._write("mixture", mixture_path)

        summary = EvaluationService.cluster_summary(partition, curves, effect, L=L)
        self._write("summary", ingest_service.write_table(summary.table, self.output_dir / "cluster_summary.csv"))

        if config.labels_path is not None:
            truth = ingest_service.read_partition(config.labels_path)
            order = pd.Series(np.arange(truth.n), index=truth.regions).loc[list(partition.regions)].to_numpy()
            score = ari(partition, truth.labels[order])
            logger.info(f"与真实划分的 ARI = {score:.4f}")
            ari_path = self.output_dir / "ari.txt"
            ari_path.write_text(f"{score:.17g}\n", encoding="utf-8")
            self._write("ari", ari_path)

        logger.success(f"流水线完成: L={L}, 产物 {len(self.paths)} 个")
        return dict(self.paths)


def run_pipeline(config: PipelineConfig) -> Dict[str, Path]:
    return PipelineService(config).run()
