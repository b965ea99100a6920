"""
评估服务 - ARI、流程变体（crftiw / noTI / noCov / adjustFirst）与簇统计
"""
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from sklearn.metrics import adjusted_rand_score

from src.models.curves import CurveSet
from src.models.mixture import MixtureOptions, Partition
from src.models.regression import CovariateEffect, Covariates, IndexOptions
from src.models.results import METHODS, ClusterSummary, VariantResult
from src.models.simulation import Replicate
from src.utils.exceptions import EmptyClusterError, LengthMismatchError
from src.wavelets import get_extractor
from services.npmix_service import NonparametricMixture
from services.sindex_service import SingleIndexRegressor, center_features

PartitionLike = Union[Partition, Sequence[int], np.ndarray]


def _labels(p: PartitionLike) -> np.ndarray:
    return p.labels if isinstance(p, Partition) else np.asarray(p)


def ari(p: PartitionLike, q: PartitionLike) -> float:
    """
    调整兰德指数，与标签的编号无关

    两个划分完全一致（包括都只有一个簇或 n=1）时返回 1。
    """
    a, b = _labels(p), _labels(q)
    if a.size != b.size:
        raise LengthMismatchError(f"划分长度不一致: {a.size} vs {b.size}")
    if a.size == 0:
        raise LengthMismatchError("划分不能为空")
    return float(adjusted_rand_score(a.ravel(), b.ravel()))


class EvaluationService:
    """流程变体与评分"""

    def __init__(self, index_options: Optional[IndexOptions] = None,
                 mixture_options: Optional[MixtureOptions] = None, wavelet: str = "sym8"):
        self.regressor = SingleIndexRegressor(index_options)
        self.mixture = NonparametricMixture(mixture_options)
        self.wavelet = wavelet

    def run_variant(self, method: str, curves: CurveSet, covariates: Covariates, L: int) -> VariantResult:
        """
        运行一个流程变体

        Args:
            method: crftiw / noTI / noCov / adjustFirst
            curves: n 条曲线
            covariates: n×d 协变量
            L: 成分数

        Returns:
            VariantResult（noCov 没有 fit 和 effect）
        """
        if method not in METHODS:
            raise ValueError(f"未知的方法: {method}，可选 {METHODS}")
        logger.info(f"运行 {method}: n={curves.n}, T={curves.T}, L={L}")

        fit = effect = None
        if method in ("crftiw", "noTI"):
            kind = "ti" if method == "crftiw" else "dwt"
            features = get_extractor(kind, self.wavelet).featurize_batch(curves)
            fit = self.regressor.fit_gamma(features, covariates)
            effect = self.regressor.covariate_effect(fit)
            data = self.regressor.residuals(fit)
        elif method == "noCov":
            data = center_features(get_extractor("ti", self.wavelet).featurize_batch(curves))
        else:
            fit = self.regressor.fit_mean_response(curves, covariates)
            effect = self.regressor.covariate_effect(fit, scale="linear")
            adjusted = self.regressor.adjust_curves(curves, effect)
            data = center_features(get_extractor("ti", self.wavelet).featurize_batch(adjusted))

        model, post = self.mixture.fit(data, L)
        partition = self.mixture.map_assign(post)
        return VariantResult(method=method, partition=partition, posteriors=post,
                             mixture=model, fit=fit, effect=effect)

    def score_variant(self, method: str, replicate: Replicate, L: int = 3) -> dict:
        """在模拟副本上运行变体并计算 ARI、|γ̂₁ - γ₁| 与 e_{ν̂,γ̂}"""
        result = self.run_variant(method, replicate.curves, replicate.covariates, L)
        scores = {
            "ari": ari(result.partition, replicate.labels),
            "gamma1_err": float("nan"),
            "link_err": float("nan"),
        }
        if result.fit is not None:
            scores["gamma1_err"] = float(abs(result.fit.gamma[0] - replicate.gamma[0]))
            if method == "adjustFirst":
                scores["link_err"] = self.regressor.link_error(
                    result.fit, replicate.log_link, replicate.gamma,
                    covariates=replicate.covariates, effect_scale="linear")
            else:
                scores["link_err"] = self.regressor.link_error(result.fit, replicate.log_link, replicate.gamma)
        return scores

    @staticmethod
    def cluster_summary(partition: Partition, curves: CurveSet, effect: Optional[CovariateEffect] = None,
                        L: Optional[int] = None, strict: bool = False) -> ClusterSummary:
        """
        每簇的比例、调整后总量（Σ_t W_it / μ̂_i）的均值与标准差、协变量效应的均值与标准差

        簇按调整后总量均值递增重新编号为 1..K。L 给定时，1..L 中没有成员的簇
        被记录为空簇；strict=True 时抛出 EmptyClusterError。
        """
        if partition.n != curves.n:
            raise LengthMismatchError(f"划分长度 {partition.n} 与曲线数 {curves.n} 不一致")
        effect_values = np.ones(curves.n) if effect is None else effect.values
        if effect_values.size != curves.n:
            raise LengthMismatchError("协变量效应个数与曲线数不一致")

        labels = partition.labels
        present = np.unique(labels)
        empty = [] if L is None else [k for k in range(1, L + 1) if k not in set(present.tolist())]
        if empty:
            if strict:
                raise EmptyClusterError(f"空簇: {empty}")
            logger.warning(f"以下簇没有成员，已从统计中略去: {empty}")

        frame = pd.DataFrame({
            "label": labels,
            "total": curves.values.sum(axis=1) / effect_values,
            "effect": effect_values,
        })
        grouped = frame.groupby("label").agg(
            size=("total", "size"),
            total_mean=("total", "mean"),
            total_sd=("total", "std"),
            effect_mean=("effect", "mean"),
            effect_sd=("effect", "std"),
        )
        grouped = grouped.sort_values("total_mean", kind="stable")
        relabel = {int(old): new for new, old in enumerate(grouped.index, start=1)}

        table = grouped.reset_index(drop=True)
        table.insert(0, "cluster", np.arange(1, len(table) + 1))
        table.insert(2, "proportion", table["size"] / curves.n)
        return ClusterSummary(table=table, relabel=relabel, empty_clusters=empty)


# 导出服务实例
evaluation_service = EvaluationService()
