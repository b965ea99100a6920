"""
单指标回归服务 - 特征对协变量的 profiling 回归、残差与协变量效应

链接函数 ν̂ 在所有 J+1 列之间共享：对列中心化响应的行均值做
Nadaraya-Watson 估计，等价于最小化按列合并的平方损失。
"""
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from loguru import logger
from scipy.optimize import minimize
from scipy.stats import gaussian_kde, norm

from src.models.curves import CurveSet, FeatureMatrix
from src.models.regression import (
    CovariateEffect, Covariates, IndexFit, IndexOptions, ResidualMatrix
)
from src.utils.exceptions import (
    DegenerateCovariatesError, EmptyInputError, EmptyNeighborhoodError,
    NonPositiveEffectError, OptimizerFailureError
)


def _angles_to_sphere(theta: np.ndarray) -> np.ndarray:
    """超球面角参数化：m-1 个角 -> R^m 单位向量"""
    theta = np.atleast_1d(theta)
    m = theta.size + 1
    x = np.ones(m)
    sin_prod = 1.0
    for k in range(m - 1):
        x[k] = sin_prod * np.cos(theta[k])
        sin_prod *= np.sin(theta[k])
    x[m - 1] = sin_prod
    return x


def _sphere_to_angles(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = x.size
    theta = np.zeros(m - 1)
    for k in range(m - 2):
        tail = np.linalg.norm(x[k:])
        theta[k] = np.arccos(np.clip(x[k] / tail, -1.0, 1.0)) if tail > 0 else 0.0
    theta[m - 2] = np.arctan2(x[m - 1], x[m - 2])
    return theta


def _fix_sign(gamma: np.ndarray) -> np.ndarray:
    """第一个非零分量取正，并精确归一化"""
    gamma = gamma / np.linalg.norm(gamma)
    nonzero = np.flatnonzero(gamma != 0.0)
    if nonzero.size and gamma[nonzero[0]] < 0:
        gamma = -gamma
    return gamma + 0.0


def nadaraya_watson(index_values: np.ndarray, responses: np.ndarray, u, bandwidth: float,
                    leave_one_out: bool = False, den_floor: float = 1e-300) -> np.ndarray:
    """
    Gaussian 核 Nadaraya-Watson 估计

    Args:
        index_values: 训练指标值 (n,)
        responses: 训练响应 (n,) 或 (n, p)
        u: 评估点（标量或数组）
        bandwidth: 带宽 h
        leave_one_out: 为真时 u 必须就是训练指标值，去掉自身项

    Returns:
        与 u 形状对应的估计值；responses 为二维时多一维
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    weights = norm.pdf((index_values[None, :] - u[:, None]) / bandwidth)
    if leave_one_out:
        if u.size != index_values.size:
            raise ValueError("leave-one-out 只能在训练点上评估")
        np.fill_diagonal(weights, 0.0)
    denominator = weights.sum(axis=1)
    if np.any(denominator <= den_floor):
        bad = u[denominator <= den_floor]
        raise EmptyNeighborhoodError(f"核权重之和下溢，评估点 {bad[:5]} 远离指标范围")
    return (weights @ responses) / (denominator[:, None] if np.ndim(responses) == 2 else denominator)


def center_features(features: FeatureMatrix) -> FeatureMatrix:
    """ŷ*_ij = y_ij - 列均值"""
    if features.n < 2:
        raise EmptyInputError(f"至少需要 2 个地区，当前 {features.n}")
    centered = features.values - features.values.mean(axis=0)
    return FeatureMatrix(regions=list(features.regions), values=centered, kind="centered")


class SingleIndexRegressor:
    """单指标回归服务"""

    def __init__(self, options: Optional[IndexOptions] = None):
        self.options = options or IndexOptions()

    # ------------------------------------------------------------------ 带宽与损失

    def bandwidth_for(self, index_values: np.ndarray) -> float:
        """h = C n^(-1/5)，C 默认为指标值的经验标准差"""
        if self.options.bandwidth is not None:
            return float(self.options.bandwidth)
        n = index_values.size
        C = self.options.bandwidth_constant
        if C is None:
            C = float(np.std(index_values, ddof=1))
        return C * n ** (-0.2)

    def _pooled_loss(self, gamma: np.ndarray, X: np.ndarray, Y: np.ndarray,
                     bandwidth: Optional[float] = None) -> float:
        z = X @ gamma
        h = self.bandwidth_for(z) if bandwidth is None else bandwidth
        if not np.isfinite(h) or h <= 0:
            return np.inf
        try:
            fitted = nadaraya_watson(z, Y.mean(axis=1), z, h, self.options.leave_one_out,
                                     self.options.den_floor)
        except EmptyNeighborhoodError:
            return np.inf
        return float(np.sum((Y - fitted[:, None]) ** 2))

    # ------------------------------------------------------------------ 拟合

    def _check_inputs(self, features: FeatureMatrix, covariates: Covariates):
        if features.n != covariates.n:
            raise EmptyInputError(f"特征行数 {features.n} 与协变量行数 {covariates.n} 不一致")
        if covariates.n <= covariates.d:
            raise DegenerateCovariatesError(f"需要 n > d，当前 n={covariates.n}, d={covariates.d}")
        sd = covariates.values.std(axis=0)
        if np.any(sd <= 0):
            bad = [covariates.names[k] for k in np.flatnonzero(sd <= 0)]
            raise DegenerateCovariatesError(f"协变量方差为零: {bad}")

    def _initial_directions(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """OLS 方向 + 固定种子的随机单位向量"""
        rng = np.random.default_rng(self.options.seed)
        m = X.shape[1]
        design = np.column_stack([np.ones(X.shape[0]), X])
        beta, *_ = np.linalg.lstsq(design, Y.mean(axis=1), rcond=None)
        ols = beta[1:]
        draws = rng.standard_normal((self.options.candidates, m))
        directions = [ols] if np.linalg.norm(ols) > 0 else []
        directions.extend(draws)
        return np.array([v / np.linalg.norm(v) for v in directions])

    def _search(self, X: np.ndarray, Y: np.ndarray) -> Tuple[np.ndarray, float]:
        """在单位球面上多起点 Nelder-Mead 搜索"""
        m = X.shape[1]
        if m == 1:
            gamma = np.ones(1)
            return gamma, self._pooled_loss(gamma, X, Y)

        directions = self._initial_directions(X, Y)
        fixed_h = None
        if not self.options.recompute_bandwidth:
            fixed_h = self.bandwidth_for(X @ directions[0])

        screened = [(self._pooled_loss(v, X, Y, fixed_h), i) for i, v in enumerate(directions)]
        screened = sorted((loss, i) for loss, i in screened if np.isfinite(loss))
        if not screened:
            raise OptimizerFailureError("所有初始方向的损失都不是有限值")

        def objective(theta):
            return self._pooled_loss(_angles_to_sphere(theta), X, Y, fixed_h)

        best_loss, best_gamma = screened[0][0], directions[screened[0][1]]
        for restart, (start_loss, i) in enumerate(screened[:self.options.restarts]):
            result = minimize(
                objective, _sphere_to_angles(directions[i]), method="Nelder-Mead",
                options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 400 * m}
            )
            logger.debug(f"重启 {restart}: 初始损失 {start_loss:.6f} -> {result.fun:.6f}")
            if np.isfinite(result.fun) and result.fun < best_loss:
                best_loss, best_gamma = float(result.fun), _angles_to_sphere(result.x)
        return best_gamma, best_loss

    def _build_fit(self, gamma: np.ndarray, X: np.ndarray, centered: FeatureMatrix,
                   means: np.ndarray, zero_index: Optional[int] = None) -> IndexFit:
        z = X @ gamma
        h = self.bandwidth_for(z)
        loss = self._pooled_loss(gamma, X, centered.values, h)
        return IndexFit(
            gamma=gamma, bandwidth=h, index_values=z, responses=centered.values,
            response_means=means, design=X, regions=list(centered.regions),
            leave_one_out=self.options.leave_one_out, zero_index=zero_index,
            loss=loss, den_floor=self.options.den_floor,
        )

    def fit_gamma(self, features: FeatureMatrix, covariates: Covariates,
                  bandwidth: Optional[float] = None) -> IndexFit:
        """
        profiling 估计 γ̂：最小化按列合并的经验平方损失

        Args:
            features: 未中心化的特征矩阵 y_ij
            covariates: 协变量 X
            bandwidth: 固定带宽，None 时按 C n^(-1/5) 规则

        Returns:
            IndexFit，||γ̂|| = 1 且第一个分量为正
        """
        return self._fit(features, covariates, bandwidth, zero_index=None)

    def fit_gamma_constrained(self, features: FeatureMatrix, covariates: Covariates,
                              zero_index: int, bandwidth: Optional[float] = None) -> IndexFit:
        """固定 γ_k = 0 后在剩余 d-1 维单位球面上拟合"""
        if covariates.d < 2:
            raise DegenerateCovariatesError("约束拟合需要 d >= 2")
        if not 0 <= zero_index < covariates.d:
            raise ValueError(f"zero_index={zero_index} 超出 0..{covariates.d - 1}")
        return self._fit(features, covariates, bandwidth, zero_index=zero_index)

    def _fit(self, features: FeatureMatrix, covariates: Covariates,
             bandwidth: Optional[float], zero_index: Optional[int]) -> IndexFit:
        self._check_inputs(features, covariates)
        if bandwidth is not None:
            return SingleIndexRegressor(self.options.model_copy(update={"bandwidth": bandwidth}))._fit(
                features, covariates, None, zero_index)

        centered = center_features(features)
        means = features.values.mean(axis=0)
        X = covariates.values
        free = [k for k in range(covariates.d) if k != zero_index]
        label = "无约束" if zero_index is None else f"约束 γ[{zero_index}]=0"
        logger.info(f"单指标拟合（{label}）: n={covariates.n}, d={covariates.d}, 特征列={features.values.shape[1]}")

        sub_gamma, _ = self._search(X[:, free], centered.values)
        gamma = np.zeros(covariates.d)
        gamma[free] = sub_gamma
        gamma = _fix_sign(gamma)

        fit = self._build_fit(gamma, X, centered, means, zero_index)
        logger.success(f"γ̂ = {np.round(fit.gamma, 4).tolist()}, h = {fit.bandwidth:.4f}, 损失 = {fit.loss:.6f}")
        return fit

    def fit_mean_response(self, curves: CurveSet, covariates: Covariates) -> IndexFit:
        """对时间均值 W̄_i 做单指标回归（adjustFirst 使用）"""
        means = FeatureMatrix(regions=list(curves.regions), values=curves.values.mean(axis=1)[:, None],
                              kind="mean")
        return self.fit_gamma(means, covariates)

    # ------------------------------------------------------------------ 评估

    @staticmethod
    def nw_estimate(fit: IndexFit, u, column: Optional[int] = None,
                    gamma: Optional[np.ndarray] = None) -> np.ndarray:
        """
        ν̂(u)：column 为 None 时是共享链接（行均值），否则是第 column 列的核平均

        gamma 不为空时用 Xγ 代替拟合时的训练指标值。
        """
        z = fit.index_values if gamma is None else fit.design @ np.asarray(gamma, dtype=float)
        y = fit.responses.mean(axis=1) if column is None else fit.responses[:, column]
        value = nadaraya_watson(z, y, u, fit.bandwidth, den_floor=fit.den_floor)
        return value[0] if np.ndim(u) == 0 else value

    @staticmethod
    def fitted_link(fit: IndexFit) -> np.ndarray:
        """训练点上的 ν̂(X_iᵀγ̂)"""
        return nadaraya_watson(fit.index_values, fit.responses.mean(axis=1), fit.index_values,
                               fit.bandwidth, fit.leave_one_out, fit.den_floor)

    def residuals(self, fit: IndexFit) -> ResidualMatrix:
        """ξ̂_ij = ŷ*_ij - ν̂(X_iᵀγ̂)，所有列用同一个链接"""
        fitted = self.fitted_link(fit)
        return ResidualMatrix(regions=list(fit.regions), values=fit.responses - fitted[:, None])

    @staticmethod
    def pooled_loss(fit: IndexFit) -> float:
        return fit.loss

    def link_at(self, fit: IndexFit, covariates: Covariates) -> np.ndarray:
        """任意协变量行上的 ν̂(xᵀγ̂)"""
        if covariates.d != fit.d:
            raise ValueError(f"协变量维度 {covariates.d} 与 γ̂ 维度 {fit.d} 不一致")
        if np.array_equal(covariates.values, fit.design):
            return self.fitted_link(fit)
        return np.atleast_1d(self.nw_estimate(fit, covariates.values @ fit.gamma))

    def covariate_effect(self, fit: IndexFit, covariates: Optional[Covariates] = None,
                         scale: str = "log") -> CovariateEffect:
        """
        μ̂(x)，按样本均值归一化到 1

        scale="log" 时 μ̂ = exp(ν̂)（特征是对数尺度）；scale="linear" 时
        μ̂ = ν̂ + 响应均值（用于 W̄_i 这类原始尺度的响应）。
        """
        if covariates is None:
            link = self.fitted_link(fit)
            regions = list(fit.regions)
        else:
            link = self.link_at(fit, covariates)
            regions = list(covariates.regions)

        if scale == "log":
            raw = np.exp(link)
        elif scale == "linear":
            raw = link + float(fit.response_means.mean())
        else:
            raise ValueError(f"未知的效应尺度: {scale}")
        if np.any(raw <= 0):
            raise NonPositiveEffectError(f"{int(np.sum(raw <= 0))} 个地区的协变量效应非正")
        normalization = float(raw.mean())
        return CovariateEffect(regions=regions, values=raw / normalization,
                               normalization=normalization, scale=scale)

    @staticmethod
    def adjust_curves(curves: CurveSet, effect: CovariateEffect) -> CurveSet:
        """W_i / μ̂_i"""
        if len(effect.regions) != curves.n:
            raise ValueError(f"效应个数 {len(effect.regions)} 与曲线数 {curves.n} 不一致")
        values = effect.values
        if list(effect.regions) != list(curves.regions) and set(effect.regions) == set(curves.regions):
            lookup = dict(zip(effect.regions, effect.values))
            values = np.array([lookup[r] for r in curves.regions])
        if np.any(values <= 0):
            raise NonPositiveEffectError("协变量效应必须为正")
        return curves.with_values(curves.values / values[:, None])

    def log_odds(self, fit: IndexFit, x: Sequence[float], x_prime: Sequence[float]) -> float:
        """ν̂(xᵀγ̂) - ν̂(x'ᵀγ̂)，可解释为对数优势比"""
        u = np.array([np.dot(x, fit.gamma), np.dot(x_prime, fit.gamma)])
        values = self.nw_estimate(fit, u)
        return float(values[0] - values[1])

    def link_error(self, fit: IndexFit, true_link: Callable[[np.ndarray], np.ndarray],
                   true_gamma: Sequence[float], covariates: Optional[Covariates] = None,
                   effect_scale: str = "log") -> float:
        """
        e = (1/n²) ΣΣ [(ν̂_i - ν̂_i') - (ν_i - ν_i')]²

        true_link 必须与 ν̂ 同尺度（特征回归时为 ln μ）。effect_scale="linear"
        时比较的是 ln μ̄ 的差。
        """
        X = fit.design if covariates is None else covariates.values
        if effect_scale == "linear":
            cov = covariates or Covariates.from_array(X, regions=list(fit.regions))
            estimated = np.log(self.covariate_effect(fit, cov, scale="linear").values)
        elif covariates is None:
            estimated = self.fitted_link(fit)
        else:
            estimated = self.link_at(fit, covariates)
        truth = np.asarray(true_link(X @ np.asarray(true_gamma, dtype=float)), dtype=float)
        diff_hat = estimated[:, None] - estimated[None, :]
        diff_true = truth[:, None] - truth[None, :]
        return float(np.mean((diff_hat - diff_true) ** 2))

    # ------------------------------------------------------------------ 报表

    def constrained_refits(self, features: FeatureMatrix, covariates: Covariates) -> pd.DataFrame:
        """无约束拟合 + 每个系数依次置零的约束拟合"""
        rows = []
        fits = [("gamma_hat", self.fit_gamma(features, covariates))]
        for k in range(covariates.d):
            fits.append((f"test_{k + 1}", self.fit_gamma_constrained(features, covariates, k)))
        for label, fit in fits:
            row = {"fit": label}
            row.update({name: value for name, value in zip(covariates.names, fit.gamma)})
            row["loss"] = fit.loss
            rows.append(row)
        return pd.DataFrame(rows)

    def effect_profile(self, fit: IndexFit, coverage: float = 0.9, points: int = 200) -> pd.DataFrame:
        """覆盖中间 coverage 比例指标值的网格上的 μ̂ 和指标密度"""
        lower, upper = np.quantile(fit.index_values, [(1 - coverage) / 2, (1 + coverage) / 2])
        grid = np.linspace(lower, upper, points)
        link = self.nw_estimate(fit, grid)
        normalization = float(np.exp(self.fitted_link(fit)).mean())
        kde = gaussian_kde(fit.index_values, bw_method=fit.n ** (-0.2))
        return pd.DataFrame({
            "index": grid,
            "mu_hat": np.exp(link) / normalization,
            "density": kde(grid),
        })

    @staticmethod
    def region_report(fit: IndexFit, covariates: Covariates, effect: CovariateEffect) -> pd.DataFrame:
        """每个地区的协变量、指标 X_iᵀγ̂ 和 μ̂"""
        frame = pd.DataFrame(covariates.values, columns=covariates.names)
        frame.insert(0, "region", list(covariates.regions))
        frame["index"] = covariates.values @ fit.gamma
        frame["mu_hat"] = effect.values
        return frame

    def fit_report(self, fit: IndexFit, covariates: Covariates, effect: CovariateEffect) -> str:
        """结构化文本报告（YAML）"""
        report = {
            "gamma": {name: float(g) for name, g in zip(covariates.names, fit.gamma)},
            "bandwidth": float(fit.bandwidth),
            "pooled_loss": float(self.pooled_loss(fit)),
            "leave_one_out": fit.leave_one_out,
            "zero_index": fit.zero_index,
            "standardized": covariates.standardized,
            "regions": [
                {"region": region, "index": float(z), "mu_hat": float(mu)}
                for region, z, mu in zip(covariates.regions, covariates.values @ fit.gamma, effect.values)
            ],
        }
        if covariates.standardized:
            report["center"] = {name: float(c) for name, c in zip(covariates.names, covariates.center)}
            report["scale"] = {name: float(s) for name, s in zip(covariates.names, covariates.scale)}
        return yaml.safe_dump(report, sort_keys=False, allow_unicode=True)


# 导出服务实例
sindex_service = SingleIndexRegressor()
