"""
非参数混合聚类服务 - 平滑对数似然的 MM 算法

核权重在网格上按梯形求积归一化，M 步得到的密度表在同一求积下恰好积分为 1，
因此每次迭代平滑对数似然不减（密度下限带来的误差可忽略）。
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from loguru import logger
from scipy.special import logsumexp
from scipy.stats import norm
from sklearn.cluster import KMeans

from src.models.curves import FeatureMatrix
from src.models.mixture import DensityTable, MixtureModel, MixtureOptions, Partition, Posteriors
from src.utils.exceptions import (
    EmptyComponentError, GridMismatchError, InvalidLError, TooFewValuesError
)


def _trapezoid_weights(points: int, step: float) -> np.ndarray:
    weights = np.full(points, step)
    weights[0] = weights[-1] = step / 2.0
    return weights


def _kernel_weights(x: np.ndarray, grid: np.ndarray, step: float, h: float) -> np.ndarray:
    """
    κ(x, u_g) = c_g K_h(x - u_g) / Σ_g' c_g' K_h(x - u_g')

    Returns:
        (len(x), G) 矩阵，每行和为 1
    """
    weights = norm.pdf((x[:, None] - grid[None, :]) / h) * _trapezoid_weights(grid.size, step)[None, :]
    total = weights.sum(axis=1)
    if np.any(total <= 0):
        raise GridMismatchError(f"评估点 {x[total <= 0][:5]} 处核权重全部下溢")
    return weights / total[:, None]


def smooth_density(table: DensityTable, x, h: float, floor: float = 1e-12) -> np.ndarray:
    """
    Nℊ(x) = exp{ ∫ K_h(x - u) ln g(u) du }，梯形求积

    Args:
        table: 网格上的密度表
        x: 评估点
        h: 带宽
        floor: 取对数前的密度下限
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr < table.lower - table.step) or np.any(x_arr > table.upper + table.step):
        raise GridMismatchError(f"评估点超出网格 [{table.lower:.4g}, {table.upper:.4g}]")
    kappa = _kernel_weights(x_arr, table.grid, table.step, h)
    value = np.exp(kappa @ np.log(np.maximum(table.values, floor)))
    return value[0] if np.ndim(x) == 0 else value


class NonparametricMixture:
    """非参数混合聚类服务"""

    def __init__(self, options: Optional[MixtureOptions] = None):
        self.options = options or MixtureOptions()

    # ------------------------------------------------------------------ 网格与核

    def bandwidths_for(self, data: np.ndarray) -> np.ndarray:
        """h_j = C_j n^(-1/5)，C_j 默认为列的经验标准差"""
        n, p = data.shape
        if self.options.bandwidths is not None:
            h = np.asarray(self.options.bandwidths, dtype=float)
            if h.size != p:
                raise ValueError(f"给定 {h.size} 个带宽，但有 {p} 个特征")
        elif self.options.bandwidth_constant is not None:
            h = np.full(p, self.options.bandwidth_constant * n ** (-0.2))
        else:
            h = data.std(axis=0, ddof=1) * n ** (-0.2)
        if np.any(~np.isfinite(h)) or np.any(h <= 0):
            raise ValueError(f"带宽必须为正: {h}")
        return h

    def _grids(self, data: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        margin = self.options.grid_margin * h
        lower = data.min(axis=0) - margin
        upper = data.max(axis=0) + margin
        step = (upper - lower) / (self.options.grid_points - 1)
        return lower, step

    def _data_kernels(self, data: np.ndarray, lower: np.ndarray, step: np.ndarray,
                      h: np.ndarray, grid_points: Optional[int] = None) -> List[np.ndarray]:
        G = self.options.grid_points if grid_points is None else grid_points
        kernels = []
        for j in range(data.shape[1]):
            grid = lower[j] + step[j] * np.arange(G)
            upper = grid[-1]
            column = data[:, j]
            if np.any(column < lower[j] - step[j]) or np.any(column > upper + step[j]):
                raise GridMismatchError(f"第 {j} 列残差超出网格 [{lower[j]:.4g}, {upper:.4g}]")
            kernels.append(_kernel_weights(column, grid, step[j], h[j]))
        return kernels

    def _log_smoothed(self, model: MixtureModel, kernels: List[np.ndarray]) -> np.ndarray:
        """(n, L) 矩阵：Σ_j ln Nℊ_ℓj(ξ_ij)"""
        log_density = np.log(np.maximum(model.densities, self.options.density_floor))
        total = np.zeros((kernels[0].shape[0], model.L))
        for j, kappa in enumerate(kernels):
            total += kappa @ log_density[:, j, :].T
        return total

    # ------------------------------------------------------------------ E / M 步

    def _e_step(self, model: MixtureModel, kernels: List[np.ndarray]) -> Tuple[float, np.ndarray]:
        log_joint = np.log(model.proportions)[None, :] + self._log_smoothed(model, kernels)
        row_norm = logsumexp(log_joint, axis=1)
        post = np.exp(log_joint - row_norm[:, None])
        post /= post.sum(axis=1, keepdims=True)
        return float(row_norm.sum()), post

    def _m_step(self, weights: np.ndarray, kernels: List[np.ndarray], lower: np.ndarray,
                step: np.ndarray, h: np.ndarray, **extra) -> MixtureModel:
        G = self.options.grid_points
        mass = weights.sum(axis=0)
        proportions = mass / weights.shape[0]
        if np.any(proportions < self.options.min_proportion):
            raise EmptyComponentError(f"成分比例过小: {np.round(proportions, 10).tolist()}")
        proportions = proportions / proportions.sum()

        densities = np.empty((weights.shape[1], len(kernels), G))
        for j, kappa in enumerate(kernels):
            trap = _trapezoid_weights(G, step[j])
            densities[:, j, :] = (weights.T @ kappa) / trap[None, :] / mass[:, None]
        densities = np.maximum(densities, self.options.density_floor)
        return MixtureModel(proportions=proportions, grid_lower=lower, grid_step=step,
                            densities=densities, bandwidths=h, **extra)

    def _initial_weights(self, data: np.ndarray, L: int, seed: int) -> np.ndarray:
        """k-means 划分软化为 0.9 / 0.1 型的初始后验"""
        n = data.shape[0]
        if L == 1:
            return np.ones((n, 1))
        labels = KMeans(n_clusters=L, n_init=self.options.kmeans_restarts,
                        random_state=seed).fit_predict(data)
        other = (1.0 - self.options.soft_weight) / (L - 1)
        weights = np.full((n, L), other)
        weights[np.arange(n), labels] = self.options.soft_weight
        return weights

    # ------------------------------------------------------------------ 拟合

    def fit(self, residuals: FeatureMatrix, L: int,
            seed: Optional[int] = None) -> Tuple[MixtureModel, Posteriors]:
        """
        MM 算法最大化平滑对数似然

        Args:
            residuals: n×(J+1) 残差矩阵（noCov 时为中心化特征）
            L: 成分数
            seed: 初始化随机种子，None 时用 options.seed

        Returns:
            (MixtureModel, Posteriors)
        """
        data = residuals.values
        n = data.shape[0]
        if L < 1 or L > n:
            raise InvalidLError(f"成分数 L={L} 必须在 1..{n} 之间")
        seed = self.options.seed if seed is None else seed

        h = self.bandwidths_for(data)
        lower, step = self._grids(data, h)
        kernels = self._data_kernels(data, lower, step, h)

        last_error = None
        for attempt in range(self.options.restarts + 1):
            attempt_seed = seed + attempt
            try:
                model, post = self._fit_once(data, L, attempt_seed, kernels, lower, step, h)
            except EmptyComponentError as e:
                last_error = e
                logger.warning(f"L={L} 第 {attempt + 1} 次拟合出现空成分（seed={attempt_seed}），重启: {e}")
                continue
            logger.success(f"混合模型拟合完成: L={L}, 迭代 {model.iterations} 次, 平滑对数似然 {model.loglik:.4f}")
            return model, Posteriors(regions=list(residuals.regions), values=post)
        raise EmptyComponentError(f"L={L} 重启 {self.options.restarts} 次后仍有空成分: {last_error.message}")

    def _fit_once(self, data: np.ndarray, L: int, seed: int, kernels: List[np.ndarray],
                  lower: np.ndarray, step: np.ndarray, h: np.ndarray) -> Tuple[MixtureModel, np.ndarray]:
        weights = self._initial_weights(data, L, seed)
        model = self._m_step(weights, kernels, lower, step, h)
        loglik, weights = self._e_step(model, kernels)
        trace = [loglik]

        for iteration in range(1, self.options.max_iter + 1):
            model = self._m_step(weights, kernels, lower, step, h)
            new_loglik, weights = self._e_step(model, kernels)
            trace.append(new_loglik)
            logger.debug(f"L={L} 迭代 {iteration}: ℓ = {new_loglik:.10f}")
            if abs(new_loglik - loglik) < self.options.tol:
                break
            loglik = new_loglik

        model = model.model_copy(update={
            "loglik": trace[-1], "iterations": len(trace) - 1, "trace": trace, "seed": seed,
        })
        return model, weights

    # ------------------------------------------------------------------ 评估

    def _kernels_for(self, model: MixtureModel, data: np.ndarray) -> List[np.ndarray]:
        if data.shape[1] != model.n_features:
            raise GridMismatchError(f"残差有 {data.shape[1]} 列，模型有 {model.n_features} 个特征")
        return self._data_kernels(data, model.grid_lower, model.grid_step, model.bandwidths,
                                  grid_points=model.grid_points)

    def smoothed_loglik(self, model: MixtureModel, residuals: FeatureMatrix) -> float:
        """ℓ(λ) = Σ_i ln Σ_ℓ π_ℓ Π_j Nℊ_ℓj(ξ_ij)"""
        loglik, _ = self._e_step(model, self._kernels_for(model, residuals.values))
        return loglik

    def posteriors(self, model: MixtureModel, residuals: FeatureMatrix) -> Posteriors:
        """t_iℓ，在对数空间归一化"""
        _, post = self._e_step(model, self._kernels_for(model, residuals.values))
        return Posteriors(regions=list(residuals.regions), values=post)

    @staticmethod
    def map_assign(post: Posteriors) -> Partition:
        """最大后验规则，平局取编号最小的成分"""
        return Partition(regions=list(post.regions), labels=np.argmax(post.values, axis=1) + 1)

    @staticmethod
    def select_L(loglik_by_L: Sequence[float], tau: float = 15.0) -> int:
        """
        肘部规则：最小的 L 使 ℓ(L+1) - ℓ(L) < tau，始终不满足时返回 L_max

        Args:
            loglik_by_L: L = 1..L_max 的平滑对数似然
            tau: 增益阈值
        """
        values = np.asarray(loglik_by_L, dtype=float)
        if values.size < 2:
            raise TooFewValuesError(f"至少需要 2 个 L 的对数似然，当前 {values.size}")
        gains = np.diff(values)
        below = np.flatnonzero(gains < tau)
        return int(below[0] + 1) if below.size else int(values.size)

    def fit_by_L(self, residuals: FeatureMatrix, l_max: int = 10,
                 l_min: int = 1) -> pd.DataFrame:
        """对 L = l_min..l_max 逐个拟合，返回每个 L 的平滑对数似然"""
        rows = []
        for L in range(l_min, l_max + 1):
            try:
                model, _ = self.fit(residuals, L)
                rows.append({"L": L, "loglik": model.loglik, "iterations": model.iterations})
            except (EmptyComponentError, InvalidLError) as e:
                logger.warning(f"L={L} 拟合失败，记为 NaN: {e}")
                rows.append({"L": L, "loglik": float("nan"), "iterations": 0})
        return pd.DataFrame(rows)

    @staticmethod
    def model_report(model: MixtureModel) -> str:
        """结构化文本报告（YAML）"""
        report = {
            "L": model.L,
            "proportions": [float(p) for p in model.proportions],
            "bandwidths": [float(h) for h in model.bandwidths],
            "smoothed_loglik": float(model.loglik),
            "iterations": int(model.iterations),
            "seed": int(model.seed),
        }
        return yaml.safe_dump(report, sort_keys=False)


# 导出服务实例
npmix_service = NonparametricMixture()
