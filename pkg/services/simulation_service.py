"""
模拟服务 - 三个情景的成分均值曲线、异方差噪声、平移与协变量
"""
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.models.curves import CurveSet
from src.models.mixture import Partition
from src.models.regression import Covariates
from src.models.simulation import CLASS_PROBABILITIES, TRUE_GAMMA, Replicate, ScenarioConfig
from src.utils.exceptions import InvalidScenarioError
from services.ingest_service import ingest_service

NOISE_BASE = 0.2
NOISE_SLOPE = 0.2


def component_mean(label: int, t, T: int = 256, varsigma: float = 0.3) -> np.ndarray:
    """
    u_ℓ(t) = r_ℓ(t) 1{r_ℓ(t) > 0}，r_ℓ(t) = a_ℓ(t) sin(b_ℓ π t / T)

    Args:
        label: 成分编号 1..3
        t: 时间下标，取值 1..T
        T: 曲线长度
        varsigma: 成分间差异参数 ς
    """
    t = np.asarray(t, dtype=float)
    if label == 1:
        a, b = np.ones_like(t), 2.5
    elif label == 2:
        a, b = np.full_like(t, 1.0 + varsigma), 2.5
    elif label == 3:
        a, b = 1.0 + varsigma * (t > T / 2), 2.5 - varsigma
    else:
        raise ValueError(f"成分编号必须为 1..3，得到 {label}")
    r = a * np.sin(b * np.pi * t / T)
    return np.where(r > 0, r, 0.0)


def _noise_paths(rng: np.random.Generator, n: int, T: int) -> np.ndarray:
    """n 条独立的异方差噪声路径，沿时间递推、在曲线间向量化"""
    eps = np.empty((n, T))
    eps[:, 0] = rng.normal(0.0, NOISE_BASE, size=n)
    for t in range(1, T):
        eps[:, t] = rng.standard_normal(n) * (NOISE_BASE + NOISE_SLOPE * eps[:, t - 1] ** 2)
    return eps


def gen_noise(T: int, seed: Union[int, np.random.SeedSequence] = 0) -> np.ndarray:
    """
    ε_1 ~ N(0, 0.2²)，ε_t | ε_{t-1} ~ N(0, (0.2 + 0.2 ε²_{t-1})²)

    同一 seed 得到同一路径。
    """
    if T < 1:
        raise ValueError("T 必须 >= 1")
    return _noise_paths(np.random.default_rng(seed), 1, T)[0]


def apply_shift(values: np.ndarray, delta: int, mode: str = "circular") -> np.ndarray:
    """把曲线滞后 delta 个时间点"""
    if delta == 0:
        return values.copy()
    if mode == "circular":
        return np.roll(values, delta)
    if mode == "padded":
        return np.concatenate([np.zeros(delta), values[:values.size - delta]])
    raise ValueError(f"未知的平移方式: {mode}")


class SimulationService:
    """模拟数据生成服务"""

    @staticmethod
    def seed_sequence(config: ScenarioConfig) -> np.random.SeedSequence:
        """按 (情景, n, 副本) 派生独立的随机流"""
        return np.random.SeedSequence(config.seed, spawn_key=(config.scenario, config.n, config.replica))

    def gen_replicate(self, config: ScenarioConfig) -> Replicate:
        """
        生成一个副本：W_i = ν(X_iᵀγ) · shift(u_{z_i} + ε_i, δ_i)

        Args:
            config: 情景配置（seed 和 replica 一起决定随机流）

        Returns:
            Replicate
        """
        if config.scenario not in (1, 2, 3):
            raise InvalidScenarioError(f"情景必须为 1、2 或 3，得到 {config.scenario}")

        rng = np.random.default_rng(self.seed_sequence(config))
        n, T = config.n, config.T

        labels = rng.choice([1, 2, 3], size=n, p=CLASS_PROBABILITIES)
        X = rng.standard_normal((n, 2))
        moves = rng.random(n) < config.shift_prob
        shifts = np.where(moves, config.shift, 0) if config.has_shift else np.zeros(n, dtype=int)
        noise = _noise_paths(rng, n, T) * config.noise_scale

        t = np.arange(1, T + 1)
        means = np.vstack([component_mean(label, t, T, config.varsigma) for label in (1, 2, 3)])
        raw = means[labels - 1] + noise
        shifted = np.vstack([apply_shift(row, int(d), config.shift_mode) for row, d in zip(raw, shifts)])

        regions = [f"r{i + 1}" for i in range(n)]
        replicate = Replicate(
            config=config,
            curves=CurveSet(regions=regions, values=shifted),
            covariates=Covariates(regions=regions, names=["x1", "x2"], values=X),
            labels=Partition(regions=regions, labels=labels),
            shifts=shifts,
            gamma=np.array(TRUE_GAMMA),
        )
        scaled = shifted * replicate.effect()[:, None]
        replicate = replicate.model_copy(update={"curves": CurveSet(regions=regions, values=scaled)})

        logger.debug(f"情景 {config.scenario} 副本 {config.replica}: n={n}, T={T}, "
                     f"类别频数 {np.bincount(labels, minlength=4)[1:].tolist()}")
        return replicate

    @staticmethod
    def write_replicate(replicate: Replicate, output_dir: Union[str, Path],
                        prefix: Optional[str] = None) -> dict:
        """
        写出 curves.csv、covariates.csv、labels.csv

        Returns:
            文件名到路径的映射
        """
        output_dir = Path(output_dir)
        stem = f"{prefix}_" if prefix else ""
        labels = pd.DataFrame({"region": list(replicate.labels.regions), "cluster": replicate.labels.labels,
                               "shift": replicate.shifts})
        paths = {
            "curves": ingest_service.write_curves(replicate.curves, output_dir / f"{stem}curves.csv"),
            "covariates": ingest_service.write_covariates(replicate.covariates,
                                                          output_dir / f"{stem}covariates.csv"),
            "labels": ingest_service.write_table(labels, output_dir / f"{stem}labels.csv"),
        }
        logger.success(f"模拟副本已写入 {output_dir}")
        return paths


# 导出服务实例
simulation_service = SimulationService()
