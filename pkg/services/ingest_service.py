"""
数据读写与预处理服务

所有 CSV 第一列为 region；浮点数按 17 位有效数字写出，读回无损。
"""
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.models.curves import CurveSet, FeatureMatrix
from src.models.mixture import Partition, Posteriors
from src.models.regression import Covariates, ResidualMatrix
from src.utils.exceptions import ConfigError, EmptySeriesError, NonPositivePopulationError

CSV_FLOAT_FORMAT = "%.17g"
PathLike = Union[str, Path]


def preprocess_ma(series, window: int = 7) -> np.ndarray:
    """
    尾随移动平均，前 window-1 个位置在已有的前缀上取平均

    Args:
        series: 一维序列
        window: 窗口长度
    """
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        raise EmptySeriesError("序列为空")
    if window < 1:
        raise ValueError(f"窗口长度必须 >= 1，得到 {window}")
    return pd.Series(values).rolling(window, min_periods=1).mean().to_numpy()


def normalize_rate(counts, population: float) -> np.ndarray:
    """每百万人口的比率：counts × 10⁶ / population"""
    if not population > 0:
        raise NonPositivePopulationError(f"人口必须为正，得到 {population}")
    return np.asarray(counts, dtype=float) * 1e6 / population


def truncate_to_dyadic(values: np.ndarray) -> np.ndarray:
    """保留最后 2^⌊log2 T⌋ 个时间点（按列截断，支持一维或 n×T）"""
    values = np.asarray(values)
    T = values.shape[-1]
    if T == 0:
        raise EmptySeriesError("序列为空，无法截断")
    keep = 1 << (T.bit_length() - 1)
    return values[..., T - keep:]


def _frame_with_regions(values: np.ndarray, columns: List[str], regions: List[str]) -> pd.DataFrame:
    frame = pd.DataFrame(np.asarray(values), columns=columns)
    frame.insert(0, "region", list(regions))
    return frame


class IngestService:
    """CSV 读写服务"""

    @staticmethod
    def _read(path: PathLike) -> pd.DataFrame:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"文件不存在: {path}")
        frame = pd.read_csv(path, dtype={"region": str}, float_precision="round_trip")
        if "region" not in frame.columns:
            raise ConfigError(f"{path} 缺少 region 列")
        return frame

    @staticmethod
    def _write(frame: pd.DataFrame, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        logger.debug(f"已写出 {path}（{len(frame)} 行）")
        return path

    # ------------------------------------------------------------------ 曲线

    def read_curves(self, path: PathLike) -> CurveSet:
        frame = self._read(path)
        return CurveSet(regions=frame["region"].tolist(),
                        values=frame.drop(columns="region").to_numpy(dtype=float))

    def write_curves(self, curves: CurveSet, path: PathLike) -> Path:
        columns = [f"t{k + 1}" for k in range(curves.T)]
        return self._write(_frame_with_regions(curves.values, columns, curves.regions), path)

    def read_population(self, path: PathLike) -> pd.Series:
        """region,population 两列，返回以 region 为索引的人口"""
        frame = self._read(path)
        if "population" not in frame.columns:
            raise ConfigError(f"{path} 缺少 population 列")
        return frame.set_index("region")["population"].astype(float)

    # ------------------------------------------------------------------ 协变量

    def read_covariates(self, path: PathLike, regions: Optional[List[str]] = None) -> Covariates:
        """读取协变量；给定 regions 时按该顺序对齐"""
        frame = self._read(path)
        if regions is not None:
            missing = sorted(set(regions) - set(frame["region"]))
            if missing:
                raise ConfigError(f"协变量缺少地区: {missing[:10]}")
            frame = frame.set_index("region").loc[list(regions)].reset_index()
        names = [c for c in frame.columns if c != "region"]
        return Covariates(regions=frame["region"].tolist(), names=names,
                          values=frame[names].to_numpy(dtype=float))

    def write_covariates(self, covariates: Covariates, path: PathLike) -> Path:
        return self._write(_frame_with_regions(covariates.values, covariates.names, covariates.regions), path)

    # ------------------------------------------------------------------ 特征 / 残差

    def read_features(self, path: PathLike, kind: str = "ti") -> FeatureMatrix:
        frame = self._read(path)
        values = frame.drop(columns="region").to_numpy(dtype=float)
        model = ResidualMatrix if kind == "residual" else FeatureMatrix
        return model(regions=frame["region"].tolist(), values=values, kind=kind)

    def write_features(self, features: FeatureMatrix, path: PathLike) -> Path:
        return self._write(_frame_with_regions(features.values, features.columns, features.regions), path)

    # ------------------------------------------------------------------ 划分

    def read_partition(self, path: PathLike, column: str = "cluster") -> Partition:
        frame = self._read(path)
        if column not in frame.columns:
            raise ConfigError(f"{path} 缺少 {column} 列")
        return Partition(regions=frame["region"].tolist(), labels=frame[column].to_numpy(dtype=int))

    def write_partition(self, partition: Partition, path: PathLike,
                        posteriors: Optional[Posteriors] = None) -> Path:
        """region,cluster；给定后验时追加 t_1..t_L 列"""
        frame = pd.DataFrame({"region": list(partition.regions), "cluster": partition.labels})
        if posteriors is not None:
            for k in range(posteriors.L):
                frame[f"t_{k + 1}"] = posteriors.values[:, k]
        return self._write(frame, path)

    # ------------------------------------------------------------------ 对数似然

    @staticmethod
    def read_loglik(path: PathLike) -> pd.DataFrame:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"文件不存在: {path}")
        frame = pd.read_csv(path, float_precision="round_trip")
        if not {"L", "loglik"} <= set(frame.columns):
            raise ConfigError(f"{path} 需要 L 与 loglik 两列")
        return frame.sort_values("L").reset_index(drop=True)

    def write_loglik(self, table: pd.DataFrame, path: PathLike) -> Path:
        return self._write(table, path)

    def write_table(self, table: pd.DataFrame, path: PathLike) -> Path:
        return self._write(table, path)


# 导出服务实例
ingest_service = IngestService()
