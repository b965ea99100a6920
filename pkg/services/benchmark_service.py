"""
基准测试服务 - 情景 × 样本量 × 副本 × 方法 的全因子运行

每个副本是一个独立任务：生成一次模拟数据，依次运行所有方法。失败的单元格
保留一行 NaN 指标并记入失败列表，不中断整体运行。
"""
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple, Union

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from src.models.mixture import MixtureOptions
from src.models.regression import IndexOptions
from src.models.results import (
    BENCHMARK_COLUMNS, METHODS, SUMMARY_METRICS, BenchmarkConfig, BenchmarkFailure, BenchmarkRow
)
from src.models.simulation import ScenarioConfig
from src.utils.exceptions import CrftiwError
from services.evaluation_service import EvaluationService
from services.ingest_service import CSV_FLOAT_FORMAT
from services.simulation_service import SimulationService

Task = Tuple[BenchmarkConfig, int, int, int, Optional[IndexOptions], Optional[MixtureOptions]]


def _run_replica(task: Task) -> Tuple[List[dict], List[dict]]:
    """进程池工作函数：一个 (情景, n, 副本) 上的所有方法"""
    config, scenario, n, replica, index_options, mixture_options = task
    evaluator = EvaluationService(index_options, mixture_options)
    rows, failures = [], []
    try:
        scenario_config = ScenarioConfig(
            scenario=scenario, n=n, T=config.T, varsigma=config.varsigma, shift=config.shift,
            shift_mode=config.shift_mode, seed=config.seed, replica=replica,
        )
        replicate = SimulationService().gen_replicate(scenario_config)
    except (CrftiwError, ValidationError) as e:
        stage = getattr(e, "stage", "simulate")
        message = e.message if isinstance(e, CrftiwError) else e.errors()[0]["msg"]
        logger.error(f"情景 {scenario} n={n} 副本 {replica} 生成失败: {message}")
        for method in config.methods:
            rows.append(BenchmarkRow(scenario=scenario, n=n, replica=replica, method=method).model_dump())
            failures.append(BenchmarkFailure(scenario=scenario, n=n, replica=replica, method=method,
                                             stage=stage, message=message).model_dump())
        return rows, failures

    for method in config.methods:
        start = time.perf_counter()
        try:
            scores = evaluator.score_variant(method, replicate, config.L)
        except (CrftiwError, ValueError) as e:
            stage = getattr(e, "stage", "evaluate")
            logger.error(f"单元格失败 (情景 {scenario}, n={n}, 副本 {replica}, {method}): {e}")
            rows.append(BenchmarkRow(scenario=scenario, n=n, replica=replica, method=method).model_dump())
            failures.append(BenchmarkFailure(scenario=scenario, n=n, replica=replica, method=method,
                                             stage=stage, message=str(e)).model_dump())
            continue
        seconds = time.perf_counter() - start if config.timing else 0.0
        rows.append(BenchmarkRow(scenario=scenario, n=n, replica=replica, method=method,
                                 seconds=seconds, **scores).model_dump())
    return rows, failures


class BenchmarkService:
    """基准测试编排"""

    def __init__(self, index_options: Optional[IndexOptions] = None,
                 mixture_options: Optional[MixtureOptions] = None):
        self.index_options = index_options
        self.mixture_options = mixture_options

    def run(self, config: BenchmarkConfig) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """
        运行全因子基准测试

        Args:
            config: 基准测试配置

        Returns:
            (结果表, 失败表)，结果表每个单元格一行
        """
        tasks = [
            (config, scenario, n, replica, self.index_options, self.mixture_options)
            for scenario in config.scenarios
            for n in config.sizes
            for replica in range(config.replicas)
        ]
        logger.info(f"基准测试开始: {len(tasks)} 个副本任务, {config.cells} 个单元格, n_jobs={config.n_jobs}")

        workers = (os.cpu_count() or 1) if config.n_jobs == -1 else config.n_jobs
        workers = max(1, min(workers, len(tasks)))
        if workers == 1:
            outputs = [_run_replica(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                outputs = list(ex.map(_run_replica, tasks))

        rows = [row for replica_rows, _ in outputs for row in replica_rows]
        failures = [failure for _, replica_failures in outputs for failure in replica_failures]
        table = pd.DataFrame(rows, columns=BENCHMARK_COLUMNS)
        failure_table = pd.DataFrame(failures, columns=list(BenchmarkFailure.model_fields))

        if failures:
            logger.warning(f"基准测试完成，{len(failures)} 个单元格失败")
        else:
            logger.success(f"基准测试完成: {len(table)} 行")
        return table, failure_table

    @staticmethod
    def summarize(table: pd.DataFrame) -> pd.DataFrame:
        """每个 (scenario, n, method) 单元的中位数与上下四分位数"""
        method_order = {method: k for k, method in enumerate(METHODS)}
        grouped = table.groupby(["scenario", "n", "method"], sort=False)[SUMMARY_METRICS]
        pieces = []
        for label, q in (("q1", 0.25), ("median", 0.5), ("q3", 0.75)):
            part = grouped.quantile(q)
            part.columns = [f"{metric}_{label}" for metric in part.columns]
            pieces.append(part)
        summary = pd.concat(pieces, axis=1)
        summary.insert(0, "replicas", grouped.size())
        ordered = [f"{metric}_{label}" for metric in SUMMARY_METRICS for label in ("median", "q1", "q3")]
        summary = summary[["replicas", *ordered]].reset_index()
        summary["_order"] = summary["method"].map(method_order)
        return (summary.sort_values(["scenario", "n", "_order"], kind="stable")
                .drop(columns="_order").reset_index(drop=True))

    @staticmethod
    def write(table: pd.DataFrame, failures: pd.DataFrame, output_dir: Union[str, Path]) -> dict:
        """写出 benchmark.csv、benchmark_summary.csv，有失败时再写 benchmark_failures.csv"""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = {"benchmark": output_dir / "benchmark.csv", "summary": output_dir / "benchmark_summary.csv"}
        table.to_csv(paths["benchmark"], index=False, float_format=CSV_FLOAT_FORMAT)
        BenchmarkService.summarize(table).to_csv(paths["summary"], index=False, float_format=CSV_FLOAT_FORMAT)
        if len(failures):
            paths["failures"] = output_dir / "benchmark_failures.csv"
            failures.to_csv(paths["failures"], index=False)
        logger.success(f"基准测试结果已写入 {output_dir}")
        return paths


def benchmark(config: BenchmarkConfig, index_options: Optional[IndexOptions] = None,
              mixture_options: Optional[MixtureOptions] = None) -> pd.DataFrame:
    """运行基准测试并只返回结果表"""
    table, _ = BenchmarkService(index_options, mixture_options).run(config)
    return table


def summarize_benchmark(table: pd.DataFrame) -> pd.DataFrame:
    return BenchmarkService.summarize(table)


# 导出服务实例
benchmark_service = BenchmarkService()
