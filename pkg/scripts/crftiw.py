"""CRFTIW 命令行入口"""
import functools
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import click
import numpy as np
from pydantic import ValidationError

from src.models.mixture import MixtureOptions
from src.models.pipeline import PipelineConfig
from src.models.regression import IndexOptions
from src.models.results import METHODS, BenchmarkConfig
from src.models.simulation import ScenarioConfig
from src.utils.config import Config
from src.utils.exceptions import CrftiwError
from src.utils.logger import logger
from src.wavelets import get_extractor
from services.benchmark_service import BenchmarkService
from services.evaluation_service import ari as adjusted_rand_index
from services.ingest_service import (
    ingest_service, normalize_rate, preprocess_ma, truncate_to_dyadic
)
from services.npmix_service import NonparametricMixture
from services.pipeline_service import run_pipeline
from services.simulation_service import simulation_service
from services.sindex_service import SingleIndexRegressor


def stage_errors(func):
    """把 CrftiwError 转成带阶段标签的非零退出"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CrftiwError as e:
            logger.error(str(e))
            raise click.ClickException(str(e))
        except ValidationError as e:
            message = f"[cli] 参数无效: {e.errors()[0]['msg']}"
            logger.error(message)
            raise click.ClickException(message)
    return wrapper


def _int_list(value: str):
    return [int(v) for v in value.split(",") if v.strip()]


@click.group()
def cli():
    """CRFTIW：平移不变小波特征 + 单指标回归 + 非参数混合聚类"""
    Config.ensure_dirs()


@cli.command()
@click.option('--scenario', type=int, default=1, help='情景 1/2/3')
@click.option('--n', 'n', type=int, default=100, help='地区数')
@click.option('--T', 'T', type=int, default=256, help='曲线长度')
@click.option('--varsigma', type=float, default=0.3)
@click.option('--shift', type=int, default=50)
@click.option('--shift-prob', type=float, default=0.5)
@click.option('--shift-mode', type=click.Choice(['circular', 'padded']), default='circular')
@click.option('--noise-scale', type=float, default=1.0)
@click.option('--seed', type=int, default=0)
@click.option('--replica', type=int, default=0)
@click.option('--output-dir', type=click.Path(path_type=Path), default=None)
@stage_errors
def simulate(scenario, n, T, varsigma, shift, shift_prob, shift_mode, noise_scale, seed, replica, output_dir):
    """生成一个模拟副本"""
    config = ScenarioConfig(scenario=scenario, n=n, T=T, varsigma=varsigma, shift=shift,
                            shift_prob=shift_prob, shift_mode=shift_mode, noise_scale=noise_scale,
                            seed=seed, replica=replica)
    replicate = simulation_service.gen_replicate(config)
    simulation_service.write_replicate(replicate, output_dir or Config.OUTPUT_DIR)


@cli.command()
@click.option('--input', 'input_path', type=click.Path(path_type=Path), required=True, help='每日计数 CSV')
@click.option('--population', type=click.Path(path_type=Path), default=None, help='region,population CSV')
@click.option('--window', type=int, default=7, help='移动平均窗口')
@click.option('--truncate-to-dyadic', 'truncate', is_flag=True, help='只保留最后 2^⌊log2 T⌋ 个时间点')
@click.option('--output', type=click.Path(path_type=Path), required=True)
@stage_errors
def preprocess(input_path, population, window, truncate, output):
    """每百万人口比率 + 尾随移动平均"""
    curves = ingest_service.read_curves(input_path)
    values = curves.values
    if population is not None:
        sizes = ingest_service.read_population(population).reindex(curves.regions)
        if sizes.isna().any():
            raise click.ClickException(f"人口文件缺少地区: {sizes[sizes.isna()].index.tolist()[:10]}")
        values = np.vstack([normalize_rate(row, p) for row, p in zip(values, sizes.to_numpy())])
    values = np.vstack([preprocess_ma(row, window) for row in values])
    if truncate:
        values = truncate_to_dyadic(values)
    ingest_service.write_curves(curves.with_values(values), output)
    logger.success(f"预处理完成: {curves.n} 条曲线, T={values.shape[1]}")


@cli.command()
@click.option('--curves', type=click.Path(path_type=Path), required=True)
@click.option('--kind', type=click.Choice(['ti', 'dwt']), default='ti')
@click.option('--wavelet', default='sym8')
@click.option('--truncate-to-dyadic', 'truncate', is_flag=True)
@click.option('--output', type=click.Path(path_type=Path), required=True)
@stage_errors
def features(curves, kind, wavelet, truncate, output):
    """提取每个尺度的对数能量特征"""
    curve_set = ingest_service.read_curves(curves)
    if truncate:
        curve_set = curve_set.with_values(truncate_to_dyadic(curve_set.values))
    matrix = get_extractor(kind, wavelet).featurize_batch(curve_set)
    ingest_service.write_features(matrix, output)


@cli.command()
@click.option('--features', 'features_path', type=click.Path(path_type=Path), required=True)
@click.option('--covariates', type=click.Path(path_type=Path), required=True)
@click.option('--bandwidth-constant', type=float, default=None)
@click.option('--leave-one-out', is_flag=True)
@click.option('--standardize', is_flag=True, help='按列标准化协变量（均值 0、标准差 1）')
@click.option('--refits', is_flag=True, help='同时输出每个系数置零的约束拟合')
@click.option('--seed', type=int, default=0)
@click.option('--output-dir', type=click.Path(path_type=Path), default=None)
@stage_errors
def regress(features_path, covariates, bandwidth_constant, leave_one_out, standardize, refits, seed, output_dir):
    """单指标回归，写出 indexfit.yaml、residuals.csv、effects.csv、effect_profile.csv"""
    output_dir = Path(output_dir or Config.OUTPUT_DIR)
    output_dir.mkdir(parents=True, exist_ok=True)
    matrix = ingest_service.read_features(features_path)
    cov = ingest_service.read_covariates(covariates, matrix.regions)
    if standardize:
        cov = cov.standardize()
    regressor = SingleIndexRegressor(IndexOptions(bandwidth_constant=bandwidth_constant,
                                                  leave_one_out=leave_one_out, seed=seed))
    fit = regressor.fit_gamma(matrix, cov)
    effect = regressor.covariate_effect(fit)
    (output_dir / "indexfit.yaml").write_text(regressor.fit_report(fit, cov, effect), encoding="utf-8")
    ingest_service.write_features(regressor.residuals(fit), output_dir / "residuals.csv")
    ingest_service.write_table(regressor.region_report(fit, cov, effect), output_dir / "effects.csv")
    ingest_service.write_table(regressor.effect_profile(fit), output_dir / "effect_profile.csv")
    if refits:
        ingest_service.write_table(regressor.constrained_refits(matrix, cov), output_dir / "refits.csv")


@cli.command()
@click.option('--residuals', type=click.Path(path_type=Path), required=True)
@click.option('--L', 'L', type=int, required=True)
@click.option('--seed', type=int, default=0)
@click.option('--output', type=click.Path(path_type=Path), required=True, help='partition.csv')
@stage_errors
def cluster(residuals, L, seed, output):
    """非参数混合聚类 + 最大后验划分"""
    data = ingest_service.read_features(residuals, kind="residual")
    mixture = NonparametricMixture(MixtureOptions(seed=seed))
    model, post = mixture.fit(data, L)
    ingest_service.write_partition(mixture.map_assign(post), output, posteriors=post)
    Path(output).with_name("mixture.yaml").write_text(mixture.model_report(model), encoding="utf-8")


@cli.command('select-l')
@click.option('--residuals', type=click.Path(path_type=Path), default=None, help='逐个 L 拟合')
@click.option('--loglik', type=click.Path(path_type=Path), default=None, help='已有的 L,loglik 表')
@click.option('--l-max', type=int, default=10)
@click.option('--tau', type=float, default=15.0)
@click.option('--seed', type=int, default=0)
@click.option('--output', type=click.Path(path_type=Path), default=None, help='loglik_by_L.csv')
@stage_errors
def select_l(residuals, loglik, l_max, tau, seed, output):
    """肘部规则选择成分数"""
    if (residuals is None) == (loglik is None):
        raise click.UsageError("--residuals 与 --loglik 必须且只能给一个")
    if loglik is not None:
        table = ingest_service.read_loglik(loglik)
    else:
        data = ingest_service.read_features(residuals, kind="residual")
        table = NonparametricMixture(MixtureOptions(seed=seed)).fit_by_L(data, l_max=min(l_max, data.n))
        if output is not None:
            ingest_service.write_loglik(table, output)
    click.echo(NonparametricMixture.select_L(table["loglik"].to_numpy(), tau))


@cli.command()
@click.option('--config', 'config_path', type=click.Path(path_type=Path), default=None,
              help='key = value 配置文件')
@click.option('--curves', 'curves_path', type=click.Path(path_type=Path), default=None)
@click.option('--covariates', 'covariates_path', type=click.Path(path_type=Path), default=None)
@click.option('--labels', 'labels_path', type=click.Path(path_type=Path), default=None)
@click.option('--output-dir', type=click.Path(path_type=Path), default=None)
@click.option('--method', type=click.Choice(METHODS), default=None)
@click.option('--wavelet', default=None)
@click.option('--bandwidth-constant', type=float, default=None)
@click.option('--L', 'L', type=int, default=None)
@click.option('--l-max', type=int, default=None)
@click.option('--tau', type=float, default=None)
@click.option('--seed', type=int, default=None)
@click.option('--truncate-to-dyadic/--no-truncate-to-dyadic', 'truncate_to_dyadic', default=None)
@click.option('--refits/--no-refits', default=None)
@click.option('--standardize/--no-standardize', 'standardize_covariates', default=None)
@stage_errors
def pipeline(config_path, **flags):
    """完整流水线：特征 -> 回归 -> 聚类"""
    config = PipelineConfig.from_sources(Config.load_flat_config(config_path), flags)
    paths = run_pipeline(config)
    for name, path in paths.items():
        click.echo(f"{name}\t{path}")


@cli.command()
@click.option('--scenarios', default='1,2,3')
@click.option('--sizes', default='50,100,250')
@click.option('--replicas', type=int, default=100)
@click.option('--methods', default=','.join(METHODS))
@click.option('--L', 'L', type=int, default=3)
@click.option('--seed', type=int, default=0)
@click.option('--T', 'T', type=int, default=256)
@click.option('--shift', type=int, default=50)
@click.option('--shift-mode', type=click.Choice(['circular', 'padded']), default='circular')
@click.option('--n-jobs', type=int, default=None, help='默认取环境变量 CRFTIW_N_JOBS')
@click.option('--timing/--no-timing', default=True, help='--no-timing 时 seconds 列为 0')
@click.option('--output-dir', type=click.Path(path_type=Path), default=None)
@stage_errors
def benchmark(scenarios, sizes, replicas, methods, L, seed, T, shift, shift_mode, n_jobs, timing, output_dir):
    """情景 × 样本量 × 副本 × 方法 的基准测试"""
    config = BenchmarkConfig(
        scenarios=_int_list(scenarios), sizes=_int_list(sizes), replicas=replicas,
        methods=[m.strip() for m in methods.split(",") if m.strip()], L=L, seed=seed, T=T,
        shift=shift, shift_mode=shift_mode, n_jobs=Config.N_JOBS if n_jobs is None else n_jobs, timing=timing,
    )
    service = BenchmarkService()
    table, failures = service.run(config)
    service.write(table, failures, output_dir or Config.OUTPUT_DIR)


@cli.command('ari')
@click.argument('first', type=click.Path(path_type=Path))
@click.argument('second', type=click.Path(path_type=Path))
@stage_errors
def ari_command(first, second):
    """两个划分文件（region,cluster）之间的 ARI，按 region 对齐"""
    p = ingest_service.read_partition(first)
    q = ingest_service.read_partition(second)
    if p.n == q.n and sorted(p.regions) != sorted(q.regions):
        raise click.ClickException("两个划分的地区集合不一致")
    lookup = dict(zip(q.regions, q.labels))
    aligned = [lookup[r] for r in p.regions] if p.n == q.n else q.labels
    click.echo(f"{adjusted_rand_index(p, aligned):.17g}")


if __name__ == "__main__":
    cli()
