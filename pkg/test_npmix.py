#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非参数混合聚类测试
"""
import sys
from pathlib import Path

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest
import yaml
from scipy.stats import norm

from src.models.curves import FeatureMatrix
from src.models.mixture import DensityTable, MixtureModel, MixtureOptions, Posteriors
from src.utils.exceptions import (
    EmptyComponentError, GridMismatchError, InvalidLError, TooFewValuesError
)
from services.evaluation_service import ari
from services.npmix_service import NonparametricMixture, _kernel_weights, smooth_density


def _two_groups(n=200, p=3, gap=10.0, seed=0):
    rng = np.random.default_rng(seed)
    truth = np.repeat([1, 2], n // 2)
    values = rng.standard_normal((n, p))
    values[truth == 2] += gap
    return FeatureMatrix.from_array(values, kind="residual"), truth


def _flat_model(levels, lower=-5.0, upper=5.0, points=64, h=0.5):
    """每个成分单特征、常数密度表的模型"""
    step = (upper - lower) / (points - 1)
    densities = np.array([[np.full(points, level)] for level in levels])
    L = len(levels)
    return MixtureModel(proportions=np.full(L, 1.0 / L), grid_lower=[lower], grid_step=[step],
                        densities=densities, bandwidths=[h])


@pytest.fixture(scope="module")
def mixture():
    return NonparametricMixture(MixtureOptions(seed=0))


@pytest.fixture(scope="module")
def separated_fit(mixture):
    data, truth = _two_groups()
    model, post = mixture.fit(data, 2)
    return data, truth, model, post


# ---------------------------------------------------------------------- smooth_density

def test_uniform_table_is_fixed_point():
    table = DensityTable(lower=0.0, step=4.0 / 99, values=np.full(100, 0.25))
    values = smooth_density(table, np.linspace(0.5, 3.5, 7), h=0.3)
    assert np.allclose(values, 0.25, rtol=1e-12)


def test_smoothed_density_below_kernel_average():
    grid = np.linspace(-4, 4, 256)
    table = DensityTable(lower=-4.0, step=grid[1] - grid[0], values=norm.pdf(grid) * (1 + 0.5 * np.sin(3 * grid)))
    x = np.linspace(-3, 3, 41)
    kappa = _kernel_weights(x, table.grid, table.step, 0.4)
    assert np.all(smooth_density(table, x, 0.4) <= kappa @ table.values + 1e-15)


def test_small_bandwidth_recovers_density():
    grid = np.linspace(-6, 6, 512)
    table = DensityTable(lower=-6.0, step=grid[1] - grid[0], values=norm.pdf(grid))
    assert abs(smooth_density(table, 0.0, 0.01) - norm.pdf(0.0)) < 1e-3
    assert np.ndim(smooth_density(table, 0.0, 0.01)) == 0


def test_smooth_density_outside_grid():
    table = DensityTable(lower=0.0, step=0.1, values=np.ones(11))
    with pytest.raises(GridMismatchError):
        smooth_density(table, 5.0, 0.2)


# ---------------------------------------------------------------------- fit

def test_single_component(mixture):
    data, _ = _two_groups(n=40, gap=0.0, seed=3)
    model, post = mixture.fit(data, 1)
    assert np.allclose(model.proportions, [1.0])
    assert np.all(post.values == 1.0)
    expected = sum(
        np.log(smooth_density(model.table(0, j), data.values[:, j], model.bandwidths[j])).sum()
        for j in range(data.values.shape[1])
    )
    assert model.loglik == pytest.approx(expected, abs=1e-8)
    assert mixture.smoothed_loglik(model, data) == pytest.approx(model.loglik, abs=1e-10)


def test_separated_components_are_recovered(mixture, separated_fit):
    _, truth, _, post = separated_fit
    assert ari(mixture.map_assign(post), truth) >= 0.95


def test_fitted_model_invariants(separated_fit):
    data, _, model, post = separated_fit
    assert abs(model.proportions.sum() - 1.0) < 1e-12
    assert np.all(np.abs(post.values.sum(axis=1) - 1.0) < 1e-12)
    for l in range(model.L):
        for j in range(model.n_features):
            assert abs(model.table(l, j).integral() - 1.0) < 1e-6
    h = model.bandwidths
    assert np.all(model.grid_lower <= data.values.min(axis=0) - 3 * h + 1e-12)
    upper = model.grid_lower + model.grid_step * (model.grid_points - 1)
    assert np.all(upper >= data.values.max(axis=0) + 3 * h - 1e-12)


def test_default_bandwidth_rule(mixture):
    data, _ = _two_groups(n=100, seed=5)
    expected = data.values.std(axis=0, ddof=1) * 100 ** (-0.2)
    assert np.allclose(mixture.bandwidths_for(data.values), expected)
    fixed = NonparametricMixture(MixtureOptions(bandwidth_constant=2.0))
    assert np.allclose(fixed.bandwidths_for(data.values), 2.0 * 100 ** (-0.2))


@pytest.mark.parametrize("n", [50, 200])
@pytest.mark.parametrize("L", [2, 3])
def test_mm_ascent(n, L):
    rng = np.random.default_rng(n + L)
    centers = rng.normal(scale=2.0, size=(L, 4))
    values = centers[rng.integers(0, L, size=n)] + rng.standard_normal((n, 4))
    data = FeatureMatrix.from_array(values, kind="residual")
    for seed in range(3):
        model, _ = NonparametricMixture(MixtureOptions(seed=seed)).fit(data, L)
        trace = np.asarray(model.trace)
        assert np.all(np.diff(trace) >= -1e-8)
        assert trace[-1] >= trace[0] - 1e-8
        assert model.iterations == len(trace) - 1


@pytest.mark.slow
def test_mm_ascent_many_fits():
    """50 个随机数据集与初值上平滑对数似然单调不减"""
    for k in range(50):
        rng = np.random.default_rng(1000 + k)
        L = 2 + k % 3
        n = int(rng.integers(40, 160))
        centers = rng.normal(scale=2.5, size=(L, 3))
        values = centers[rng.integers(0, L, size=n)] + rng.standard_normal((n, 3))
        data = FeatureMatrix.from_array(values, kind="residual")
        model, _ = NonparametricMixture(MixtureOptions(seed=k, grid_points=128, restarts=5)).fit(data, L)
        assert np.all(np.diff(np.asarray(model.trace)) >= -1e-8)


def test_fit_is_deterministic(mixture):
    data, _ = _two_groups(n=60, gap=2.0, seed=9)
    first, post_a = mixture.fit(data, 2)
    second, post_b = mixture.fit(data, 2)
    assert first.loglik == second.loglik
    assert np.array_equal(post_a.values, post_b.values)


def test_invalid_component_count(mixture):
    data, _ = _two_groups(n=10)
    with pytest.raises(InvalidLError):
        mixture.fit(data, 0)
    with pytest.raises(InvalidLError):
        mixture.fit(data, 11)


def test_empty_component_after_restarts():
    """两个成分都不可能占到 60%，每次重启都失败"""
    data, _ = _two_groups(n=40, seed=2)
    strict = NonparametricMixture(MixtureOptions(min_proportion=0.6, restarts=1))
    with pytest.raises(EmptyComponentError) as info:
        strict.fit(data, 2)
    assert info.value.stage == "npmix"


# ---------------------------------------------------------------------- smoothed_loglik / posteriors

def test_duplicated_data_doubles_loglik(mixture, separated_fit):
    data, _, model, _ = separated_fit
    doubled = FeatureMatrix(regions=data.regions * 2, values=np.vstack([data.values, data.values]),
                            kind="residual")
    assert mixture.smoothed_loglik(model, doubled) == pytest.approx(2 * model.loglik, rel=1e-12)


def test_loglik_matches_term_by_term_evaluation(mixture):
    data = FeatureMatrix.from_array(np.random.default_rng(4).standard_normal((5, 2)), kind="residual")
    model, _ = NonparametricMixture(MixtureOptions(grid_points=64, seed=1)).fit(data, 2)

    total = 0.0
    for i in range(5):
        mix = 0.0
        for l in range(2):
            term = model.proportions[l]
            for j in range(2):
                table, h = model.table(l, j), model.bandwidths[j]
                u = table.grid
                c = np.full(u.size, table.step)
                c[0] = c[-1] = table.step / 2
                k = c * np.exp(-0.5 * ((data.values[i, j] - u) / h) ** 2)
                term *= np.exp(np.sum(k * np.log(np.maximum(table.values, 1e-12))) / np.sum(k))
            mix += term
        total += np.log(mix)
    assert mixture.smoothed_loglik(model, data) == pytest.approx(total, abs=1e-10)


def test_permuting_components(mixture, separated_fit):
    data, _, model, post = separated_fit
    swapped = model.permuted([1, 0])
    assert mixture.smoothed_loglik(swapped, data) == pytest.approx(model.loglik, abs=1e-9)
    assert np.allclose(mixture.posteriors(swapped, data).values, post.values[:, ::-1], atol=1e-12)


def test_loglik_grid_mismatch(mixture, separated_fit):
    _, _, model, _ = separated_fit
    far = FeatureMatrix.from_array(np.full((2, 3), 1e3), kind="residual")
    with pytest.raises(GridMismatchError):
        mixture.smoothed_loglik(model, far)
    narrow = FeatureMatrix.from_array(np.zeros((2, 2)), kind="residual")
    with pytest.raises(GridMismatchError):
        mixture.smoothed_loglik(model, narrow)


def test_scoring_uses_fitted_grid_size(mixture):
    data, _ = _two_groups(n=80, seed=3)
    model, post = NonparametricMixture(MixtureOptions(grid_points=64, seed=0)).fit(data, 2)
    assert model.grid_points == 64
    assert mixture.smoothed_loglik(model, data) == pytest.approx(model.loglik, abs=1e-9)
    rescored = mixture.posteriors(model, data)
    assert np.allclose(rescored.values, post.values, atol=1e-12)
    assert np.array_equal(mixture.map_assign(rescored).labels, mixture.map_assign(post).labels)


def test_identical_components_split_evenly(mixture):
    model = _flat_model([0.1, 0.1, 0.1])
    data = FeatureMatrix.from_array(np.array([[-1.0], [0.0], [2.5]]), kind="residual")
    assert np.allclose(mixture.posteriors(model, data).values, 1.0 / 3.0, atol=1e-12)


def test_density_ratio_sets_posterior(mixture):
    model = _flat_model([1.0, 0.01])
    data = FeatureMatrix.from_array(np.array([[0.3]]), kind="residual")
    post = mixture.posteriors(model, data).values[0]
    assert post[0] == pytest.approx(100.0 / 101.0, rel=1e-10)


# ---------------------------------------------------------------------- map_assign / select_L

def test_map_assign_rules():
    post = Posteriors.from_array([[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]])
    assert NonparametricMixture.map_assign(post).labels.tolist() == [1, 1, 2]


def test_map_assign_matches_scan():
    rng = np.random.default_rng(12)
    raw = rng.random((50, 4))
    post = Posteriors.from_array(raw / raw.sum(axis=1, keepdims=True))
    expected = []
    for row in post.values:
        best = 0
        for k in range(1, row.size):
            if row[k] > row[best]:
                best = k
        expected.append(best + 1)
    assert NonparametricMixture.map_assign(post).labels.tolist() == expected


def test_select_L_examples():
    loglik = [-1034, -894, -815, -791, -774, -767, -754, -743, -733, -734]
    assert NonparametricMixture.select_L(loglik, 15) == 5
    assert NonparametricMixture.select_L(np.arange(6) * 10.0, 15) == 1
    assert NonparametricMixture.select_L(np.cumsum([0, 20, 40, 60, 80]), 15) == 5
    with pytest.raises(TooFewValuesError):
        NonparametricMixture.select_L([-10.0], 15)


def test_fit_by_L_table(mixture):
    data, _ = _two_groups(n=60, seed=6)
    table = mixture.fit_by_L(data, l_max=3)
    assert table["L"].tolist() == [1, 2, 3]
    assert table["loglik"].iloc[1] > table["loglik"].iloc[0]


def test_model_report(separated_fit):
    _, _, model, _ = separated_fit
    report = yaml.safe_load(NonparametricMixture.model_report(model))
    assert report["L"] == 2
    assert sum(report["proportions"]) == pytest.approx(1.0)
    assert len(report["bandwidths"]) == 3
    assert report["smoothed_loglik"] == pytest.approx(model.loglik)
    assert report["iterations"] == model.iterations
