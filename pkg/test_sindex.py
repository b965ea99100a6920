#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
单指标回归服务测试
"""
import sys
from pathlib import Path

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest
import yaml
from scipy.stats import norm

from src.models.curves import CurveSet, FeatureMatrix
from src.models.regression import CovariateEffect, Covariates, IndexFit, IndexOptions
from src.models.simulation import ScenarioConfig
from src.utils.exceptions import (
    DegenerateCovariatesError, EmptyInputError, EmptyNeighborhoodError, NonPositiveEffectError
)
from src.wavelets import featurize_ti, get_extractor
from services.simulation_service import SimulationService
from services.sindex_service import SingleIndexRegressor, center_features, nadaraya_watson


def _angle(a, b):
    cos = abs(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def _synthetic(n=200, gamma=(1 / np.sqrt(2), 1 / np.sqrt(2)), link=np.square, columns=3, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, len(gamma)))
    z = X @ np.asarray(gamma)
    base = link(z)
    values = np.column_stack([base + k + noise * rng.standard_normal(n) for k in range(columns)])
    return FeatureMatrix.from_array(values), Covariates.from_array(X)


@pytest.fixture(scope="module")
def regressor():
    return SingleIndexRegressor(IndexOptions(seed=0))


@pytest.fixture(scope="module")
def quadratic_fit(regressor):
    features, covariates = _synthetic()
    return regressor.fit_gamma(features, covariates), features, covariates


# ---------------------------------------------------------------- 中心化与核估计

def test_center_features_examples():
    single = center_features(FeatureMatrix.from_array([[1.0], [3.0]]))
    assert np.allclose(single.values, [[-1.0], [1.0]])
    square = center_features(FeatureMatrix.from_array([[1.0, 4.0], [3.0, 6.0]]))
    assert np.allclose(square.values, [[-1.0, -1.0], [1.0, 1.0]])
    assert square.kind == "centered"


def test_center_features_zero_column_means():
    values = np.random.default_rng(1).standard_normal((30, 5)) * 10 + 3
    centered = center_features(FeatureMatrix.from_array(values))
    assert np.max(np.abs(centered.values.mean(axis=0))) < 1e-12


def test_center_features_needs_two_rows():
    with pytest.raises(EmptyInputError):
        center_features(FeatureMatrix.from_array([[1.0, 2.0]]))


def test_nadaraya_watson_examples():
    z = np.array([-1.0, 0.5, 2.0])
    assert nadaraya_watson(z, np.full(3, 4.2), 0.3, 0.7)[0] == pytest.approx(4.2)
    assert nadaraya_watson(np.array([-1.0, 1.0]), np.array([2.0, 6.0]), 0.0, 0.8)[0] == pytest.approx(4.0)
    value = nadaraya_watson(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 0.0, 1.0)[0]
    expected = norm.pdf(1.0) / (norm.pdf(0.0) + norm.pdf(1.0))
    assert value == pytest.approx(expected)
    assert value == pytest.approx(0.3775, abs=1e-4)


def test_nadaraya_watson_empty_neighborhood():
    with pytest.raises(EmptyNeighborhoodError):
        nadaraya_watson(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 1e6, 0.1)


def test_nadaraya_watson_leave_one_out_drops_self():
    z = np.array([0.0, 1.0, 2.0])
    y = np.array([1.0, 2.0, 3.0])
    loo = nadaraya_watson(z, y, z, 1.0, leave_one_out=True)
    w = norm.pdf(np.array([1.0, 2.0]))
    assert loo[0] == pytest.approx((w[0] * 2.0 + w[1] * 3.0) / w.sum())


# ---------------------------------------------------------------- γ 拟合

def test_single_covariate_forces_unit_gamma(regressor):
    features, covariates = _synthetic(n=40, gamma=(1.0,), link=np.sin)
    fit = regressor.fit_gamma(features, covariates)
    assert np.array_equal(fit.gamma, [1.0])


def test_recovers_quadratic_index(quadratic_fit):
    fit, _, _ = quadratic_fit
    assert _angle(fit.gamma, [1 / np.sqrt(2), 1 / np.sqrt(2)]) < 0.05
    assert abs(np.linalg.norm(fit.gamma) - 1.0) < 1e-10
    assert fit.gamma[0] > 0
    assert fit.bandwidth > 0


def test_fit_is_deterministic(regressor, quadratic_fit):
    fit, features, covariates = quadratic_fit
    again = regressor.fit_gamma(features, covariates)
    assert np.array_equal(fit.gamma, again.gamma)
    assert fit.loss == again.loss


def test_fitted_loss_beats_random_directions(regressor, quadratic_fit):
    fit, features, covariates = quadratic_fit
    Y = center_features(features).values
    rng = np.random.default_rng(123)
    for _ in range(64):
        v = rng.standard_normal(2)
        v /= np.linalg.norm(v)
        assert fit.loss <= regressor._pooled_loss(v, covariates.values, Y) + 1e-9


def test_fixed_bandwidth_is_used(regressor):
    features, covariates = _synthetic(n=60)
    fit = regressor.fit_gamma(features, covariates, bandwidth=0.4)
    assert fit.bandwidth == 0.4


def test_constrained_fit_two_covariates(regressor):
    features, covariates = _synthetic(n=80)
    fit = regressor.fit_gamma_constrained(features, covariates, zero_index=1)
    assert np.array_equal(fit.gamma, [1.0, 0.0])
    assert fit.zero_index == 1


def test_constrained_fit_loses_true_direction(regressor):
    features, covariates = _synthetic(n=150, gamma=(1.0, 0.0, 0.0), link=np.tanh, noise=0.05, seed=3)
    free = regressor.fit_gamma(features, covariates)
    constrained = regressor.fit_gamma_constrained(features, covariates, zero_index=0)
    assert constrained.gamma[0] == 0.0
    assert abs(np.linalg.norm(constrained.gamma) - 1.0) < 1e-10
    assert constrained.loss > free.loss


def test_constrained_refits_table(regressor):
    features, covariates = _synthetic(n=100, gamma=(0.6, 0.8, 0.0), link=np.tanh, noise=0.05, seed=4)
    table = regressor.constrained_refits(features, covariates)
    assert table["fit"].tolist() == ["gamma_hat", "test_1", "test_2", "test_3"]
    assert list(table.columns) == ["fit", "x1", "x2", "x3", "loss"]
    for k, name in enumerate(covariates.names, start=1):
        assert table.loc[k, name] == 0.0
    assert np.all(table["loss"].iloc[1:] >= table["loss"].iloc[0] * (1 - 1e-3))


def test_degenerate_covariates(regressor):
    X = np.column_stack([np.random.default_rng(0).standard_normal(20), np.ones(20)])
    features = FeatureMatrix.from_array(np.random.default_rng(1).standard_normal((20, 3)))
    with pytest.raises(DegenerateCovariatesError):
        regressor.fit_gamma(features, Covariates.from_array(X))
    with pytest.raises(DegenerateCovariatesError):
        Covariates.from_array(X).standardize()


def test_standardize_records_center_and_scale():
    X = np.random.default_rng(2).normal(5.0, 3.0, size=(50, 2))
    standardized = Covariates.from_array(X).standardize()
    assert standardized.standardized
    assert np.allclose(standardized.values.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(standardized.values.std(axis=0, ddof=1), 1.0)
    assert np.allclose(standardized.center, X.mean(axis=0))


# ---------------------------------------------------------------- 残差与效应

def test_residual_decomposition(regressor, quadratic_fit):
    fit, features, _ = quadratic_fit
    residuals = regressor.residuals(fit)
    fitted = regressor.fitted_link(fit)
    assert np.allclose(residuals.values + fitted[:, None], center_features(features).values, atol=1e-12)
    assert residuals.kind == "residual"


def test_noise_covariates_leave_features_nearly_centered(regressor):
    rng = np.random.default_rng(7)
    features = FeatureMatrix.from_array(rng.normal(0.0, 1.0, size=(200, 4)))
    covariates = Covariates.from_array(rng.standard_normal((200, 2)))
    fit = regressor.fit_gamma(features, covariates)
    link = regressor.fitted_link(fit)
    # 行均值的标准差约为 0.5，噪声协变量上的链接估计应远小于它
    assert np.std(link) < 0.25


def test_covariate_effect_normalized(regressor, quadratic_fit):
    fit, _, _ = quadratic_fit
    effect = regressor.covariate_effect(fit)
    assert abs(effect.values.mean() - 1.0) < 1e-10
    assert np.all(effect.values > 0)
    assert effect.scale == "log"


def test_constant_link_gives_unit_effect(regressor):
    features = FeatureMatrix.from_array(np.tile([1.0, 2.0, 3.0], (30, 1)))
    covariates = Covariates.from_array(np.random.default_rng(5).standard_normal((30, 2)))
    effect = regressor.covariate_effect(regressor.fit_gamma(features, covariates))
    assert np.allclose(effect.values, 1.0)


def test_adjust_curves():
    curves = CurveSet(regions=["a", "b"], values=np.arange(1.0, 17.0).reshape(2, 8))
    unchanged = SingleIndexRegressor.adjust_curves(curves, CovariateEffect.identity(["a", "b"]))
    assert np.array_equal(unchanged.values, curves.values)
    halved = SingleIndexRegressor.adjust_curves(
        curves, CovariateEffect(regions=["a", "b"], values=[1.0, 2.0], normalization=1.0))
    assert np.allclose(halved.values[1], curves.values[1] / 2)
    with pytest.raises(NonPositiveEffectError):
        SingleIndexRegressor.adjust_curves(
            curves, CovariateEffect(regions=["a", "b"], values=[1.0, 0.0], normalization=1.0))


def test_adjust_then_featurize_subtracts_log_effect():
    rng = np.random.default_rng(8)
    curves = CurveSet(regions=["a", "b", "c"], values=rng.standard_normal((3, 32)))
    effect = CovariateEffect(regions=["a", "b", "c"], values=[0.5, 1.0, 1.5], normalization=1.0)
    adjusted = get_extractor("ti").featurize_batch(SingleIndexRegressor.adjust_curves(curves, effect))
    for i, mu in enumerate(effect.values):
        assert np.allclose(adjusted.values[i], featurize_ti(curves.values[i]) - np.log(mu), atol=1e-10)


def test_log_odds_properties(regressor):
    features, covariates = _synthetic(n=150, link=lambda z: z, noise=0.01, seed=9)
    fit = regressor.fit_gamma(features, covariates)
    x, x_prime = np.array([0.5, 0.2]), np.array([-0.4, 0.1])
    assert regressor.log_odds(fit, x, x) == 0.0
    assert regressor.log_odds(fit, x, x_prime) == pytest.approx(-regressor.log_odds(fit, x_prime, x))
    expected = np.sign(np.dot(x, fit.gamma) - np.dot(x_prime, fit.gamma))
    assert np.sign(regressor.log_odds(fit, x, x_prime)) == expected


def test_link_error_exact_truth_and_offset(regressor, quadratic_fit):
    fit, _, _ = quadratic_fit
    truth = lambda a: regressor.nw_estimate(fit, a)
    assert regressor.link_error(fit, truth, fit.gamma) < 1e-20
    assert regressor.link_error(fit, lambda a: truth(a) + 5.0, fit.gamma) < 1e-20


def test_link_error_two_point_case(regressor):
    delta = 0.8
    fit = IndexFit(gamma=[1.0], bandwidth=0.01, index_values=[0.0, 1.0],
                   responses=[[-delta / 2], [delta / 2]], response_means=[0.0],
                   design=[[0.0], [1.0]], regions=["a", "b"])
    error = regressor.link_error(fit, lambda a: np.zeros_like(a), [1.0])
    assert error == pytest.approx(delta ** 2 / 2)


def test_reports(regressor, quadratic_fit):
    fit, _, covariates = quadratic_fit
    effect = regressor.covariate_effect(fit)
    report = yaml.safe_load(regressor.fit_report(fit, covariates, effect))
    assert set(report["gamma"]) == {"x1", "x2"}
    assert len(report["regions"]) == covariates.n
    assert report["standardized"] is False and "center" not in report
    table = regressor.region_report(fit, covariates, effect)
    assert list(table.columns) == ["region", "x1", "x2", "index", "mu_hat"]
    profile = regressor.effect_profile(fit)
    assert len(profile) == 200
    assert np.all(profile["mu_hat"] > 0) and np.all(profile["density"] > 0)


def test_index_fit_rejects_negative_first_component():
    with pytest.raises(ValueError):
        IndexFit(gamma=[-0.6, 0.8], bandwidth=1.0, index_values=[0.0, 1.0], responses=[[0.0], [0.0]],
                 response_means=[0.0], design=[[0.0, 0.0], [1.0, 1.0]], regions=["a", "b"])


# ---------------------------------------------------------------- 模拟数据

@pytest.mark.slow
def test_scenario_two_recovers_gamma():
    replicate = SimulationService().gen_replicate(ScenarioConfig(scenario=2, n=250, seed=1))
    regressor = SingleIndexRegressor()
    features = get_extractor("ti").featurize_batch(replicate.curves)
    fit = regressor.fit_gamma(features, replicate.covariates)
    assert np.all(np.abs(fit.gamma - replicate.gamma) < 0.1)

    residuals = regressor.residuals(fit)
    labels = replicate.labels.labels
    means = np.array([residuals.values[labels == k].mean(axis=0) for k in (1, 2, 3)])
    assert np.min(np.abs(means[0] - means[1]).max()) > 0.05
    assert np.min(np.abs(means[0] - means[2]).max()) > 0.05
