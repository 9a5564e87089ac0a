import logging
import math

import numpy as np
import pytest
from scipy import integrate, stats

from pit_capital.errors import DegenerateModelError, DomainError
from pit_capital.math_kernel import gauss_hermite_rule
from pit_capital.model import FactorModel, ProbitModel
from pit_capital.pd_engine import (
    CopulaParams,
    copula_to_probit,
    integrate_pit_pd,
    naive_ttc_pd,
    pit_pd_probit,
    pit_to_ttc,
    probit_to_copula,
    ttc_pd_by_integration,
    ttc_pds_from_probit,
    ttc_to_pit,
)


# ------------------------------------------------------------------
#  PIT / TTC 変換
# ------------------------------------------------------------------


def test_ttc_to_pit_downturn_values():
    """s = -2.33、ρ = 50% の景気後退で PD 3% → 約 20.4%、0.3% → 約 3.4%。"""
    assert ttc_to_pit(0.03, 0.5, -2.33) == pytest.approx(0.2042, abs=5e-4)
    assert ttc_to_pit(0.003, 0.5, -2.33) == pytest.approx(0.0338, abs=5e-4)


def test_pit_to_ttc_inverts():
    """pit_to_ttc ∘ ttc_to_pit が恒等写像になる。"""
    pds = np.array([1e-6, 0.003, 0.03, 0.2])
    for rho in (-0.6, 0.0, 0.3, 0.5):
        for s in (-3.0, -2.33, 0.0, 1.5):
            pit = ttc_to_pit(pds, rho, s)
            np.testing.assert_allclose(pit_to_ttc(pit, rho, s), pds, rtol=1e-10)


def test_ttc_to_pit_zero_sensitivity_is_identity():
    np.testing.assert_allclose(ttc_to_pit([0.01, 0.3], 0.0, -2.33), [0.01, 0.3], rtol=1e-14)


def test_ttc_to_pit_is_monotone_in_s():
    """ρ > 0 では s が小さいほど (景気が悪いほど) PIT PD が高い。"""
    pit = ttc_to_pit(0.03, 0.5, np.linspace(-3.0, 3.0, 13))
    assert np.all(np.diff(pit) < 0.0)
    counter = ttc_to_pit(0.03, -0.5, np.linspace(-3.0, 3.0, 13))
    assert np.all(np.diff(counter) > 0.0)


def test_neutral_scenario_is_not_identity():
    """s = 0 でも PIT PD = Φ(T/√(1-ρ²)) ≠ TTC PD。"""
    pit = ttc_to_pit(0.03, 0.5, 0.0)
    assert pit < 0.03
    assert pit == pytest.approx(stats.norm.cdf(stats.norm.ppf(0.03) / math.sqrt(0.75)), rel=1e-12)


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.2])
def test_transforms_reject_unit_sensitivity(rho: float):
    with pytest.raises(DomainError):
        ttc_to_pit(0.03, rho, 0.0)
    with pytest.raises(DomainError):
        pit_to_ttc(0.03, rho, 0.0)


def test_transforms_reject_degenerate_pd():
    with pytest.raises(DomainError):
        ttc_to_pit(0.0, 0.5, 0.0)
    with pytest.raises(DomainError):
        pit_to_ttc(1.0, 0.5, 0.0)


def test_integrated_pit_pd_recovers_ttc_pd():
    """PIT PD を S の分布で積分すると TTC PD に戻る。"""
    for pd in (0.003, 0.03):
        for rho in (-0.4, 0.5, 0.8):
            assert integrate_pit_pd(pd, rho) == pytest.approx(pd, rel=1e-7)


@pytest.mark.parametrize("pd", [1e-4, 1e-3, 0.003, 0.01, 0.03, 0.1, 0.3])
@pytest.mark.parametrize("rho", [-0.9, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9])
def test_mixture_identity_grid(pd: float, rho: float):
    """PD 0.01%〜30%、感応度 -0.9〜0.9 の格子で相対誤差 1e-8 以内。"""
    assert integrate_pit_pd(pd, rho) == pytest.approx(pd, rel=1e-8)


# ------------------------------------------------------------------
#  プロビット ↔ コピュラ
# ------------------------------------------------------------------


def test_probit_to_copula_one_factor():
    """b = -1 (v = 1) → ρ = 1/√2、w = 1、T = score/√2。"""
    fm = FactorModel.identity(1)
    cp = probit_to_copula(ProbitModel.from_loading([-2.0], [-1.0], fm), fm)
    assert cp.sensitivity == pytest.approx(1.0 / math.sqrt(2.0))
    np.testing.assert_allclose(cp.weights, [1.0])
    np.testing.assert_allclose(cp.thresholds, [-2.0 / math.sqrt(2.0)])


def test_probit_copula_round_trip():
    """相関のある 2 ファクターで probit → copula → probit が元に戻る。"""
    fm = FactorModel(np.array([[1.0, 0.4], [0.4, 2.0]]))
    pm = ProbitModel.from_loading([-2.5, -1.2, 0.3], [0.3, -0.7], fm)
    back = copula_to_probit(probit_to_copula(pm, fm), fm)
    np.testing.assert_allclose(back.scores, pm.scores, rtol=1e-12)
    np.testing.assert_allclose(back.loading, pm.loading, rtol=1e-12)
    assert back.var_bs == pytest.approx(pm.var_bs, rel=1e-12)


def _random_factor_model(rng: np.random.Generator, k: int) -> FactorModel:
    a = rng.normal(size=(k, k))
    return FactorModel(a @ a.T + 0.1 * np.eye(k))


def test_probit_copula_round_trip_random():
    """1000 組の乱数パラメータで probit → copula → probit が元に戻る。"""
    rng = np.random.default_rng(20)
    for _ in range(1000):
        k = int(rng.integers(1, 4))
        fm = _random_factor_model(rng, k)
        loading = rng.normal(scale=0.8, size=k)
        if fm.composite_variance(loading) < 1e-6:
            continue
        pm = ProbitModel.from_loading(rng.normal(-2.0, 1.0, size=3), loading, fm)
        back = copula_to_probit(probit_to_copula(pm, fm), fm)
        np.testing.assert_allclose(back.scores, pm.scores, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(back.loading, pm.loading, rtol=1e-10, atol=1e-12)
        assert back.var_bs == pytest.approx(pm.var_bs, rel=1e-10)


def test_copula_probit_round_trip_random():
    """1000 組の乱数パラメータで copula → probit → copula が元に戻る (ρ < 0 は (-ρ, -w) に写る)。"""
    rng = np.random.default_rng(21)
    for _ in range(1000):
        k = int(rng.integers(1, 4))
        fm = _random_factor_model(rng, k)
        rho = float(rng.uniform(-0.95, 0.95))
        if abs(rho) < 1e-3:
            continue
        w = rng.normal(size=k)
        w = w / math.sqrt(fm.composite_variance(w))
        cp = CopulaParams(rho, w, rng.normal(-2.0, 1.0, size=3))
        back = probit_to_copula(copula_to_probit(cp, fm), fm)
        sign = math.copysign(1.0, rho)
        assert back.sensitivity == pytest.approx(abs(rho), rel=1e-10)
        np.testing.assert_allclose(back.weights, sign * w, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(back.thresholds, cp.thresholds, rtol=1e-10, atol=1e-12)


def test_copula_weights_are_normalised():
    fm = FactorModel(np.array([[1.0, 0.4], [0.4, 2.0]]))
    cp = probit_to_copula(ProbitModel.from_loading([-2.0], [0.3, -0.7], fm), fm)
    assert fm.composite_variance(cp.weights) == pytest.approx(1.0, rel=1e-12)


def test_probit_pit_pd_equals_copula_conditional_pd():
    """同じ s に対してプロビットの PIT PD とコピュラの条件付き PD が一致する。"""
    fm = FactorModel.identity(2)
    pm = ProbitModel.from_loading([-2.0], [0.4, -0.3], fm)
    cp = probit_to_copula(pm, fm)
    for s in ([-2.0, 1.0], [0.5, 0.5], [1.5, -2.5]):
        s = np.array(s)
        copula_pd = ttc_to_pit(
            stats.norm.cdf(cp.thresholds[0]), cp.sensitivity, float(cp.weights @ s)
        )
        assert pit_pd_probit(pm.scores[0], pm.loading, s) == pytest.approx(copula_pd, rel=1e-10)


def test_sign_flipped_copula_maps_to_same_probit():
    """(ρ, w) と (-ρ, -w) は同じプロビットモデルに写る。"""
    fm = FactorModel.identity(1)
    a = copula_to_probit(CopulaParams(0.5, [1.0], [-1.5]), fm)
    b = copula_to_probit(CopulaParams(-0.5, [-1.0], [-1.5]), fm)
    np.testing.assert_allclose(a.loading, b.loading)
    np.testing.assert_allclose(a.scores, b.scores)


def test_zero_sensitivity_copula():
    """ρ = 0 → b = 0、var = 0、score = T。"""
    pm = copula_to_probit(CopulaParams(0.0, [1.0], [-1.2]), FactorModel.identity(1))
    assert pm.var_bs == 0.0
    np.testing.assert_array_equal(pm.loading, [0.0])
    np.testing.assert_array_equal(pm.scores, [-1.2])


def test_degenerate_probit_model():
    """var[b'S] = 0 → DegenerateModelError。"""
    fm = FactorModel.identity(1)
    with pytest.raises(DegenerateModelError):
        probit_to_copula(ProbitModel.from_loading([-2.0], [0.0], fm), fm)


def test_probit_to_copula_rejects_inconsistent_variance():
    with pytest.raises(DomainError):
        probit_to_copula(ProbitModel([-2.0], [1.0], 2.0), FactorModel.identity(1))


def test_pit_pd_probit_dimension_check():
    with pytest.raises(DomainError):
        pit_pd_probit(-2.0, [0.5, 0.5], [1.0])


# ------------------------------------------------------------------
#  積分による TTC PD
# ------------------------------------------------------------------


def test_integration_matches_closed_form():
    """求積値と閉形式 Φ(score/√(1+v)) が 1e-10 以内で一致し、quad とも一致する。"""
    score, var_bs = -2.2, 0.8
    result = ttc_pd_by_integration(score, var_bs)
    expected, _ = integrate.quad(
        lambda y: stats.norm.cdf(score + y) * stats.norm.pdf(y, scale=math.sqrt(var_bs)),
        -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12,
    )
    assert result.discrepancy < 1e-10
    assert result.closed_form == pytest.approx(expected, abs=1e-10)


def test_coarse_integration_warns(caplog):
    """節点が少なく閉形式と食い違う → warning が出る。"""
    with caplog.at_level(logging.WARNING, logger="pit_capital.pd_engine"):
        result = ttc_pd_by_integration(-3.0, 4.0, gauss_hermite_rule(2))
    assert result.discrepancy > 1e-8
    assert "differs from closed form" in caplog.text


def test_zero_variance_integration():
    result = ttc_pd_by_integration(-2.0, 0.0)
    assert result.quadrature == pytest.approx(stats.norm.cdf(-2.0), rel=1e-14)


def test_naive_pd_is_biased():
    """score < 0 では素朴な PD Φ(score) が真の TTC PD を下回る。"""
    score, var_bs = -2.0, 0.5
    pm = ProbitModel([score], [math.sqrt(var_bs)], var_bs)
    true_pd = ttc_pds_from_probit(pm)[0]
    assert naive_ttc_pd(score) < true_pd
    assert naive_ttc_pd(1.0) > ttc_pds_from_probit(ProbitModel([1.0], [1.0], 1.0))[0]
