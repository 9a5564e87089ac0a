import logging
import math

import numpy as np
import pytest

from pit_capital.capital import (
    AnalysisMode,
    CapitalLabel,
    Engine,
    economic_capital,
    expected_loss,
    pit_confidence_level,
    run_analysis,
    value_at_risk,
)
from pit_capital.errors import ConfigError, DomainError
from pit_capital.loss_engine import McConfig
from pit_capital.model import LossDistribution, LossSource, Scenario
from pit_capital.pd_engine import ttc_to_pit
from pit_capital.table1 import table1_portfolio

BANK_LEVEL_50 = pit_confidence_level(0.001, 0.5, -2.33)
BANK_LEVEL_SQRT50 = pit_confidence_level(0.001, math.sqrt(0.5), -2.33)


def _dist(levels, probs) -> LossDistribution:
    return LossDistribution(np.array(levels), np.array(probs), LossSource.CONDITIONAL_EXACT)


# ------------------------------------------------------------------
#  リスク尺度
# ------------------------------------------------------------------


def test_expected_loss():
    assert expected_loss(_dist([0.0, 0.5, 1.0], [0.5, 0.3, 0.2])) == pytest.approx(0.35)


def test_var_is_lower_quantile():
    """VaR は P[L ≤ ℓ] ≥ α を満たす最小の損失水準。"""
    d = _dist([0.0, 0.1, 0.2, 0.3], [0.9, 0.05, 0.04, 0.01])
    assert value_at_risk(d, 0.5) == 0.0
    assert value_at_risk(d, 0.9) == 0.0
    assert value_at_risk(d, 0.95) == 0.1
    assert value_at_risk(d, 0.96) == 0.2
    assert value_at_risk(d, 0.999) == 0.3


def test_var_is_a_loss_level():
    d = _dist([0.0, 0.25, 0.75], [0.2, 0.3, 0.5])
    for alpha in np.linspace(0.01, 0.99, 25):
        assert value_at_risk(d, alpha) in d.loss_levels


def test_var_is_monotone_in_alpha():
    dist = _dist(np.arange(5) / 4, [0.1, 0.2, 0.3, 0.25, 0.15])
    vars_ = [value_at_risk(dist, a) for a in (0.05, 0.3, 0.6, 0.85, 0.99)]
    assert vars_ == sorted(vars_)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5, 1.5])
def test_var_rejects_bad_confidence(alpha: float):
    with pytest.raises(DomainError):
        value_at_risk(_dist([0.0, 1.0], [0.5, 0.5]), alpha)


def test_negative_economic_capital_is_reported(caplog):
    """VaR < EL → EC は負のまま返り、warning が出る。"""
    d = _dist([0.0, 1.0], [0.6, 0.4])
    with caplog.at_level(logging.WARNING, logger="pit_capital.capital"):
        ec = economic_capital(d, 0.5)
    assert ec == pytest.approx(-0.4)
    assert "Negative economic capital" in caplog.text


def test_pit_confidence_levels():
    """銀行の TTC 目標 PD 0.1%、s = -2.33 → ρ = 50% で約 98.7%、√50% で約 98%。"""
    assert pit_confidence_level(0.001, 0.5, -2.33) == pytest.approx(0.98689, abs=1e-3)
    assert pit_confidence_level(0.001, math.sqrt(0.5), -2.33) == pytest.approx(0.97934, abs=1e-3)
    assert round(pit_confidence_level(0.001, 0.5, -2.33), 3) == 0.987
    assert round(pit_confidence_level(0.001, math.sqrt(0.5), -2.33), 2) == 0.98


def test_pit_confidence_level_without_sensitivity():
    assert pit_confidence_level(0.001, 0.0, -2.33) == pytest.approx(0.999, abs=1e-12)


# ------------------------------------------------------------------
#  run_analysis
# ------------------------------------------------------------------


def test_ttc_analysis():
    """TTC 分析: VaR 37%、capital 34%。"""
    report = run_analysis(
        table1_portfolio(0.03), AnalysisMode.TTC, Scenario.unconditional(), [0.999]
    )
    entry = report.entry(0.999)
    assert entry.var == pytest.approx(0.37, abs=1e-9)
    assert entry.ec == pytest.approx(0.34, abs=5e-4)
    assert entry.label is CapitalLabel.TTC
    assert report.meta == {
        "mode": "ttc", "scenario": "unconditional", "engine": "quadrature", "nodes": 960,
    }
    assert report.input_pd == pytest.approx(0.03)


def test_pit_calc_analysis():
    """TTC 入力・PIT 計算 (s = -2.33、銀行の感応度 50%): VaR 30%、PIT capital 9.6%。"""
    report = run_analysis(
        table1_portfolio(0.03), AnalysisMode.PIT_CALC, Scenario.fixed(-2.33),
        [0.999, BANK_LEVEL_50],
    )
    assert report.meta["engine"] == "exact"
    assert report.entry(0.999).label is CapitalLabel.TTC
    entry = report.entry(BANK_LEVEL_50)
    assert entry.label is CapitalLabel.PIT
    assert entry.var == pytest.approx(0.30, abs=1e-9)
    assert entry.ec == pytest.approx(0.096, abs=5e-4)


def test_pit_input_analysis():
    """PIT 入力・TTC 計算 (PD 0.3%、銀行の感応度 √50%): VaR 18%、PIT capital 14.6%。"""
    report = run_analysis(
        table1_portfolio(0.003), AnalysisMode.PIT_INPUT, Scenario.fixed(-2.33),
        [BANK_LEVEL_SQRT50],
    )
    entry = report.entry(BANK_LEVEL_SQRT50)
    assert entry.var == pytest.approx(0.18, abs=1e-9)
    assert entry.ec == pytest.approx(0.146, abs=5e-4)
    assert report.meta["engine"] == "quadrature"
    assert report.input_pd == pytest.approx(0.0338, abs=5e-4)


def test_pit_input_el_uses_pit_pds():
    """PIT モードの EL は PIT PD に基づく。"""
    report = run_analysis(
        table1_portfolio(0.03), AnalysisMode.PIT_INPUT, Scenario.fixed(-2.33), [0.999]
    )
    assert report.expected_loss == pytest.approx(report.input_pd, abs=1e-9)
    assert report.expected_loss == pytest.approx(0.204, abs=1e-3)


def test_pit_input_saturated_pds_are_clamped():
    """極端なシナリオで PIT PD が 1 に丸められても検証エラーにせず、(0, 1) に収めて続行する。"""
    report = run_analysis(
        table1_portfolio(0.5).with_sensitivities(0.9),
        AnalysisMode.PIT_INPUT,
        Scenario.fixed(-12.0),
        [0.999],
    )
    assert report.entry(0.999).var == pytest.approx(1.0)
    assert report.expected_loss == pytest.approx(1.0)
    assert any("clamped" in w for w in report.warnings)


def test_neutral_scenario_warning():
    """s = 0 の PIT 入力 → PD が変わる旨の warning が report に残る。"""
    report = run_analysis(
        table1_portfolio(0.03), AnalysisMode.PIT_INPUT, Scenario.fixed(0.0), [0.999]
    )
    assert any("neutral scenario" in w for w in report.warnings)


def test_zero_sensitivity_equivalence():
    """ρ = 0 の TTC 計算に PIT PD を入れた分布 = s 固定の PIT 計算。"""
    p = table1_portfolio(0.03)
    sc = Scenario.fixed(-2.33)
    pit_calc = run_analysis(p, AnalysisMode.PIT_CALC, sc, [0.999, 0.98])
    pit = p.with_ttc_pds(ttc_to_pit(p.ttc_pds, p.sensitivities, -2.33))
    independent = run_analysis(
        pit.with_sensitivities(0.0), AnalysisMode.TTC, Scenario.unconditional(), [0.999, 0.98]
    )
    for a, b in zip(pit_calc.entries, independent.entries):
        assert a.var == pytest.approx(b.var, abs=1e-9)
        assert a.ec == pytest.approx(b.ec, abs=1e-9)


def test_mode_scenario_mismatch():
    p = table1_portfolio(0.03)
    with pytest.raises(ConfigError):
        run_analysis(p, AnalysisMode.TTC, Scenario.fixed(-2.33), [0.999])
    with pytest.raises(ConfigError):
        run_analysis(p, AnalysisMode.PIT_CALC, Scenario.unconditional(), [0.999])


def test_engine_mode_mismatch():
    p = table1_portfolio(0.03)
    with pytest.raises(ConfigError):
        run_analysis(
            p, AnalysisMode.PIT_CALC, Scenario.fixed(-2.33), [0.999], engine=Engine.QUADRATURE
        )
    with pytest.raises(ConfigError):
        run_analysis(p, AnalysisMode.TTC, Scenario.unconditional(), [0.999], engine=Engine.EXACT)
    with pytest.raises(ConfigError):
        run_analysis(p, AnalysisMode.TTC, Scenario.unconditional(), [0.999], engine=Engine.MC)


def test_truncated_ttc_analysis_uses_monte_carlo():
    sc = Scenario.truncated([(-math.inf, -1.0)])
    report = run_analysis(
        table1_portfolio(0.03), AnalysisMode.TTC, sc, [0.99],
        mc=McConfig(n_sims=20_000, seed=3),
    )
    assert report.meta["engine"] == "mc"
    assert report.meta["seed"] == 3
    assert report.meta["scenario"] == "trunc:f1=-inf..-1.0"
    # S ≤ -1 の条件付き EL は TTC PD を上回る
    assert report.expected_loss > 0.03


def test_mc_pit_calc_agrees_with_exact():
    p = table1_portfolio(0.03)
    sc = Scenario.fixed(-2.33)
    exact = run_analysis(p, AnalysisMode.PIT_CALC, sc, [0.99])
    mc = run_analysis(
        p, AnalysisMode.PIT_CALC, sc, [0.99], engine=Engine.MC,
        mc=McConfig(n_sims=200_000, seed=9),
    )
    assert mc.entry(0.99).var == pytest.approx(exact.entry(0.99).var, abs=0.01 + 1e-9)
    assert mc.expected_loss == pytest.approx(exact.expected_loss, abs=1e-3)


def test_entry_lookup_missing():
    report = run_analysis(
        table1_portfolio(0.03), AnalysisMode.TTC, Scenario.unconditional(), [0.999]
    )
    with pytest.raises(KeyError):
        report.entry(0.99)
