"""損失分布に対するリスク尺度と分析の実行。

期待損失 (EL)、VaR (下側分位点)、経済資本 (EC = VaR - EL) と、
銀行自身の TTC 目標 PD から PIT 信頼水準を導く変換を提供する。
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from logging import getLogger
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .loss_engine import (
    DEFAULT_LOSS_GRID,
    McConfig,
    mc_loss_distribution,
    pit_loss_distribution,
    ttc_loss_distribution,
)
from .math_kernel import MAX_EXACT_OBLIGORS, QuadratureRule, default_rule
from .model import LossDistribution, Portfolio, Scenario, ScenarioKind
from .pd_engine import ttc_to_pit

logger = getLogger(__name__)

DEFAULT_TTC_CONFIDENCE = 0.999
_CDF_SLACK = 1e-12
_PD_FLOOR = np.nextafter(0.0, 1.0)
_PD_CEILING = np.nextafter(1.0, 0.0)


class AnalysisMode(str, Enum):
    """
    分析モード。

    - PIT_INPUT: PIT 入力・TTC 計算。PD を PIT に変換し、感応度はそのまま TTC 計算する。
    - PIT_CALC: TTC 入力・PIT 計算。TTC PD のまま系統ファクターを固定して計算する。
    """

    TTC = "ttc"
    PIT_INPUT = "pit-input"
    PIT_CALC = "pit-calc"


class Engine(str, Enum):
    AUTO = "auto"
    QUADRATURE = "quadrature"
    EXACT = "exact"
    MC = "mc"


class CapitalLabel(str, Enum):
    TTC = "TTC"
    PIT = "PIT"


@dataclass(frozen=True)
class CapitalEntry:
    confidence: float
    var: float
    ec: float
    label: CapitalLabel


@dataclass(frozen=True)
class CapitalReport:
    """
    分析結果。

    Attributes:
        expected_loss: 期待損失。
        entries: 信頼水準ごとの VaR と EC。
        mode: 分析モード。
        input_pd: 計算に入力した PD のエクスポージャー加重平均。
        warnings: 負の EC などの注意事項。
        meta: シナリオ・エンジン・シードなどの付帯情報。
    """

    expected_loss: float
    entries: tuple[CapitalEntry, ...]
    mode: AnalysisMode
    input_pd: float
    warnings: tuple[str, ...] = ()
    meta: dict[str, Any] = field(default_factory=dict)

    def entry(self, confidence: float) -> CapitalEntry:
        for e in self.entries:
            if math.isclose(e.confidence, confidence, rel_tol=0.0, abs_tol=1e-12):
                return e
        raise KeyError(f"No entry for confidence {confidence!r}")


# ------------------------------------------------------------------
#  リスク尺度
# ------------------------------------------------------------------


def expected_loss(d: LossDistribution) -> float:
    """Σ ℓ P[L = ℓ]。"""
    return float(d.loss_levels @ d.probabilities)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"Confidence level must lie in (0, 1), got {alpha!r}")


def value_at_risk(d: LossDistribution, alpha: float) -> float:
    """
    下側分位点 inf{ℓ : P[L ≤ ℓ] ≥ α} を返す。戻り値は必ず d.loss_levels の要素。

    累積和の丸め誤差を吸収するため 1e-12 の余裕を持たせて比較する。
    """
    _check_alpha(alpha)
    cdf = d.cdf()
    idx = int(np.searchsorted(cdf, alpha - _CDF_SLACK, side="left"))
    return float(d.loss_levels[min(idx, len(cdf) - 1)])


def economic_capital(d: LossDistribution, alpha: float) -> float:
    """
    Unexpected Loss = VaR - EL。

    負になっても 0 に切り上げない (warning を出す)。
    """
    ec = value_at_risk(d, alpha) - expected_loss(d)
    if ec < 0.0:
        logger.warning("Negative economic capital %.6g at confidence %.6g", ec, alpha)
    return ec


def pit_confidence_level(ttc_target_pd: float, rho_bank: float, s: float) -> float:
    """
    銀行の TTC 目標 PD を資産と同じ方法で PIT に変換し、信頼水準 1 - PIT 目標 PD を返す。

    Args:
        ttc_target_pd: 銀行の TTC 目標 PD (例: 0.1%)。
        rho_bank: 銀行の系統リスク感応度。
        s: 合成ファクターの値。
    """
    return 1.0 - float(ttc_to_pit(ttc_target_pd, rho_bank, s))


# ------------------------------------------------------------------
#  分析の実行
# ------------------------------------------------------------------


def _resolve_engine(
    engine: Engine, mode: AnalysisMode, p: Portfolio, sc: Scenario
) -> Engine:
    """モードとシナリオに対して実際に使うエンジンを決める。"""
    fits_exact = p.size <= MAX_EXACT_OBLIGORS
    if mode is AnalysisMode.PIT_CALC:
        allowed = {Engine.EXACT, Engine.MC}
        default = Engine.EXACT if fits_exact else Engine.MC
    elif sc.kind is ScenarioKind.TRUNCATED:
        allowed = {Engine.MC}
        default = Engine.MC
    else:
        allowed = {Engine.QUADRATURE, Engine.MC}
        default = (
            Engine.QUADRATURE if p.factor_model.k == 1 and fits_exact else Engine.MC
        )

    if engine is Engine.AUTO:
        return default
    if engine not in allowed:
        raise ConfigError(
            f"Engine {engine.value!r} cannot run mode {mode.value!r} "
            f"with a {sc.kind.value} scenario"
        )
    return engine


def _check_mode_scenario(mode: AnalysisMode, sc: Scenario) -> None:
    if mode is AnalysisMode.TTC and sc.kind is ScenarioKind.FIXED:
        raise ConfigError(
            "TTC mode integrates over the systematic factors; use a PIT mode for fixed scenarios"
        )
    if mode is not AnalysisMode.TTC and sc.kind is not ScenarioKind.FIXED:
        raise ConfigError(f"Mode {mode.value!r} requires a fixed scenario")


def run_analysis(
    p: Portfolio,
    mode: AnalysisMode,
    sc: Scenario,
    confidences: Sequence[float],
    *,
    engine: Engine = Engine.AUTO,
    rule: QuadratureRule | None = None,
    mc: McConfig | None = None,
    grid: float = DEFAULT_LOSS_GRID,
    ttc_confidence: float = DEFAULT_TTC_CONFIDENCE,
) -> CapitalReport:
    """
    指定モードで損失分布を計算し、各信頼水準の VaR と EC をまとめる。

    - TTC: TTC PD で TTC 計算 (シナリオは無条件または切断)。
    - PIT_INPUT: 各 PD を ttc_to_pit で PIT PD に変換し、感応度はそのままで TTC 計算。
    - PIT_CALC: TTC PD のまま系統ファクターを s に固定して計算。

    EL は常に計算に使った分布から求めるため、PIT モードでは PIT PD に基づく。
    PIT モードでは信頼水準が ttc_confidence に等しい行を TTC、それ以外を PIT と表示する。

    Raises:
        ConfigError: モードとシナリオ・エンジンの組み合わせが不正な場合。
    """
    for alpha in confidences:
        _check_alpha(alpha)
    _check_mode_scenario(mode, sc)
    sc.check_dimension(p.factor_model.k)
    resolved = _resolve_engine(engine, mode, p, sc)
    if resolved is Engine.MC and mc is None:
        raise ConfigError("Monte Carlo engine requires an McConfig")
    logger.debug("Mode %s resolved to engine %s", mode.value, resolved.value)

    warnings: list[str] = []
    calc = p
    if mode is AnalysisMode.PIT_INPUT:
        pit_pds = np.asarray(
            ttc_to_pit(p.ttc_pds, p.sensitivities, p.composite_factor(sc.fixed_values))
        )
        saturated = (pit_pds <= 0.0) | (pit_pds >= 1.0)
        if np.any(saturated):
            msg = (
                f"{int(np.count_nonzero(saturated))} PIT PD(s) at {sc.describe()} "
                "round to 0 or 1 and were clamped into (0, 1)"
            )
            logger.warning(msg)
            warnings.append(msg)
            pit_pds = np.clip(pit_pds, _PD_FLOOR, _PD_CEILING)
        calc = p.with_ttc_pds(pit_pds)
        if sc.is_neutral and not np.allclose(pit_pds, p.ttc_pds, rtol=0.0, atol=1e-12):
            msg = (
                "PIT input PDs at the neutral scenario s=0 differ from the TTC PDs "
                "(Φ(T/√(1-ρ²)) ≠ Φ(T) for T ≠ 0)"
            )
            logger.warning(msg)
            warnings.append(msg)

    # --- 損失分布 ---
    if resolved is Engine.MC:
        calc_scenario = Scenario.unconditional() if mode is AnalysisMode.PIT_INPUT else sc
        dist = mc_loss_distribution(calc, calc_scenario, mc, grid=grid)
    elif resolved is Engine.EXACT:
        dist = pit_loss_distribution(calc, sc, grid=grid)
    else:
        rule = rule or default_rule()
        dist = ttc_loss_distribution(calc, rule, grid=grid)

    # --- リスク尺度 ---
    el = expected_loss(dist)
    entries = []
    for alpha in confidences:
        var = value_at_risk(dist, alpha)
        ec = var - el
        if ec < 0.0:
            msg = f"Negative economic capital {ec:.6g} at confidence {alpha:.6g}"
            logger.warning(msg)
            warnings.append(msg)
        if mode is AnalysisMode.TTC or math.isclose(alpha, ttc_confidence, abs_tol=1e-12):
            label = CapitalLabel.TTC
        else:
            label = CapitalLabel.PIT
        entries.append(CapitalEntry(confidence=alpha, var=var, ec=ec, label=label))

    meta: dict[str, Any] = {
        "mode": mode.value,
        "scenario": sc.describe(),
        "engine": resolved.value,
    }
    if resolved is Engine.MC:
        meta["seed"] = mc.seed
    elif resolved is Engine.QUADRATURE:
        meta["nodes"] = rule.n_nodes

    input_pd = float(calc.exposures @ calc.ttc_pds)
    return CapitalReport(
        expected_loss=el,
        entries=tuple(entries),
        mode=mode,
        input_pd=input_pd,
        warnings=tuple(warnings),
        meta=meta,
    )
