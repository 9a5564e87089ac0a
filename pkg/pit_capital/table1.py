"""100 債務者の同質ポートフォリオによる TTC / PIT 比較表の再現と自己検査。

設定: N = 100、エクスポージャー 1%、LGD 100%、1 ファクター、感応度 50%、
TTC PD 3% (非投資適格) と 0.3% (投資適格)。PIT 分析では系統ファクターを -2.33
(おおよそ 100 年に 1 度) に固定する。PIT 分析の信頼水準は銀行の TTC 目標 PD 0.1% を
感応度 50% と √50% で PIT に変換して導く。98.7% と 98% はその表示ラベル。
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from logging import getLogger

from .capital import (
    AnalysisMode,
    CapitalEntry,
    CapitalReport,
    Engine,
    pit_confidence_level,
    run_analysis,
)
from .loss_engine import McConfig
from .math_kernel import default_rule, gauss_hermite_rule
from .model import FactorModel, Obligor, Portfolio, Scenario
from .report import MODE_TITLES, capital_row_label, format_level, format_percent

logger = getLogger(__name__)

N_ASSETS = 100
SENSITIVITY = 0.5
SCENARIO_VALUE = -2.33
TTC_TARGET_PD = 0.001
BANK_SENSITIVITIES = (0.5, math.sqrt(0.5))
ASSET_PDS = (0.03, 0.003)
TTC_CONFIDENCE = 0.999
# 銀行の感応度ごとの PIT 信頼水準の表示ラベル (BANK_SENSITIVITIES と同じ順)
PIT_LEVEL_LABELS = (0.987, 0.98)

VAR_TOL = 1e-9
CAPITAL_TOL = 0.0005
MC_VAR_TOL = 0.01 + VAR_TOL
MC_CAPITAL_TOL = 0.01 + CAPITAL_TOL

# (モード, TTC PD) -> {信頼水準の表示ラベル: (VaR, capital)}
EXPECTED: dict[tuple[AnalysisMode, float], dict[float, tuple[float, float]]] = {
    (AnalysisMode.TTC, 0.03): {0.999: (0.37, 0.34)},
    (AnalysisMode.TTC, 0.003): {0.999: (0.09, 0.087)},
    (AnalysisMode.PIT_INPUT, 0.03): {
        0.999: (0.81, 0.606),
        0.987: (0.64, 0.436),
        0.98: (0.60, 0.396),
    },
    (AnalysisMode.PIT_INPUT, 0.003): {
        0.999: (0.39, 0.356),
        0.987: (0.21, 0.176),
        0.98: (0.18, 0.146),
    },
    (AnalysisMode.PIT_CALC, 0.03): {
        0.999: (0.34, 0.136),
        0.987: (0.30, 0.096),
        0.98: (0.29, 0.086),
    },
    (AnalysisMode.PIT_CALC, 0.003): {
        0.999: (0.10, 0.066),
        0.987: (0.08, 0.046),
        0.98: (0.07, 0.036),
    },
}


def table1_portfolio(ttc_pd: float) -> Portfolio:
    """エクスポージャー 1%、感応度 50%、重み 1 の 100 債務者ポートフォリオ。"""
    return Portfolio(
        obligors=tuple(
            Obligor(
                id=f"A{i + 1:03d}",
                exposure=1.0 / N_ASSETS,
                ttc_pd=ttc_pd,
                sensitivity=SENSITIVITY,
                factor_weights=(1.0,),
            )
            for i in range(N_ASSETS)
        ),
        factor_model=FactorModel.identity(1),
    )


def table1_scenario() -> Scenario:
    return Scenario.fixed([SCENARIO_VALUE])


def confidence_levels(mode: AnalysisMode) -> dict[float, float]:
    """
    表示ラベル -> 計算に使う信頼水準。

    TTC 分析は 99.9% のみ。PIT 分析では 99.9% に加えて、銀行の TTC 目標 PD を
    各感応度で PIT に変換した水準 (約 98.689% と 97.934%) を使う。
    """
    levels = {TTC_CONFIDENCE: TTC_CONFIDENCE}
    if mode is AnalysisMode.TTC:
        return levels
    for label, rho in zip(PIT_LEVEL_LABELS, BANK_SENSITIVITIES):
        levels[label] = pit_confidence_level(TTC_TARGET_PD, rho, SCENARIO_VALUE)
    return levels


@dataclass(frozen=True)
class Table1Cell:
    mode: AnalysisMode
    ttc_pd: float
    label: float
    confidence: float
    metric: str
    expected: float
    computed: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return abs(self.computed - self.expected) <= self.tolerance

    def describe(self) -> str:
        return (
            f"{MODE_TITLES[self.mode]} / PD {format_level(self.ttc_pd)} / "
            f"{self.metric} ({format_level(self.label)}): "
            f"expected {self.expected:.4f}, computed {self.computed:.6f}"
        )


@dataclass(frozen=True)
class Table1Result:
    reports: dict[tuple[AnalysisMode, float], CapitalReport]
    cells: tuple[Table1Cell, ...]

    @property
    def mismatches(self) -> list[str]:
        return [c.describe() for c in self.cells if not c.ok]

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def entry(self, mode: AnalysisMode, ttc_pd: float, label: float) -> CapitalEntry:
        """表示ラベル (99.9%、98.7%、98%) で指定したセルの結果。"""
        return self.reports[(mode, ttc_pd)].entry(confidence_levels(mode)[label])

    def to_markdown(self) -> str:
        """3 パネル構成の表を markdown で返す。"""
        header = " | ".join(format_level(pd) for pd in ASSET_PDS)
        lines: list[str] = []
        for mode in AnalysisMode:
            reports = [self.reports[(mode, pd)] for pd in ASSET_PDS]
            pd_label = "Asset PD (TTC)" if mode is AnalysisMode.TTC else "Input PD"
            lines.append(f"| **{MODE_TITLES[mode]}** | {header} |")
            lines.append("|---|---|---|")
            lines.append(
                f"| {pd_label} | "
                + " | ".join(format_level(round(r.input_pd, 3)) for r in reports)
                + " |"
            )
            for label in confidence_levels(mode):
                row = [self.entry(mode, pd, label) for pd in ASSET_PDS]
                lines.append(
                    f"| VaR ({format_level(label)}) | "
                    + " | ".join(format_percent(e.var, 0) for e in row)
                    + " |"
                )
                lines.append(
                    f"| {capital_row_label(mode, row[0], level=label)} | "
                    + " | ".join(format_percent(e.ec, 1) for e in row)
                    + " |"
                )
            lines.append("")
        return "\n".join(lines)

    def to_json(self) -> str:
        payload = {
            "passed": self.passed,
            "cells": [
                {
                    "mode": c.mode.value,
                    "ttc_pd": c.ttc_pd,
                    "label": c.label,
                    "alpha": c.confidence,
                    "metric": c.metric,
                    "expected": c.expected,
                    "computed": c.computed,
                    "ok": c.ok,
                }
                for c in self.cells
            ],
        }
        return json.dumps(payload, indent=2) + "\n"


def reproduce_table1(
    *, nodes: int | None = None, mc: McConfig | None = None
) -> Table1Result:
    """
    全パネルを計算し、期待値と比較したセルを返す。

    Args:
        nodes: 指定した場合はその節点数の Gauss-Hermite 求積を使う。
            None の場合は既定の複合求積則。
        mc: 指定した場合は全パネルをモンテカルロで計算し、許容誤差を 1 格子分広げる。

    Returns:
        各パネルの CapitalReport と 24 個 (VaR 12 + capital 12) のセル。
    """
    rule = default_rule() if nodes is None else gauss_hermite_rule(nodes)
    engine = Engine.AUTO if mc is None else Engine.MC
    var_tol = VAR_TOL if mc is None else MC_VAR_TOL
    capital_tol = CAPITAL_TOL if mc is None else MC_CAPITAL_TOL

    reports: dict[tuple[AnalysisMode, float], CapitalReport] = {}
    cells: list[Table1Cell] = []
    for (mode, ttc_pd), expected in EXPECTED.items():
        levels = confidence_levels(mode)
        scenario = Scenario.unconditional() if mode is AnalysisMode.TTC else table1_scenario()
        report = run_analysis(
            table1_portfolio(ttc_pd),
            mode,
            scenario,
            [levels[label] for label in expected],
            engine=engine,
            rule=rule,
            mc=mc,
        )
        reports[(mode, ttc_pd)] = report
        for label, (var, capital) in expected.items():
            alpha = levels[label]
            entry = report.entry(alpha)
            cells.append(
                Table1Cell(mode, ttc_pd, label, alpha, "VaR", var, entry.var, var_tol)
            )
            cells.append(
                Table1Cell(mode, ttc_pd, label, alpha, "capital", capital, entry.ec, capital_tol)
            )

    result = Table1Result(reports=reports, cells=tuple(cells))
    logger.info(
        "Table reproduction: %d/%d cells match",
        sum(c.ok for c in result.cells), len(result.cells),
    )
    return result
