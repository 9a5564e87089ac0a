"""CapitalReport の出力 (markdown 表・CSV・JSON) と JSON からの復元。

JSON スキーマ (フィールド名は固定):

    {
      "meta": {"mode": ..., "scenario": ..., "engine": ..., "seed": ...},
      "el": <float>,
      "input_pd": <float>,
      "entries": [{"alpha": ..., "var": ..., "ec": ..., "label": "TTC" | "PIT",
                   "var_display": "37%", "ec_display": "34.0%"}],
      "el_display": "3.0%",
      "warnings": [...]
    }

数値は常に完全精度で書き出し、表示用の丸めは *_display の文字列にのみ適用する。
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Any

import pandas as pd

from .capital import (
    AnalysisMode,
    CapitalEntry,
    CapitalLabel,
    CapitalReport,
)

MODE_TITLES = {
    AnalysisMode.TTC: "TTC analysis",
    AnalysisMode.PIT_INPUT: "PIT analysis: PIT input, TTC calculation",
    AnalysisMode.PIT_CALC: "PIT analysis: TTC input, PIT calculation",
}


@dataclass(frozen=True)
class DisplayRounding:
    """表示用の小数桁数 (パーセント表記)。"""

    var: int = 0
    capital: int = 1


def format_percent(value: float, decimals: int) -> str:
    return f"{value * 100:.{decimals}f}%"


def format_level(value: float) -> str:
    """信頼水準や PD を末尾の 0 を省いて表示する (99.9%、98%、0.3%)。"""
    return f"{round(value * 100, 6):g}%"


def capital_row_label(
    mode: AnalysisMode, entry: CapitalEntry, *, level: float | None = None
) -> str:
    """資本の行ラベル。level を与えると entry.confidence の代わりに表示する。"""
    shown = format_level(entry.confidence if level is None else level)
    if mode is AnalysisMode.TTC:
        return f"Capital ({shown})"
    return f"{entry.label.value} capital ({shown})"


# ------------------------------------------------------------------
#  出力
# ------------------------------------------------------------------


def report_to_dict(
    report: CapitalReport, rounding: DisplayRounding = DisplayRounding()
) -> dict[str, Any]:
    return {
        "meta": dict(report.meta),
        "el": report.expected_loss,
        "el_display": format_percent(report.expected_loss, rounding.capital),
        "input_pd": report.input_pd,
        "entries": [
            {
                "alpha": e.confidence,
                "var": e.var,
                "ec": e.ec,
                "label": e.label.value,
                "var_display": format_percent(e.var, rounding.var),
                "ec_display": format_percent(e.ec, rounding.capital),
            }
            for e in report.entries
        ],
        "warnings": list(report.warnings),
    }


def render_json(
    report: CapitalReport, rounding: DisplayRounding = DisplayRounding()
) -> str:
    return json.dumps(report_to_dict(report, rounding), indent=2, ensure_ascii=False) + "\n"


def render_csv(
    report: CapitalReport, rounding: DisplayRounding = DisplayRounding()
) -> str:
    """1 行 1 信頼水準の CSV。EL と入力 PD は全行に繰り返す。"""
    rows = report_to_dict(report, rounding)["entries"]
    frame = pd.DataFrame(
        rows, columns=["alpha", "var", "ec", "label", "var_display", "ec_display"]
    )
    frame.insert(0, "mode", report.mode.value)
    frame["el"] = report.expected_loss
    frame["input_pd"] = report.input_pd
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g")
    return buffer.getvalue()


def render_markdown(
    report: CapitalReport, rounding: DisplayRounding = DisplayRounding()
) -> str:
    lines = [
        f"| {MODE_TITLES[report.mode]} | |",
        "|---|---|",
        f"| Input PD | {format_percent(report.input_pd, 1)} |",
        f"| Expected loss | {format_percent(report.expected_loss, rounding.capital)} |",
    ]
    for e in report.entries:
        lines.append(
            f"| VaR ({format_level(e.confidence)}) | {format_percent(e.var, rounding.var)} |"
        )
        lines.append(
            f"| {capital_row_label(report.mode, e)} | {format_percent(e.ec, rounding.capital)} |"
        )
    lines.extend(f"\n> warning: {w}" for w in report.warnings)
    return "\n".join(lines) + "\n"


RENDERERS = {
    "md": render_markdown,
    "csv": render_csv,
    "json": render_json,
}


# ------------------------------------------------------------------
#  復元
# ------------------------------------------------------------------


def report_from_dict(data: dict[str, Any]) -> CapitalReport:
    """report_to_dict / render_json の出力から CapitalReport を復元する。"""
    meta = dict(data.get("meta", {}))
    return CapitalReport(
        expected_loss=float(data["el"]),
        entries=tuple(
            CapitalEntry(
                confidence=float(e["alpha"]),
                var=float(e["var"]),
                ec=float(e["ec"]),
                label=CapitalLabel(e["label"]),
            )
            for e in data["entries"]
        ),
        mode=AnalysisMode(meta["mode"]),
        input_pd=float(data["input_pd"]),
        warnings=tuple(data.get("warnings", ())),
        meta=meta,
    )


def parse_json_report(text: str) -> CapitalReport:
    return report_from_dict(json.loads(text))
