"""pit-capital コマンドラインインターフェース。

サブコマンド:

    analyze            ポートフォリオの VaR / 経済資本を計算する
    reproduce-table1   100 債務者の比較表を再現し、期待値と照合する
    validate           ポートフォリオ CSV (またはディレクトリ) を検査する
    transform-pd       単一の PD を TTC と PIT の間で変換する
    confidence-level   銀行の TTC 目標 PD から PIT 信頼水準を求める

終了コード: 0 成功、2 設定・構文・I/O エラー、3 検証エラー、4 数値・容量エラー、
5 比較表の不一致。エラー時は JSON のエラーオブジェクトを標準エラーに書き出す。
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from logging import getLogger
from pathlib import Path
from typing import Any, Sequence

import yaml

from .capital import AnalysisMode, Engine, pit_confidence_level, run_analysis
from .errors import (
    ConfigError,
    DomainError,
    GoldenMismatchError,
    PitCapitalError,
    PortfolioParseError,
    PortfolioValidationError,
)
from .loader import find_portfolio_files, load_portfolio
from .loss_engine import DEFAULT_LOSS_GRID, McConfig
from .math_kernel import gauss_hermite_rule
from .model import Portfolio, Scenario, ScenarioKind
from .pd_engine import pit_to_ttc, ttc_to_pit
from .report import RENDERERS, DisplayRounding
from .table1 import reproduce_table1

logger = getLogger(__name__)

DEFAULT_SIMS = 100_000
DEFAULT_CONFIDENCES = (0.999,)
FORMATS = tuple(RENDERERS)


# ------------------------------------------------------------------
#  実行設定
# ------------------------------------------------------------------


def _parse_rounding(raw: Any) -> DisplayRounding:
    """表示桁数を "VaR桁,資本桁" (例: "0,1") または {var, capital} の mapping から読む。"""
    if isinstance(raw, DisplayRounding):
        return raw
    if isinstance(raw, dict):
        unknown = set(raw) - {"var", "capital"}
        if unknown:
            raise ValueError(f"unknown rounding keys {sorted(unknown)}")
        rounding = DisplayRounding(**{k: int(v) for k, v in raw.items()})
    else:
        parts = str(raw).split(",")
        if len(parts) != 2:
            raise ValueError(f"rounding must look like 'VAR,CAPITAL', got {raw!r}")
        rounding = DisplayRounding(var=int(parts[0]), capital=int(parts[1]))
    if rounding.var < 0 or rounding.capital < 0:
        raise ValueError(f"decimal places must be nonnegative, got {raw!r}")
    return rounding


@dataclass(frozen=True)
class RunConfig:
    """
    analyze の実行設定。

    YAML の実行ファイル (--config) から読み込み、明示したコマンドライン引数で上書きする。
    YAML のキー名はフィールド名と同じ (alpha / bank_rho はリスト)。
    """

    portfolio: str | None = None
    factors: str | None = None
    mode: AnalysisMode = AnalysisMode.TTC
    scenario: str | None = None
    alpha: tuple[float, ...] = ()
    engine: Engine = Engine.AUTO
    sims: int = DEFAULT_SIMS
    seed: int = 0
    workers: int = 1
    antithetic: bool = False
    nodes: int | None = None
    format: str = "md"
    rounding: DisplayRounding = DisplayRounding()
    normalize: bool = False
    normalize_weights: bool = False
    target_pd: float | None = None
    bank_rho: tuple[float, ...] = ()
    loss_grid: float = DEFAULT_LOSS_GRID

    @classmethod
    def keys(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    def merged(self, overrides: dict[str, Any]) -> RunConfig:
        """None でない値だけで上書きした設定を返す。"""
        unknown = set(overrides) - self.keys()
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        values = {k: v for k, v in overrides.items() if v is not None}
        try:
            if "mode" in values:
                values["mode"] = AnalysisMode(values["mode"])
            if "engine" in values:
                values["engine"] = Engine(values["engine"])
            for key in ("alpha", "bank_rho"):
                if key in values:
                    raw = values[key]
                    raw = raw if isinstance(raw, (list, tuple)) else [raw]
                    values[key] = tuple(float(v) for v in raw)
            for key in ("sims", "seed", "workers", "nodes"):
                if key in values:
                    values[key] = int(values[key])
            for key in ("target_pd", "loss_grid"):
                if key in values:
                    values[key] = float(values[key])
            if "rounding" in values:
                values["rounding"] = _parse_rounding(values["rounding"])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration value: {e}") from e
        if values.get("format", self.format) not in FORMATS:
            raise ConfigError(f"Unknown output format {values['format']!r}")
        bad = [a for a in values.get("alpha", ()) if not 0.0 < a < 1.0]
        if bad:
            raise ConfigError(f"Confidence levels must lie in (0, 1), got {bad}")
        return replace(self, **values)

    @classmethod
    def from_yaml(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: cannot parse run file: {e}") from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: run file must be a mapping")
        return cls().merged(data)

    def mc_config(self) -> McConfig:
        return McConfig(
            n_sims=self.sims,
            seed=self.seed,
            antithetic=self.antithetic,
            n_workers=self.workers,
        )


def parse_scenario(spec: str | None, k: int) -> Scenario:
    """
    --scenario の文字列を Scenario に変換する。

    書式:
        fixed:-2.33            (k > 1 はカンマ区切り)
        trunc:f1=-inf..-1.0    (指定のないファクターは制限なし)
        unconditional          (省略時も同じ)

    Raises:
        ConfigError: 書式が不正な場合。
    """
    if spec is None or spec.strip() == "unconditional":
        return Scenario.unconditional()
    kind, _, body = spec.strip().partition(":")
    try:
        if kind == "fixed":
            return Scenario.fixed([float(v) for v in body.split(",")])
        if kind == "trunc":
            box = [(-math.inf, math.inf)] * k
            for part in body.split(","):
                name, _, interval = part.strip().partition("=")
                lo, sep, hi = interval.partition("..")
                if not name.startswith("f") or not sep:
                    raise ValueError(f"bad interval {part!r}")
                j = int(name[1:]) - 1
                if not 0 <= j < k:
                    raise ValueError(f"factor {name} out of range 1..{k}")
                box[j] = (float(lo), float(hi))
            return Scenario.truncated(box)
    except (ValueError, DomainError) as e:
        raise ConfigError(f"Invalid scenario {spec!r}: {e}") from e
    raise ConfigError(f"Invalid scenario {spec!r}: expected fixed:..., trunc:... or unconditional")


def _write_output(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)
        logger.info("Wrote %s", output)


# ------------------------------------------------------------------
#  サブコマンド
# ------------------------------------------------------------------


def _derived_confidences(cfg: RunConfig, p: Portfolio, sc: Scenario) -> list[float]:
    """--target-pd / --bank-rho から PIT 信頼水準を導く。"""
    if cfg.target_pd is None and not cfg.bank_rho:
        return []
    if cfg.target_pd is None or not cfg.bank_rho:
        raise ConfigError("--target-pd and --bank-rho must be given together")
    if sc.kind is not ScenarioKind.FIXED or p.factor_model.k != 1:
        raise ConfigError("Derived confidence levels need a fixed one-factor scenario")
    # 銀行の合成ファクターは分散 1 に正規化した 1 ファクター
    s = float(sc.fixed_values[0]) / math.sqrt(float(p.factor_model.covariance[0, 0]))
    return [pit_confidence_level(cfg.target_pd, rho, s) for rho in cfg.bank_rho]


def cmd_analyze(cfg: RunConfig, output: str | None = None) -> int:
    if cfg.portfolio is None:
        raise ConfigError("analyze needs --portfolio (or 'portfolio' in the run file)")
    p = load_portfolio(
        cfg.portfolio,
        cfg.factors,
        normalize=cfg.normalize,
        normalize_weights=cfg.normalize_weights,
    )
    sc = parse_scenario(cfg.scenario, p.factor_model.k)
    confidences = list(cfg.alpha or DEFAULT_CONFIDENCES)
    confidences += _derived_confidences(cfg, p, sc)

    report = run_analysis(
        p,
        cfg.mode,
        sc,
        confidences,
        engine=cfg.engine,
        rule=None if cfg.nodes is None else gauss_hermite_rule(cfg.nodes),
        mc=cfg.mc_config(),
        grid=cfg.loss_grid,
    )
    _write_output(RENDERERS[cfg.format](report, cfg.rounding), output)
    return 0


def cmd_reproduce_table1(args: argparse.Namespace) -> int:
    mc = None
    if args.engine == Engine.MC.value:
        mc = McConfig(n_sims=args.sims, seed=args.seed, n_workers=args.workers)
    result = reproduce_table1(nodes=args.nodes, mc=mc)
    text = result.to_json() if args.format == "json" else result.to_markdown()
    _write_output(text, args.output)
    if not result.passed:
        raise GoldenMismatchError(
            f"{len(result.mismatches)} table cell(s) differ from the expected values",
            result.mismatches,
        )
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    target = Path(args.path)
    files = find_portfolio_files(target) if target.is_dir() else [target]

    parse_failures: list[str] = []
    violations: list[str] = []
    for path in files:
        try:
            p = load_portfolio(
                path,
                args.factors,
                normalize=args.normalize,
                normalize_weights=args.normalize_weights,
            )
        except PortfolioParseError as e:
            parse_failures.append(str(e))
        except PortfolioValidationError as e:
            violations.extend(f"{path}: {v}" for v in e.violations)
        else:
            print(f"OK {path} ({p.size} obligors, k={p.factor_model.k})")

    if parse_failures:
        raise PortfolioParseError(
            f"{len(parse_failures)} portfolio file(s) could not be parsed",
            details=parse_failures,
        )
    if violations:
        raise PortfolioValidationError(
            f"{len(violations)} invariant violation(s) found", violations
        )
    return 0


def cmd_transform_pd(args: argparse.Namespace) -> int:
    fn = ttc_to_pit if args.direction == "ttc-to-pit" else pit_to_ttc
    result = float(fn(args.pd, args.rho, args.s))
    payload = {
        "direction": args.direction,
        "pd": args.pd,
        "rho": args.rho,
        "s": args.s,
        "result": result,
    }
    print(json.dumps(payload))
    return 0


def cmd_confidence_level(args: argparse.Namespace) -> int:
    alpha = pit_confidence_level(args.target_pd, args.rho, args.s)
    print(json.dumps({"target_pd": args.target_pd, "rho": args.rho, "s": args.s, "alpha": alpha}))
    return 0


# ------------------------------------------------------------------
#  引数の解析
# ------------------------------------------------------------------


def _add_portfolio_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--factors", default=None, help="factor covariance sidecar (JSON/YAML)")
    sub.add_argument("--normalize", action="store_true", default=None,
                     help="rescale exposures to sum to 1")
    sub.add_argument("--normalize-weights", action="store_true", default=None,
                     help="rescale factor weights to unit composite variance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pit-capital",
        description="Economic capital under through-the-cycle and point-in-time assumptions",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for INFO, -vv for DEBUG logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # analyze: None は「未指定」を表し、実行ファイルの値を上書きしない
    analyze = subparsers.add_parser("analyze", help="compute VaR and economic capital")
    analyze.add_argument("--config", default=None, help="YAML run file")
    analyze.add_argument("--portfolio", default=None, help="portfolio CSV or bundled name")
    _add_portfolio_options(analyze)
    analyze.add_argument("--mode", choices=[m.value for m in AnalysisMode], default=None)
    analyze.add_argument("--scenario", default=None,
                         help="fixed:-2.33 | trunc:f1=-inf..-1.0 | unconditional")
    analyze.add_argument("--alpha", type=float, action="append", default=None,
                         help="confidence level (repeatable)")
    analyze.add_argument("--engine", choices=[e.value for e in Engine], default=None)
    analyze.add_argument("--sims", type=int, default=None)
    analyze.add_argument("--seed", type=int, default=None)
    analyze.add_argument("--workers", type=int, default=None)
    analyze.add_argument("--antithetic", action="store_true", default=None)
    analyze.add_argument("--nodes", type=int, default=None,
                         help="Gauss-Hermite node count (default: composite rule)")
    analyze.add_argument("--format", choices=FORMATS, default=None)
    analyze.add_argument("--rounding", default=None,
                         help="display decimals for VaR and capital, e.g. 0,1")
    analyze.add_argument("--target-pd", type=float, default=None,
                         help="bank's TTC target PD for derived PIT confidence levels")
    analyze.add_argument("--bank-rho", type=float, action="append", default=None,
                         help="bank's systematic sensitivity (repeatable)")
    analyze.add_argument("--loss-grid", type=float, default=None)
    analyze.add_argument("--output", default=None, help="write the report to this file")

    table1 = subparsers.add_parser("reproduce-table1", help="reproduce the comparison table")
    table1.add_argument("--engine", choices=[Engine.AUTO.value, Engine.MC.value],
                        default=Engine.AUTO.value)
    table1.add_argument("--nodes", type=int, default=None,
                        help="Gauss-Hermite node count (default: composite rule)")
    table1.add_argument("--sims", type=int, default=10_000_000)
    table1.add_argument("--seed", type=int, default=42)
    table1.add_argument("--workers", type=int, default=1)
    table1.add_argument("--format", choices=["md", "json"], default="md")
    table1.add_argument("--output", default=None)

    validate = subparsers.add_parser("validate", help="check portfolio files")
    validate.add_argument("path", help="portfolio CSV or a directory of CSV files")
    _add_portfolio_options(validate)

    transform = subparsers.add_parser("transform-pd", help="convert a PD between TTC and PIT")
    transform.add_argument("--pd", type=float, required=True)
    transform.add_argument("--rho", type=float, required=True)
    transform.add_argument("--s", type=float, required=True)
    transform.add_argument("--direction", choices=["ttc-to-pit", "pit-to-ttc"],
                           default="ttc-to-pit")

    level = subparsers.add_parser("confidence-level", help="PIT confidence level of a bank")
    level.add_argument("--target-pd", type=float, required=True)
    level.add_argument("--rho", type=float, required=True)
    level.add_argument("--s", type=float, required=True)

    return parser


def _configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _run(args: argparse.Namespace) -> int:
    if args.command == "analyze":
        cfg = RunConfig.from_yaml(args.config) if args.config else RunConfig()
        overrides = {
            key: getattr(args, key)
            for key in RunConfig.keys()
            if getattr(args, key, None) is not None
        }
        return cmd_analyze(cfg.merged(overrides), args.output)
    if args.command == "reproduce-table1":
        return cmd_reproduce_table1(args)
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "transform-pd":
        return cmd_transform_pd(args)
    return cmd_confidence_level(args)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return _run(args)
    except PitCapitalError as e:
        logger.debug("Command failed", exc_info=True)
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e), "details": None}),
            file=sys.stderr,
        )
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
