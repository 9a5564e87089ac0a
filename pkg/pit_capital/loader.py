"""ポートフォリオ CSV とファクター共分散サイドカーの読み込み。

CSV スキーマ (ヘッダー必須):

    id,exposure,ttc_pd,rho,w1[,w2,...]

ファクター共分散は JSON / YAML のサイドカー ({"k": 1, "cov": [[1.0]]}) で与え、
省略時は単位行列とする。
"""

from __future__ import annotations

import re
from logging import getLogger
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigError, PortfolioParseError, PortfolioValidationError
from .model import (
    FactorModel,
    Obligor,
    Portfolio,
    normalize_exposures,
    normalize_factor_weights,
    validate_portfolio,
)

logger = getLogger(__name__)

BUNDLED_DATA_DIR = Path(__file__).parent / "data"
PORTFOLIO_SUFFIX = ".csv"
REQUIRED_COLUMNS = ("id", "exposure", "ttc_pd", "rho")
_WEIGHT_COLUMN = re.compile(r"^w(\d+)$")


def resolve_portfolio_path(name: str | Path) -> Path:
    """
    ポートフォリオファイルのパスを解決する。

    存在するパスならそのまま、そうでなければ同梱データ (例: "table1_subinv") を探す。

    Raises:
        FileNotFoundError: どちらにも見つからない場合。
    """
    path = Path(name)
    if path.exists():
        return path
    bundled = BUNDLED_DATA_DIR / path.with_suffix(PORTFOLIO_SUFFIX).name
    if bundled.exists():
        logger.debug("Using bundled portfolio %s", bundled)
        return bundled
    raise FileNotFoundError(f"Portfolio file not found: {name}")


def find_portfolio_files(portfolio_dir: str | Path) -> list[Path]:
    """ディレクトリ以下の全 .csv を再帰的に探す。"""
    portfolio_dir = Path(portfolio_dir)
    if not portfolio_dir.is_dir():
        raise NotADirectoryError(f"{portfolio_dir} is not a directory")
    files = sorted(portfolio_dir.rglob(f"*{PORTFOLIO_SUFFIX}"))
    if not files:
        logger.warning("No portfolio files found in %s", portfolio_dir)
    return files


def load_factor_model(path: str | Path | None, k: int) -> FactorModel:
    """
    ファクター共分散のサイドカーを読み込む。

    Args:
        path: サイドカーのパス。None の場合は k 次元の単位行列。
        k: ポートフォリオの重み列から決まるファクター数。

    Raises:
        ConfigError: 構文エラー、または k が一致しない場合。
    """
    if path is None:
        return FactorModel.identity(k)
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: cannot parse factor file: {e}") from e

    if not isinstance(data, dict) or "cov" not in data:
        raise ConfigError(f"{path}: factor file must be a mapping with a 'cov' entry")
    try:
        cov = np.array(data["cov"], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: 'cov' must be a numeric matrix") from e
    if cov.shape != (k, k):
        raise ConfigError(
            f"{path}: covariance has shape {cov.shape}, portfolio has {k} weight columns"
        )
    if "k" in data and data["k"] != k:
        raise ConfigError(f"{path}: k={data['k']} does not match {k} weight columns")
    return FactorModel(cov)


def _weight_columns(path: Path, columns: list[str]) -> list[str]:
    numbered = sorted(
        (int(m.group(1)), c) for c in columns if (m := _WEIGHT_COLUMN.match(c))
    )
    if not numbered:
        raise PortfolioParseError(f"{path}: no factor weight columns (w1, w2, ...)")
    if [n for n, _ in numbered] != list(range(1, len(numbered) + 1)):
        raise PortfolioParseError(
            f"{path}: weight columns must be w1..wk without gaps, got "
            + ", ".join(c for _, c in numbered)
        )
    return [c for _, c in numbered]


def load_portfolio(
    path: str | Path,
    factors_path: str | Path | None = None,
    *,
    normalize: bool = False,
    normalize_weights: bool = False,
) -> Portfolio:
    """
    ポートフォリオ CSV を読み込み、検査済みの Portfolio を返す。

    Args:
        path: CSV のパス、または同梱データ名。
        factors_path: ファクター共分散サイドカーのパス。
        normalize: エクスポージャーを総和 1 に再スケールする。
        normalize_weights: 重みを var[w'S] = 1 に再スケールする。

    Raises:
        PortfolioParseError: 空ファイル・列の不足・数値でない値。
        PortfolioValidationError: 不変条件の違反 (行番号付き)。
        FileNotFoundError: ファイルが存在しない場合。
    """
    path = resolve_portfolio_path(path)
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise PortfolioParseError(f"{path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise PortfolioParseError(f"{path}: malformed CSV: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise PortfolioParseError(f"{path}: missing columns: {', '.join(missing)}")
    weight_cols = _weight_columns(path, list(frame.columns))
    unknown = [c for c in frame.columns if c not in REQUIRED_COLUMNS and c not in weight_cols]
    if unknown:
        raise PortfolioParseError(f"{path}: unknown columns: {', '.join(unknown)}")
    if frame.empty:
        raise PortfolioParseError(f"{path}: no obligor rows")

    # --- 数値列の変換 (ヘッダーが 1 行目なのでデータ行 i は i + 2 行目) ---
    numeric: dict[str, np.ndarray] = {}
    problems: list[str] = []
    for col in ("exposure", "ttc_pd", "rho", *weight_cols):
        values = pd.to_numeric(frame[col].str.strip(), errors="coerce")
        for i in np.flatnonzero(values.isna().to_numpy()):
            problems.append(f"line {i + 2}, field {col}: invalid number {frame[col].iloc[i]!r}")
        numeric[col] = values.to_numpy(dtype=np.float64)
    if problems:
        raise PortfolioParseError(f"{path}: {len(problems)} unparsable value(s)", details=problems)

    weights = np.column_stack([numeric[c] for c in weight_cols])
    obligors = tuple(
        Obligor(
            id=str(frame["id"].iloc[i]).strip(),
            exposure=float(numeric["exposure"][i]),
            ttc_pd=float(numeric["ttc_pd"][i]),
            sensitivity=float(numeric["rho"][i]),
            factor_weights=tuple(float(v) for v in weights[i]),
        )
        for i in range(len(frame))
    )
    portfolio = Portfolio(obligors, load_factor_model(factors_path, len(weight_cols)))
    if normalize:
        portfolio = normalize_exposures(portfolio)
    if normalize_weights:
        portfolio = normalize_factor_weights(portfolio)

    violations = validate_portfolio(portfolio)
    if violations:
        messages = [
            str(v) if v.index is None else f"line {v.index + 2}, field {v.field}: {v}"
            for v in violations
        ]
        raise PortfolioValidationError(
            f"{path}: portfolio violates {len(violations)} invariant(s)", messages
        )

    logger.info(
        "Loaded %d obligors with %d factor(s) from %s",
        portfolio.size, portfolio.factor_model.k, path,
    )
    return portfolio
