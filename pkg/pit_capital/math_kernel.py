"""数値計算の基本部品。

標準正規分布関数とその逆関数、Gauss-Hermite 求積と複合 Gauss-Legendre 求積、二項分布・ポアソン二項分布の
確率関数、シード付き乱数ストリームを提供する。全ての関数は入力のみに依存する純粋関数。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from logging import getLogger
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt
from scipy import special, stats

from .errors import CapacityError, DomainError

logger = getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

DEFAULT_NODES = 64
MIN_NODES = 2
MAX_NODES = 256
DEFAULT_PANELS = 96
DEFAULT_PANEL_NODES = 10
INTEGRATION_BOUND = 12.0
MAX_EXACT_OBLIGORS = 5000

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SEED_MODULUS = 2**64


def _finite_array(x: npt.ArrayLike) -> FloatArray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"Non-finite input: {x!r}")
    return arr


def _unwrap(arr: FloatArray) -> float | FloatArray:
    """0 次元配列は float に戻す。"""
    if arr.ndim == 0:
        return float(arr)
    return arr


# ------------------------------------------------------------------
#  正規分布
# ------------------------------------------------------------------


def std_normal_cdf(x: npt.ArrayLike) -> float | FloatArray:
    """
    標準正規分布関数 Φ(x) を返す。

    スカラーを渡すと float、配列を渡すと同じ形の配列を返す。

    Raises:
        DomainError: 非有限値が含まれる場合。
    """
    return _unwrap(special.ndtr(_finite_array(x)))


def std_normal_quantile(p: npt.ArrayLike) -> float | FloatArray:
    """
    標準正規分布の分位点 Φ⁻¹(p) を返す。

    scipy の ndtri を初期値とし、Halley 法で 1 ステップ補正する。
    上側では Φ(x) - p を (1 - p) - Φ(-x) として評価し、桁落ちを避ける。

    Args:
        p: 開区間 (0, 1) の確率。スカラーまたは配列。

    Raises:
        DomainError: p が (0, 1) の外にある場合。
    """
    arr = np.asarray(p, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"Probability must lie in (0, 1), got {p!r}")

    x = special.ndtri(arr)
    err = np.where(x > 0.0, (1.0 - arr) - special.ndtr(-x), special.ndtr(x) - arr)
    # |x| > 37.7 では exp が溢れる。補正項が有限でない点は ndtri の値をそのまま使う
    with np.errstate(over="ignore", invalid="ignore"):
        u = err * _SQRT_2PI * np.exp(0.5 * x * x)
        step = u / (1.0 + 0.5 * x * u)
    x = np.where(np.isfinite(step), x - step, x)
    return _unwrap(x)


# ------------------------------------------------------------------
#  求積
# ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    標準正規分布に関する期待値を計算する求積則。

    ∫ f(x) φ(x) dx ≈ Σ weights[j] * f(nodes[j])。weights の総和は 1。
    """

    nodes: FloatArray
    weights: FloatArray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise DomainError("Nodes and weights must be 1-D arrays of equal length")
        if len(nodes) < MIN_NODES:
            raise DomainError(f"A quadrature rule needs at least {MIN_NODES} nodes")
        if np.any(weights < 0.0):
            raise DomainError("Quadrature weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError(
                f"Quadrature weights must sum to 1, got {weights.sum()!r}"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def expect(self, values: npt.ArrayLike) -> float | FloatArray:
        """
        節点上の値 (先頭軸が節点) を重み付きで平均する。

        Args:
            values: 形状 (n_nodes, ...) の配列。

        Returns:
            先頭軸を積分した結果。
        """
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape[:1] != (self.n_nodes,):
            raise DomainError(
                f"Expected leading axis of length {self.n_nodes}, got shape {arr.shape}"
            )
        return _unwrap(np.tensordot(self.weights, arr, axes=(0, 0)))

    def integrate(self, f: Callable[[FloatArray], npt.ArrayLike]) -> float | FloatArray:
        """f を節点で評価して ∫ f(x) φ(x) dx を近似する。"""
        return self.expect(f(self.nodes))


def gauss_hermite_rule(n_nodes: int = DEFAULT_NODES) -> QuadratureRule:
    """
    標準正規分布の重みに変数変換した Gauss-Hermite 求積則を作る。

    確率論者の Hermite 多項式 (hermite_e) の節点を用いるため、
    変数変換は重みの正規化のみでよい。次数 2n-1 以下の多項式に対して厳密。

    Args:
        n_nodes: 節点数 (2 以上 256 以下)。

    Raises:
        DomainError: 節点数が範囲外の場合。
    """
    if not MIN_NODES <= n_nodes <= MAX_NODES:
        raise DomainError(
            f"Node count must be in [{MIN_NODES}, {MAX_NODES}], got {n_nodes}"
        )
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    return QuadratureRule(nodes=nodes, weights=weights / weights.sum())


def composite_normal_rule(
    n_panels: int = DEFAULT_PANELS,
    panel_nodes: int = DEFAULT_PANEL_NODES,
    bound: float = INTEGRATION_BOUND,
) -> QuadratureRule:
    """
    [-bound, bound] を等幅のパネルに分け、各パネルに Gauss-Legendre 則を置いた求積則。

    重みは Legendre の重みに φ(x) を掛けて正規化する。節点は裾でも等間隔に並ぶ。
    損失分布と PD の積分の既定の求積則。

    Args:
        n_panels: パネル数。
        panel_nodes: 1 パネルあたりの節点数。
        bound: 積分区間の端。±12 の外の正規分布の質量は 1e-32 未満。

    Raises:
        DomainError: パネル数・節点数・区間が不正な場合。
    """
    if n_panels < 1 or panel_nodes < 1 or n_panels * panel_nodes < MIN_NODES:
        raise DomainError(
            f"Composite rule needs at least {MIN_NODES} nodes, "
            f"got {n_panels} panel(s) x {panel_nodes} node(s)"
        )
    if not (math.isfinite(bound) and bound > 0.0):
        raise DomainError(f"Integration bound must be positive and finite, got {bound!r}")
    knots, weights = np.polynomial.legendre.leggauss(panel_nodes)
    edges = np.linspace(-bound, bound, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * knots[None, :]).ravel()
    density = (half[:, None] * weights[None, :]).ravel() * stats.norm.pdf(nodes)
    return QuadratureRule(nodes=nodes, weights=density / density.sum())


@lru_cache(maxsize=1)
def default_rule() -> QuadratureRule:
    """既定の求積則 (composite_normal_rule の既定値)。"""
    return composite_normal_rule()


# ------------------------------------------------------------------
#  離散分布
# ------------------------------------------------------------------


def binomial_pmf_vector(n: int, p: float) -> FloatArray:
    """
    二項分布 Binomial(n, p) の確率関数を長さ n+1 のベクトルで返す。

    scipy.stats.binom は対数ガンマ経由で評価するため、n = 10^5 でも桁あふれしない。

    Raises:
        DomainError: n < 1 または p が [0, 1] の外にある場合。
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    return stats.binom.pmf(np.arange(n + 1), n, p)


def poisson_binomial_pmf(
    probs: npt.ArrayLike,
    units: Sequence[int] | npt.NDArray[np.integer] | None = None,
) -> FloatArray:
    """
    独立ベルヌーイ和 (ポアソン二項分布) の確率関数を動的計画法で厳密に計算する。

    units を省略するとエクスポージャー均等とみなし、デフォルト件数の分布を返す。
    units を与えると、債務者 i のデフォルトが units[i] 単位の損失を生むとして
    損失単位 0..Σunits の分布を返す。

    probs に 2 次元配列 (行ごとに独立なケース) を渡すと行ごとに一括で計算する。

    Args:
        probs: 各債務者のデフォルト確率。形状 (N,) または (batch, N)。
        units: 各債務者の損失単位 (非負整数)。

    Returns:
        形状 (M+1,) または (batch, M+1) の確率。M は件数 N または Σunits。

    Raises:
        CapacityError: N が MAX_EXACT_OBLIGORS を超える場合。
        DomainError: 確率が [0, 1] の外、または units が不正な場合。
    """
    p = np.asarray(probs, dtype=np.float64)
    batched = p.ndim == 2
    rows = np.atleast_2d(p)
    if rows.ndim != 2:
        raise DomainError(f"probs must be 1-D or 2-D, got shape {p.shape}")

    n_obligors = rows.shape[1]
    if n_obligors > MAX_EXACT_OBLIGORS:
        raise CapacityError(
            f"Exact convolution supports at most {MAX_EXACT_OBLIGORS} obligors, "
            f"got {n_obligors}; use mc_loss_distribution instead",
            details={"n_obligors": n_obligors, "limit": MAX_EXACT_OBLIGORS},
        )
    if not np.all((rows >= 0.0) & (rows <= 1.0)):
        raise DomainError("Default probabilities must lie in [0, 1]")

    if units is None:
        steps = np.ones(n_obligors, dtype=np.int64)
    else:
        steps = np.asarray(units, dtype=np.int64)
        if steps.shape != (n_obligors,):
            raise DomainError(
                f"units must have length {n_obligors}, got shape {steps.shape}"
            )
        if np.any(steps < 0):
            raise DomainError("Loss units must be nonnegative")

    pmf = np.zeros((rows.shape[0], int(steps.sum()) + 1))
    pmf[:, 0] = 1.0
    top = 0  # 現在の台の右端
    for i, step in enumerate(steps.tolist()):
        if step == 0:
            continue
        q = rows[:, i : i + 1]
        head = pmf[:, : top + 1].copy()
        pmf[:, : top + 1] *= 1.0 - q
        pmf[:, step : top + step + 1] += head * q
        top += step

    return pmf if batched else pmf[0]


# ------------------------------------------------------------------
#  乱数
# ------------------------------------------------------------------


def substream(seed: int, index: int) -> np.random.Generator:
    """
    (seed, index) から決まる独立な乱数ストリームを返す。

    カウンタベースの Philox を使うため、ストリームはワーカー数や
    実行順序に依存しない。seed は 64 bit に丸める。
    """
    seq = np.random.SeedSequence(int(seed) % _SEED_MODULUS, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def sample_standard_normal(
    rng: np.random.Generator, n_rows: int, n_cols: int, *, antithetic: bool = False
) -> FloatArray:
    """
    形状 (n_rows, n_cols) の標準正規乱数を引く。

    antithetic=True の場合は前半を引き、後半をその符号反転とする
    (行 j と行 j + n_rows/2 が対になる)。n_rows は偶数であること。
    """
    if not antithetic:
        return rng.standard_normal((n_rows, n_cols))
    if n_rows % 2:
        raise DomainError("Antithetic sampling needs an even number of rows")
    half = rng.standard_normal((n_rows // 2, n_cols))
    return np.concatenate([half, -half])


def sample_uniform(
    rng: np.random.Generator, n_rows: int, n_cols: int, *, antithetic: bool = False
) -> FloatArray:
    """形状 (n_rows, n_cols) の一様乱数。antithetic=True では後半を 1 - U とする。"""
    if not antithetic:
        return rng.random((n_rows, n_cols))
    if n_rows % 2:
        raise DomainError("Antithetic sampling needs an even number of rows")
    half = rng.random((n_rows // 2, n_cols))
    return np.concatenate([half, 1.0 - half])
