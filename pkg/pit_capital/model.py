"""ポートフォリオ・ファクターモデル・プロビットモデル・シナリオ・損失分布の型定義。

モデル:
    L   = Σ u_i I(D_i)
    D_i = { √(1-ρ_i²) ξ_i + ρ_i w_i'S ≤ T_i }

ここで S は平均 0 の多変量正規ベクトル、ξ_i は独立な標準正規、T_i = Φ⁻¹(TTC PD_i)。
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from logging import getLogger
from typing import Sequence

import numpy as np
import numpy.typing as npt

from .errors import DomainError
from .math_kernel import FloatArray, std_normal_cdf, std_normal_quantile

logger = getLogger(__name__)

EXPOSURE_SUM_TOL = 1e-9
WEIGHT_VARIANCE_TOL = 1e-8
SYMMETRY_TOL = 1e-12
EIGENVALUE_FLOOR = -1e-10
PROBIT_VARIANCE_TOL = 1e-10
EXACT_SUM_TOL = 1e-10
MC_SUM_TOL = 1e-9


# ------------------------------------------------------------------
#  閾値と TTC PD の相互変換
# ------------------------------------------------------------------


def threshold_from_ttc_pd(pd: float) -> float:
    """TTC PD からデフォルト閾値 T = Φ⁻¹(PD) を求める。"""
    return float(std_normal_quantile(pd))


def ttc_pd_from_threshold(threshold: float) -> float:
    """デフォルト閾値から TTC PD = Φ(T) を求める。"""
    return float(std_normal_cdf(threshold))


# ------------------------------------------------------------------
#  ファクターモデル
# ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FactorModel:
    """
    系統ファクター S ~ N(0, covariance) の定義。

    平均は構成上 0 に固定される。
    """

    covariance: FloatArray

    def __post_init__(self) -> None:
        cov = np.atleast_2d(np.array(self.covariance, dtype=np.float64))
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] == 0:
            raise DomainError(f"Covariance must be a square matrix, got {cov.shape}")
        if not np.all(np.isfinite(cov)):
            raise DomainError("Covariance contains non-finite entries")
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def identity(cls, k: int) -> FactorModel:
        return cls(np.eye(k))

    @property
    def k(self) -> int:
        """ファクター数。"""
        return self.covariance.shape[0]

    def composite_variance(self, weights: npt.ArrayLike) -> float | FloatArray:
        """
        var[w'S] を返す。

        Args:
            weights: 形状 (k,) または (N, k) の重み。

        Returns:
            スカラー、または債務者ごとの分散 (N,)。
        """
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim == 1:
            return float(w @ self.covariance @ w)
        return np.einsum("ij,jk,ik->i", w, self.covariance, w)

    def problems(self) -> list[str]:
        """共分散行列の不変条件 (対称性・半正定値性) の違反を列挙する。"""
        found: list[str] = []
        cov = self.covariance
        asym = float(np.max(np.abs(cov - cov.T)))
        if asym > SYMMETRY_TOL:
            found.append(f"factor covariance is not symmetric (max |C - C'| = {asym:.3g})")
        else:
            min_eig = float(np.linalg.eigvalsh(cov).min())
            if min_eig < EIGENVALUE_FLOOR:
                found.append(
                    f"factor covariance is not positive semidefinite "
                    f"(min eigenvalue {min_eig:.3g})"
                )
        return found

    @cached_property
    def root(self) -> FloatArray:
        """
        A A' = covariance を満たす行列 A。

        特異な共分散にも対応するため固有値分解で求める。S = Z A' (Z は標準正規)。
        """
        eigval, eigvec = np.linalg.eigh(self.covariance)
        return eigvec * np.sqrt(np.clip(eigval, 0.0, None))


# ------------------------------------------------------------------
#  債務者とポートフォリオ
# ------------------------------------------------------------------


@dataclass(frozen=True)
class Obligor:
    """
    ポートフォリオの 1 債務者。

    Attributes:
        id: 債務者 ID。
        exposure: 損失ウェイト u_i (ポートフォリオ比)。LGD は 100% として含む。
        ttc_pd: TTC PD。閾値は threshold で導出する。
        sensitivity: 系統リスクへの感応度 ρ_i ∈ (-1, 1)。負は逆景気循環的な債務者。
        factor_weights: 系統ファクターの重み w_i (長さ k)。
    """

    id: str
    exposure: float
    ttc_pd: float
    sensitivity: float
    factor_weights: tuple[float, ...]

    @classmethod
    def from_threshold(
        cls,
        id: str,
        exposure: float,
        threshold: float,
        sensitivity: float,
        factor_weights: Sequence[float],
    ) -> Obligor:
        return cls(
            id=id,
            exposure=exposure,
            ttc_pd=ttc_pd_from_threshold(threshold),
            sensitivity=sensitivity,
            factor_weights=tuple(float(v) for v in factor_weights),
        )

    @property
    def threshold(self) -> float:
        return threshold_from_ttc_pd(self.ttc_pd)


@dataclass(frozen=True, eq=False)
class Portfolio:
    """債務者の集合と共通のファクターモデル。"""

    obligors: tuple[Obligor, ...]
    factor_model: FactorModel

    def __post_init__(self) -> None:
        object.__setattr__(self, "obligors", tuple(self.obligors))

    @property
    def size(self) -> int:
        return len(self.obligors)

    @cached_property
    def exposures(self) -> FloatArray:
        return np.array([o.exposure for o in self.obligors], dtype=np.float64)

    @cached_property
    def ttc_pds(self) -> FloatArray:
        return np.array([o.ttc_pd for o in self.obligors], dtype=np.float64)

    @cached_property
    def thresholds(self) -> FloatArray:
        return np.asarray(std_normal_quantile(self.ttc_pds), dtype=np.float64)

    @cached_property
    def sensitivities(self) -> FloatArray:
        return np.array([o.sensitivity for o in self.obligors], dtype=np.float64)

    @cached_property
    def weights(self) -> FloatArray:
        """形状 (N, k) の重み行列。"""
        return np.array([o.factor_weights for o in self.obligors], dtype=np.float64).reshape(
            self.size, self.factor_model.k
        )

    def composite_factor(self, s: npt.ArrayLike) -> FloatArray:
        """ファクター実現値 s に対する各債務者の合成ファクター w_i's。"""
        values = np.asarray(s, dtype=np.float64).reshape(-1)
        if values.shape != (self.factor_model.k,):
            raise DomainError(
                f"Factor realisation must have length {self.factor_model.k}, "
                f"got {values.shape[0]}"
            )
        return self.weights @ values

    @property
    def has_equal_exposures(self) -> bool:
        u = self.exposures
        return bool(np.all(u == u[0]))

    @property
    def is_homogeneous(self) -> bool:
        """エクスポージャー・PD・感応度・重みが全債務者で等しいか。"""
        if not self.has_equal_exposures:
            return False
        w = self.weights
        return bool(
            np.all(self.ttc_pds == self.ttc_pds[0])
            and np.all(self.sensitivities == self.sensitivities[0])
            and np.all(w == w[0])
        )

    def with_ttc_pds(self, pds: npt.ArrayLike) -> Portfolio:
        """PD だけを差し替えたポートフォリオを返す。"""
        values = np.broadcast_to(np.asarray(pds, dtype=np.float64), (self.size,))
        return Portfolio(
            obligors=tuple(
                replace(o, ttc_pd=float(v)) for o, v in zip(self.obligors, values)
            ),
            factor_model=self.factor_model,
        )

    def with_sensitivities(self, rho: npt.ArrayLike) -> Portfolio:
        """感応度だけを差し替えたポートフォリオを返す。"""
        values = np.broadcast_to(np.asarray(rho, dtype=np.float64), (self.size,))
        return Portfolio(
            obligors=tuple(
                replace(o, sensitivity=float(v)) for o, v in zip(self.obligors, values)
            ),
            factor_model=self.factor_model,
        )


@dataclass(frozen=True)
class Violation:
    """validate_portfolio が報告する不変条件違反。index は債務者の位置 (全体の違反なら None)。"""

    field: str
    message: str
    index: int | None = None
    obligor_id: str | None = None

    def __str__(self) -> str:
        if self.index is None:
            return self.message
        return f"obligor #{self.index} (id={self.obligor_id}): {self.message}"


def validate_portfolio(p: Portfolio) -> list[Violation]:
    """
    ポートフォリオの不変条件を検査し、違反のリストを返す (空なら妥当)。

    検査項目: エクスポージャーの正値性と総和 1、PD ∈ (0, 1)、|ρ| < 1、
    重みの次元と正規化 var[w_i'S] = 1、共分散行列の対称性と半正定値性、ID の重複。
    """
    found: list[Violation] = []
    if p.size == 0:
        return [Violation("obligors", "portfolio has no obligors")]

    found.extend(Violation("factors", msg) for msg in p.factor_model.problems())
    k = p.factor_model.k

    seen: set[str] = set()
    for i, o in enumerate(p.obligors):

        def add(field: str, message: str, i: int = i, o: Obligor = o) -> None:
            found.append(Violation(field, message, index=i, obligor_id=o.id))

        if o.id in seen:
            add("id", f"duplicate obligor id {o.id!r}")
        seen.add(o.id)

        if not (np.isfinite(o.exposure) and o.exposure > 0.0):
            add("exposure", f"exposure={o.exposure!r} must be positive")
        if not 0.0 < o.ttc_pd < 1.0:
            add("ttc_pd", f"ttc_pd={o.ttc_pd!r} outside (0, 1)")
        if not abs(o.sensitivity) < 1.0:
            add("rho", f"rho={o.sensitivity!r} must satisfy |rho| < 1")

        if len(o.factor_weights) != k:
            add("weights", f"expected {k} factor weights, got {len(o.factor_weights)}")
            continue
        if not np.all(np.isfinite(o.factor_weights)):
            add("weights", "factor weights must be finite")
            continue
        var = p.factor_model.composite_variance(o.factor_weights)
        if abs(var - 1.0) > WEIGHT_VARIANCE_TOL:
            add("weights", f"var[w'S]={var:.10g} violates the normalisation var[w'S]=1")

    total = float(np.sum(p.exposures))
    if abs(total - 1.0) > EXPOSURE_SUM_TOL:
        found.append(
            Violation("exposure", f"exposures sum to {total:.12g}, expected 1")
        )
    return found


def normalize_exposures(p: Portfolio) -> Portfolio:
    """エクスポージャーを総和 1 に再スケールする。"""
    total = float(np.sum(p.exposures))
    if not total > 0.0:
        raise DomainError("Cannot normalise exposures with a nonpositive sum")
    return Portfolio(
        obligors=tuple(replace(o, exposure=o.exposure / total) for o in p.obligors),
        factor_model=p.factor_model,
    )


def normalize_factor_weights(p: Portfolio) -> Portfolio:
    """各債務者の重みを var[w_i'S] = 1 となるよう再スケールする。"""
    scaled = []
    for o in p.obligors:
        var = p.factor_model.composite_variance(o.factor_weights)
        if not var > 0.0:
            raise DomainError(
                f"Obligor {o.id!r} has var[w'S]={var!r}; weights cannot be normalised"
            )
        scale = 1.0 / np.sqrt(var)
        scaled.append(
            replace(o, factor_weights=tuple(float(v * scale) for v in o.factor_weights))
        )
    return Portfolio(obligors=tuple(scaled), factor_model=p.factor_model)


# ------------------------------------------------------------------
#  プロビットモデル
# ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbitModel:
    """
    PIT PD のプロビットモデル PD_i(F, S) = Φ(a₀ + a'F_i + b'S)。

    Attributes:
        scores: 債務者ごとの a₀ + a'F_i (事前計算済み)。
        loading: 系統ファクターの係数 b (長さ k)。
        var_bs: var[b'S]。
    """

    scores: FloatArray
    loading: FloatArray
    var_bs: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", np.atleast_1d(np.asarray(self.scores, dtype=np.float64)))
        object.__setattr__(self, "loading", np.atleast_1d(np.asarray(self.loading, dtype=np.float64)))
        if not self.var_bs >= 0.0:
            raise DomainError(f"var[b'S] must be nonnegative, got {self.var_bs!r}")

    @classmethod
    def from_loading(
        cls, scores: npt.ArrayLike, loading: npt.ArrayLike, factor_model: FactorModel
    ) -> ProbitModel:
        """係数 b とファクターモデルから var[b'S] = b'Cov(S)b を計算して作る。"""
        b = np.atleast_1d(np.asarray(loading, dtype=np.float64))
        if b.shape != (factor_model.k,):
            raise DomainError(f"Loading must have length {factor_model.k}, got {b.shape}")
        return cls(scores=scores, loading=b, var_bs=factor_model.composite_variance(b))

    def problems(self, factor_model: FactorModel) -> list[str]:
        """var_bs が b'Cov(S)b と一致しているかを検査する。"""
        if self.loading.shape != (factor_model.k,):
            return [f"loading has length {len(self.loading)}, factor model has k={factor_model.k}"]
        expected = factor_model.composite_variance(self.loading)
        if abs(expected - self.var_bs) > PROBIT_VARIANCE_TOL:
            return [f"var_bs={self.var_bs!r} differs from b'Cov(S)b={expected!r}"]
        return []


# ------------------------------------------------------------------
#  シナリオ
# ------------------------------------------------------------------


class ScenarioKind(str, Enum):
    FIXED = "fixed"
    TRUNCATED = "truncated"
    UNCONDITIONAL = "unconditional"


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    系統ファクターに対する条件付け。

    - FIXED: 実現値 s を固定する (PIT 計算)。
    - TRUNCATED: S をボックス内に制限する (分布切断による PIT 計測)。
    - UNCONDITIONAL: 条件付けなし (TTC 計算)。
    """

    kind: ScenarioKind
    fixed_values: FloatArray | None = None
    box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.kind is ScenarioKind.FIXED:
            if self.fixed_values is None:
                raise DomainError("Fixed scenario requires factor values")
            values = np.atleast_1d(np.asarray(self.fixed_values, dtype=np.float64))
            if not np.all(np.isfinite(values)):
                raise DomainError("Fixed scenario values must be finite")
            object.__setattr__(self, "fixed_values", values)
        elif self.kind is ScenarioKind.TRUNCATED:
            if not self.box:
                raise DomainError("Truncated scenario requires a box")
            box = tuple((float(lo), float(hi)) for lo, hi in self.box)
            for j, (lo, hi) in enumerate(box):
                if np.isnan(lo) or np.isnan(hi) or not lo < hi:
                    raise DomainError(f"Truncation interval for factor {j + 1} needs low < high")
            object.__setattr__(self, "box", box)

    @classmethod
    def fixed(cls, values: npt.ArrayLike) -> Scenario:
        return cls(ScenarioKind.FIXED, fixed_values=np.atleast_1d(values))

    @classmethod
    def truncated(cls, box: Sequence[tuple[float, float]]) -> Scenario:
        return cls(ScenarioKind.TRUNCATED, box=tuple(box))

    @classmethod
    def unconditional(cls) -> Scenario:
        return cls(ScenarioKind.UNCONDITIONAL)

    @property
    def dimension(self) -> int | None:
        if self.kind is ScenarioKind.FIXED:
            return len(self.fixed_values)
        if self.kind is ScenarioKind.TRUNCATED:
            return len(self.box)
        return None

    def check_dimension(self, k: int) -> None:
        if self.dimension is not None and self.dimension != k:
            raise DomainError(
                f"Scenario is defined for {self.dimension} factors, portfolio has k={k}"
            )

    @property
    def is_neutral(self) -> bool:
        """全ファクターが 0 に固定されているか。"""
        return self.kind is ScenarioKind.FIXED and bool(np.all(self.fixed_values == 0.0))

    def contains(self, samples: FloatArray) -> npt.NDArray[np.bool_]:
        """形状 (m, k) のサンプルのうちボックス内にあるものを示すマスク。"""
        lows = np.array([lo for lo, _ in self.box])
        highs = np.array([hi for _, hi in self.box])
        return np.all((samples >= lows) & (samples <= highs), axis=1)

    def describe(self) -> str:
        """CLI の --scenario と同じ書式の文字列。"""
        if self.kind is ScenarioKind.FIXED:
            return "fixed:" + ",".join(repr(float(v)) for v in self.fixed_values)
        if self.kind is ScenarioKind.TRUNCATED:
            return "trunc:" + ",".join(
                f"f{j + 1}={lo!r}..{hi!r}" for j, (lo, hi) in enumerate(self.box)
            )
        return "unconditional"


# ------------------------------------------------------------------
#  損失分布
# ------------------------------------------------------------------


class LossSource(str, Enum):
    QUADRATURE = "quadrature"
    CONDITIONAL_EXACT = "conditional-exact"
    MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True, eq=False)
class LossDistribution:
    """
    離散的なポートフォリオ損失分布 P[L = ℓ]。

    Attributes:
        loss_levels: 狭義単調増加の損失水準 (ポートフォリオ比)。
        probabilities: 各水準の確率。
        source: 計算方法。
        mc_stderr: 各水準の確率の標準誤差 (モンテカルロのみ)。
    """

    loss_levels: FloatArray
    probabilities: FloatArray
    source: LossSource
    mc_stderr: FloatArray | None = None

    def __post_init__(self) -> None:
        levels = np.asarray(self.loss_levels, dtype=np.float64)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if levels.ndim != 1 or levels.shape != probs.shape or len(levels) == 0:
            raise DomainError("Loss levels and probabilities must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(levels) <= 0.0):
            raise DomainError("Loss levels must be strictly ascending")
        if np.any(probs < 0.0):
            raise DomainError("Probabilities must be nonnegative")
        tol = MC_SUM_TOL if self.source is LossSource.MONTE_CARLO else EXACT_SUM_TOL
        if abs(probs.sum() - 1.0) > tol:
            raise DomainError(f"Probabilities sum to {probs.sum()!r}, expected 1")
        if self.mc_stderr is not None:
            if self.source is not LossSource.MONTE_CARLO:
                raise DomainError("Standard errors are only defined for Monte Carlo distributions")
            stderr = np.asarray(self.mc_stderr, dtype=np.float64)
            if stderr.shape != probs.shape:
                raise DomainError("Standard errors must match the loss levels")
            object.__setattr__(self, "mc_stderr", stderr)
        object.__setattr__(self, "loss_levels", levels)
        object.__setattr__(self, "probabilities", probs)

    def cdf(self) -> FloatArray:
        """P[L ≤ ℓ] を各水準で返す。"""
        return np.cumsum(self.probabilities)
