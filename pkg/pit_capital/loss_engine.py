"""ポートフォリオ損失分布の計算。

3 つの計算方式を提供する:

- ttc_loss_distribution: 系統ファクターを求積で積分する (既定は複合 Gauss-Legendre、k = 1)
- pit_loss_distribution: 系統ファクターを固定し、条件付き独立なデフォルトを厳密に畳み込む
- mc_loss_distribution: モンテカルロ。固定・切断・無条件の全シナリオに対応する

損失は格子上で扱う。エクスポージャーが全て等しい場合は 1 件 = 1 単位、
そうでない場合は各エクスポージャーを grid (既定 1e-4) 単位に丸める。
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from logging import getLogger

import numpy as np
import numpy.typing as npt

from .errors import (
    CapacityError,
    ConfigError,
    DomainError,
    InfeasibleScenarioError,
    PortfolioValidationError,
    UnsupportedModeError,
)
from .math_kernel import (
    MAX_EXACT_OBLIGORS,
    FloatArray,
    QuadratureRule,
    binomial_pmf_vector,
    default_rule,
    poisson_binomial_pmf,
    sample_standard_normal,
    sample_uniform,
    substream,
)
from .model import (
    LossDistribution,
    LossSource,
    Portfolio,
    Scenario,
    ScenarioKind,
    validate_portfolio,
)
from .pd_engine import conditional_pd

logger = getLogger(__name__)

IntArray = npt.NDArray[np.int64]

DEFAULT_LOSS_GRID = 1e-4
DEFAULT_BLOCK_SIZE = 2**16
MIN_ACCEPTANCE_RATE = 1e-6
PILOT_DRAWS = 4_000_000

_PILOT_STREAM = 2**32
_PILOT_CHUNK = 2**18
_MAX_CHUNK_CELLS = 2**22
_MAX_CANDIDATES = 2**20


@dataclass(frozen=True)
class McConfig:
    """
    モンテカルロの設定。

    Attributes:
        n_sims: パス数。
        seed: 64 bit シード。
        antithetic: 対称変量法を使うかどうか。
        n_workers: 並列ワーカー数。結果には影響しない。
        block_size: 1 つの乱数ストリームが受け持つパス数。
    """

    n_sims: int
    seed: int = 0
    antithetic: bool = False
    n_workers: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self) -> None:
        if self.n_sims < 1:
            raise ConfigError(f"n_sims must be >= 1, got {self.n_sims}")
        if self.n_workers < 1:
            raise ConfigError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.block_size < 2:
            raise ConfigError(f"block_size must be >= 2, got {self.block_size}")
        if self.antithetic and (self.n_sims % 2 or self.block_size % 2):
            raise ConfigError("Antithetic sampling needs even n_sims and block_size")


@dataclass(frozen=True, eq=False)
class _LossGrid:
    """債務者ごとの損失単位と 1 単位あたりの損失。"""

    units: IntArray
    step: float
    equal_exposures: bool

    @property
    def n_levels(self) -> int:
        return int(self.units.sum()) + 1

    @property
    def levels(self) -> FloatArray:
        return np.arange(self.n_levels) * self.step


def _loss_grid(p: Portfolio, grid: float) -> _LossGrid:
    if p.has_equal_exposures:
        return _LossGrid(
            units=np.ones(p.size, dtype=np.int64),
            step=float(p.exposures[0]),
            equal_exposures=True,
        )
    if not grid > 0.0:
        raise ConfigError(f"Loss grid must be positive, got {grid!r}")
    units = np.rint(p.exposures / grid).astype(np.int64)
    n_zero = int(np.count_nonzero(units == 0))
    if n_zero:
        logger.warning(
            "%d obligors have exposures below half the loss grid %.3g and contribute no loss",
            n_zero, grid,
        )
    logger.debug(
        "Exposures rounded to grid %.3g (max rounding error %.3g)",
        grid, float(np.max(np.abs(units * grid - p.exposures))),
    )
    return _LossGrid(units=units, step=grid, equal_exposures=False)


def _require_valid(p: Portfolio) -> None:
    violations = validate_portfolio(p)
    if violations:
        raise PortfolioValidationError(
            f"Portfolio violates {len(violations)} invariant(s)",
            [str(v) for v in violations],
        )


def _require_capacity(p: Portfolio) -> None:
    if p.size > MAX_EXACT_OBLIGORS:
        raise CapacityError(
            f"Exact loss distribution supports at most {MAX_EXACT_OBLIGORS} obligors, "
            f"got {p.size}; use mc_loss_distribution instead",
            details={"n_obligors": p.size, "limit": MAX_EXACT_OBLIGORS},
        )


def _conditional_law(p: Portfolio, lg: _LossGrid, cond: FloatArray) -> FloatArray:
    """
    条件付き PD (形状 (N,) または (n_nodes, N)) から損失単位の分布を求める。

    同質ポートフォリオでは二項分布、それ以外はポアソン二項分布の畳み込み。
    """
    rows = np.atleast_2d(cond)
    if p.is_homogeneous:
        pmf = np.stack([binomial_pmf_vector(p.size, float(q)) for q in rows[:, 0]])
    else:
        pmf = poisson_binomial_pmf(rows, None if lg.equal_exposures else lg.units)
    return pmf if cond.ndim == 2 else pmf[0]


# ------------------------------------------------------------------
#  求積 (TTC)
# ------------------------------------------------------------------


def ttc_loss_distribution(
    p: Portfolio,
    rule: QuadratureRule | None = None,
    *,
    grid: float = DEFAULT_LOSS_GRID,
) -> LossDistribution:
    """
    1 ファクターモデルの TTC 損失分布を求積で計算する。

        P[L = ℓ] = ∫ PoissonBinomial(p_i(s))(ℓ) φ(s) ds,  p_i(s) = ttc_to_pit(PD_i, ρ_i, w_i s)

    閾値を固定し、(X, S) について期待値を取った分布 (閾値を条件とする損失分布)。

    Args:
        p: ポートフォリオ (k = 1)。
        rule: 求積則。None の場合は default_rule()。
        grid: エクスポージャーが不均一な場合の損失格子。

    Raises:
        UnsupportedModeError: k > 1 の場合。mc_loss_distribution を使うこと。
        CapacityError: N > MAX_EXACT_OBLIGORS の場合。
    """
    _require_valid(p)
    if p.factor_model.k != 1:
        raise UnsupportedModeError(
            f"Quadrature supports one-factor models only (k={p.factor_model.k}); "
            "use mc_loss_distribution instead"
        )
    _require_capacity(p)
    rule = rule or default_rule()
    lg = _loss_grid(p, grid)

    # --- 標準化したファクター y ~ N(0, 1) に対する合成ファクター w_i σ y ---
    sigma = math.sqrt(float(p.factor_model.covariance[0, 0]))
    loadings = p.weights[:, 0] * sigma
    cond = conditional_pd(
        p.thresholds[None, :],
        p.sensitivities[None, :],
        rule.nodes[:, None] * loadings[None, :],
    )
    probs = np.asarray(rule.expect(_conditional_law(p, lg, cond)))

    logger.info(
        "TTC loss distribution by %d-node quadrature: N=%d, %d loss levels",
        rule.n_nodes, p.size, lg.n_levels,
    )
    return LossDistribution(
        loss_levels=lg.levels, probabilities=probs, source=LossSource.QUADRATURE
    )


# ------------------------------------------------------------------
#  条件付き厳密計算 (PIT)
# ------------------------------------------------------------------


def pit_loss_distribution(
    p: Portfolio, sc: Scenario, *, grid: float = DEFAULT_LOSS_GRID
) -> LossDistribution:
    """
    系統ファクターを s に固定した PIT 損失分布を厳密に計算する。

    s が与えられるとデフォルトは条件付き独立となり、分布は p_i(s) の
    ポアソン二項分布 (エクスポージャー格子上) になる。

    Raises:
        ConfigError: シナリオが FIXED でない場合。
        CapacityError: N > MAX_EXACT_OBLIGORS の場合。
    """
    _require_valid(p)
    if sc.kind is not ScenarioKind.FIXED:
        raise ConfigError(f"PIT calculation needs a fixed scenario, got {sc.kind.value}")
    sc.check_dimension(p.factor_model.k)
    _require_capacity(p)
    lg = _loss_grid(p, grid)

    cond = np.asarray(
        conditional_pd(p.thresholds, p.sensitivities, p.composite_factor(sc.fixed_values))
    )
    probs = _conditional_law(p, lg, cond)

    logger.info(
        "Conditional-exact loss distribution at %s: N=%d, %d loss levels",
        sc.describe(), p.size, lg.n_levels,
    )
    return LossDistribution(
        loss_levels=lg.levels, probabilities=probs, source=LossSource.CONDITIONAL_EXACT
    )


# ------------------------------------------------------------------
#  モンテカルロ
# ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _SimulationPlan:
    """ブロックごとのシミュレーションに必要な読み取り専用の情報。"""

    portfolio: Portfolio
    scenario: Scenario
    grid: _LossGrid
    cfg: McConfig
    acceptance_rate: float

    @property
    def binomial_fast_path(self) -> bool:
        # 同質ならば系統ファクター所与の件数は二項分布
        return self.portfolio.is_homogeneous and not self.cfg.antithetic

    def draw_factors(self, rng: np.random.Generator, m: int) -> FloatArray:
        """系統ファクター S を m 本引く (形状 (m, k))。"""
        fm = self.portfolio.factor_model
        if self.scenario.kind is ScenarioKind.UNCONDITIONAL:
            z = sample_standard_normal(rng, m, fm.k, antithetic=self.cfg.antithetic)
            return z @ fm.root.T

        # --- 切断: ボックス内に入るまで棄却する ---
        accepted: list[FloatArray] = []
        have = 0
        while have < m:
            n_draw = min(
                _MAX_CANDIDATES,
                max(m - have, math.ceil(1.1 * (m - have) / self.acceptance_rate)),
            )
            candidates = rng.standard_normal((n_draw, fm.k)) @ fm.root.T
            inside = candidates[self.scenario.contains(candidates)]
            accepted.append(inside)
            have += len(inside)
        return np.concatenate(accepted)[:m]

    def sample_losses(self, rng: np.random.Generator, m: int) -> IntArray:
        """m 本のパスの損失 (損失単位) を返す。"""
        p = self.portfolio
        fixed = self.scenario.kind is ScenarioKind.FIXED

        if self.binomial_fast_path:
            if fixed:
                z0 = float(p.composite_factor(self.scenario.fixed_values)[0])
                q = float(conditional_pd(p.thresholds[0], p.sensitivities[0], z0))
                return rng.binomial(p.size, q, size=m).astype(np.int64)
            z0 = self.draw_factors(rng, m) @ p.weights[0]
            q = conditional_pd(p.thresholds[0], p.sensitivities[0], z0)
            return rng.binomial(p.size, q).astype(np.int64)

        if fixed:
            cond = np.asarray(
                conditional_pd(
                    p.thresholds, p.sensitivities, p.composite_factor(self.scenario.fixed_values)
                )
            )[None, :]
        else:
            z = self.draw_factors(rng, m) @ p.weights.T
            cond = conditional_pd(p.thresholds[None, :], p.sensitivities[None, :], z)
        defaults = sample_uniform(rng, m, p.size, antithetic=self.cfg.antithetic) < cond
        if self.grid.equal_exposures:
            return np.count_nonzero(defaults, axis=1).astype(np.int64)
        return defaults.astype(np.int64) @ self.grid.units


def _simulate_block(
    plan: _SimulationPlan, index: int, size: int
) -> tuple[IntArray, IntArray | None]:
    """
    ブロック index の size 本のパスをシミュレートし、損失水準ごとの件数を返す。

    対称変量法では、対になる 2 本の損失が一致した件数も返す (標準誤差の計算用)。
    """
    rng = substream(plan.cfg.seed, index)
    n_levels = plan.grid.n_levels
    counts = np.zeros(n_levels, dtype=np.int64)
    same = np.zeros(n_levels, dtype=np.int64) if plan.cfg.antithetic else None

    rows = max(2, _MAX_CHUNK_CELLS // max(plan.portfolio.size, 1))
    rows -= rows % 2
    done = 0
    while done < size:
        m = min(rows, size - done)
        losses = plan.sample_losses(rng, m)
        counts += np.bincount(losses, minlength=n_levels)
        if same is not None:
            first, second = losses[: m // 2], losses[m // 2 :]
            same += np.bincount(first[first == second], minlength=n_levels)
        done += m
    return counts, same


def _pilot_acceptance(sc: Scenario, p: Portfolio, seed: int) -> float:
    """切断ボックスの採択率を専用ストリームで見積もる。"""
    rng = substream(seed, _PILOT_STREAM)
    root = p.factor_model.root
    accepted = 0
    drawn = 0
    while drawn < PILOT_DRAWS:
        m = min(_PILOT_CHUNK, PILOT_DRAWS - drawn)
        candidates = rng.standard_normal((m, p.factor_model.k)) @ root.T
        accepted += int(np.count_nonzero(sc.contains(candidates)))
        drawn += m
    return accepted / drawn


def _standard_errors(
    counts: IntArray, same: IntArray | None, n_sims: int
) -> FloatArray:
    probs = counts / n_sims
    if same is None:
        return np.sqrt(probs * (1.0 - probs) / n_sims)
    # 対ごとの平均 m_j の分散: 両方が水準 ℓ なら m_j = 1、片方のみなら 1/2
    n_pairs = n_sims // 2
    second_moment = (same + 0.25 * (counts - 2 * same)) / n_pairs
    return np.sqrt(np.clip(second_moment - probs * probs, 0.0, None) / n_pairs)


def mc_loss_distribution(
    p: Portfolio,
    sc: Scenario,
    cfg: McConfig,
    *,
    grid: float = DEFAULT_LOSS_GRID,
) -> LossDistribution:
    """
    モンテカルロで損失分布を推定する。

    - UNCONDITIONAL: (X, S) を同時に引く。
    - FIXED: S = s に固定し X のみ引く。
    - TRUNCATED: S をボックスに制限した多変量正規から棄却法で引き、続いて X を引く。
      P[L ≤ ℓ | S ∈ box] の推定になる。

    パスは block_size 本ずつのブロックに分け、ブロック b は (seed, b) から決まる
    独立ストリームを使う。ブロックの件数は整数の和で集約するため、
    結果はワーカー数によらずビット単位で一致する。

    Args:
        p: ポートフォリオ。
        sc: シナリオ。
        cfg: モンテカルロの設定。
        grid: エクスポージャーが不均一な場合の損失格子。

    Raises:
        InfeasibleScenarioError: 切断ボックスの採択率が MIN_ACCEPTANCE_RATE 未満の場合。
        DomainError: 切断シナリオで対称変量法を指定した場合。
    """
    _require_valid(p)
    sc.check_dimension(p.factor_model.k)
    if cfg.antithetic and sc.kind is ScenarioKind.TRUNCATED:
        raise DomainError("Antithetic sampling is not supported with truncated scenarios")
    lg = _loss_grid(p, grid)

    # --- 切断ボックスの採択率 ---
    rate = 1.0
    if sc.kind is ScenarioKind.TRUNCATED:
        rate = _pilot_acceptance(sc, p, cfg.seed)
        if rate < MIN_ACCEPTANCE_RATE:
            raise InfeasibleScenarioError(
                f"Truncation box acceptance rate {rate:.3g} is below {MIN_ACCEPTANCE_RATE:g}",
                acceptance_rate=rate,
            )
        if rate < 100 * MIN_ACCEPTANCE_RATE:
            logger.warning("Truncation box acceptance rate is low: %.3g", rate)
        logger.debug("Truncation box acceptance rate %.6g", rate)

    plan = _SimulationPlan(
        portfolio=p, scenario=sc, grid=lg, cfg=cfg, acceptance_rate=rate
    )
    blocks = [
        (b, min(cfg.block_size, cfg.n_sims - b * cfg.block_size))
        for b in range(math.ceil(cfg.n_sims / cfg.block_size))
    ]
    logger.debug(
        "Simulating %d paths in %d blocks with %d workers (binomial fast path: %s)",
        cfg.n_sims, len(blocks), cfg.n_workers, plan.binomial_fast_path,
    )

    counts = np.zeros(lg.n_levels, dtype=np.int64)
    same = np.zeros(lg.n_levels, dtype=np.int64) if cfg.antithetic else None
    started = time.perf_counter()

    # --- 順次実行 ---
    if cfg.n_workers == 1:
        for b, size in blocks:
            block_counts, block_same = _simulate_block(plan, b, size)
            counts += block_counts
            if same is not None:
                same += block_same

    # --- 並列実行 ---
    else:
        with ThreadPoolExecutor(max_workers=cfg.n_workers) as executor:
            futures = {
                executor.submit(_simulate_block, plan, b, size): b for b, size in blocks
            }
            for future in as_completed(futures):
                try:
                    block_counts, block_same = future.result()
                except Exception:
                    logger.error("Simulation block %d failed", futures[future], exc_info=True)
                    raise
                counts += block_counts
                if same is not None:
                    same += block_same

    logger.info(
        "Monte Carlo loss distribution (%s): %d paths in %.2fs",
        sc.describe(), cfg.n_sims, time.perf_counter() - started,
    )
    return LossDistribution(
        loss_levels=lg.levels,
        probabilities=counts / cfg.n_sims,
        source=LossSource.MONTE_CARLO,
        mc_stderr=_standard_errors(counts, same, cfg.n_sims),
    )
