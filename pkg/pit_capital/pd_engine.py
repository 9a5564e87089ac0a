"""PD の変換。

- PIT PD と TTC PD の相互変換 (合成ファクター s = w'S を条件とする)
- プロビットモデルとコピュラモデルのパラメータの一対一対応
- プロビット PIT PD の系統ファクターに関する積分による TTC PD
- 系統ファクターを単に除く素朴な変換 (比較用)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from logging import getLogger

import numpy as np
import numpy.typing as npt

from .errors import DegenerateModelError, DomainError
from .math_kernel import (
    FloatArray,
    QuadratureRule,
    default_rule,
    std_normal_cdf,
    std_normal_quantile,
)
from .model import FactorModel, ProbitModel

logger = getLogger(__name__)

INTEGRATION_TOL = 1e-8


def _check_sensitivity(rho: npt.ArrayLike) -> FloatArray:
    arr = np.asarray(rho, dtype=np.float64)
    if not np.all(np.abs(arr) < 1.0):
        raise DomainError(f"Sensitivity must satisfy |rho| < 1, got {rho!r}")
    return arr


@dataclass(frozen=True, eq=False)
class CopulaParams:
    """
    ガウスコピュラ側のパラメータ。

    Attributes:
        sensitivity: 共通の感応度 ρ。
        weights: var[w'S] = 1 に正規化された重み w。
        thresholds: 債務者ごとの閾値 T_i。
    """

    sensitivity: float
    weights: FloatArray
    thresholds: FloatArray

    def __post_init__(self) -> None:
        _check_sensitivity(self.sensitivity)
        object.__setattr__(self, "weights", np.atleast_1d(np.asarray(self.weights, dtype=np.float64)))
        object.__setattr__(self, "thresholds", np.atleast_1d(np.asarray(self.thresholds, dtype=np.float64)))


@dataclass(frozen=True)
class IntegratedPd:
    """求積による TTC PD と閉形式の値の組。"""

    quadrature: float
    closed_form: float

    @property
    def discrepancy(self) -> float:
        return abs(self.quadrature - self.closed_form)


# ------------------------------------------------------------------
#  PIT / TTC 変換
# ------------------------------------------------------------------


def conditional_pd(
    threshold: npt.ArrayLike, rho: npt.ArrayLike, w_dot_s: npt.ArrayLike
) -> float | FloatArray:
    """閾値 T から条件付き PD Φ((T - ρ s) / √(1 - ρ²)) を求める。"""
    r = _check_sensitivity(rho)
    t = np.asarray(threshold, dtype=np.float64)
    return std_normal_cdf((t - r * np.asarray(w_dot_s, dtype=np.float64)) / np.sqrt(1.0 - r * r))


def ttc_to_pit(
    ttc_pd: npt.ArrayLike, rho: npt.ArrayLike, w_dot_s: npt.ArrayLike
) -> float | FloatArray:
    """
    TTC PD を合成ファクター w'S = s の下での PIT PD に変換する。

        PIT = Φ((Φ⁻¹(TTC) - ρ s) / √(1 - ρ²))

    引数は numpy のブロードキャスト規則に従う。s は負が景気悪化側。

    Raises:
        DomainError: |ρ| ≥ 1、または PD が (0, 1) の外の場合。
    """
    return conditional_pd(std_normal_quantile(ttc_pd), rho, w_dot_s)


def pit_to_ttc(
    pit_pd: npt.ArrayLike, rho: npt.ArrayLike, w_dot_s: npt.ArrayLike
) -> float | FloatArray:
    """ttc_to_pit の逆変換: TTC = Φ(√(1 - ρ²) Φ⁻¹(PIT) + ρ s)。"""
    r = _check_sensitivity(rho)
    z = np.asarray(std_normal_quantile(pit_pd))
    return std_normal_cdf(np.sqrt(1.0 - r * r) * z + r * np.asarray(w_dot_s, dtype=np.float64))


def integrate_pit_pd(
    ttc_pd: float, rho: float, rule: QuadratureRule | None = None
) -> float:
    """
    PIT PD を合成ファクターの分布で積分する。

    条件付き独立モデルでは結果は ttc_pd に一致する (混合恒等式)。
    """
    rule = rule or default_rule()
    return float(rule.expect(ttc_to_pit(ttc_pd, rho, rule.nodes)))


# ------------------------------------------------------------------
#  プロビットモデル
# ------------------------------------------------------------------


def pit_pd_probit(score: float, loading: npt.ArrayLike, s: npt.ArrayLike) -> float:
    """
    プロビットモデルの PIT PD Φ(score + b's)。

    Raises:
        DomainError: b と s の次元が一致しない、または s が非有限の場合。
    """
    b = np.atleast_1d(np.asarray(loading, dtype=np.float64))
    values = np.atleast_1d(np.asarray(s, dtype=np.float64))
    if b.shape != values.shape:
        raise DomainError(f"Loading has shape {b.shape} but factor values have shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DomainError("Factor values must be finite")
    return float(std_normal_cdf(score + float(b @ values)))


def probit_to_copula(pm: ProbitModel, fm: FactorModel) -> CopulaParams:
    """
    プロビットモデルのパラメータをコピュラモデルのパラメータに変換する。

        ρ   = √v / √(1 + v)      (v = var[b'S])
        w   = -b / √v
        T_i = score_i √(1 - ρ²)

    Raises:
        DegenerateModelError: var[b'S] = 0 の場合。系統ファクターへの依存がないため
            ρ = 0、w は任意の単位ベクトル、T_i = score_i とすること。
    """
    problems = pm.problems(fm)
    if problems:
        raise DomainError("; ".join(problems))
    v = pm.var_bs
    if v <= 0.0:
        raise DegenerateModelError(
            "var[b'S] = 0: no systematic dependence; use rho=0 and thresholds equal to scores"
        )
    rho = math.sqrt(v) / math.sqrt(1.0 + v)
    return CopulaParams(
        sensitivity=rho,
        weights=-pm.loading / math.sqrt(v),
        thresholds=pm.scores / math.sqrt(1.0 + v),
    )


def copula_to_probit(cp: CopulaParams, fm: FactorModel) -> ProbitModel:
    """
    コピュラモデルのパラメータをプロビットモデルのパラメータに変換する。

        var[b'S] = ρ² / (1 - ρ²)
        b        = -w ρ / √(1 - ρ²)
        score_i  = T_i / √(1 - ρ²)

    ρ = 0 では b = 0、var[b'S] = 0、score_i = T_i を返す。
    (ρ, w) と (-ρ, -w) は同じモデルを表し、逆変換は ρ > 0 の側を返す。
    """
    if cp.weights.shape != (fm.k,):
        raise DomainError(f"Weights must have length {fm.k}, got {cp.weights.shape}")
    rho = cp.sensitivity
    if rho == 0.0:
        return ProbitModel(scores=cp.thresholds.copy(), loading=np.zeros(fm.k), var_bs=0.0)
    scale = math.sqrt(1.0 - rho * rho)
    return ProbitModel(
        scores=cp.thresholds / scale,
        loading=-cp.weights * rho / scale,
        var_bs=rho * rho / (1.0 - rho * rho),
    )


def ttc_pd_by_integration(
    score: float, var_bs: float, rule: QuadratureRule | None = None
) -> IntegratedPd:
    """
    プロビット PIT PD を b'S ~ N(0, var_bs) で積分して TTC PD を求める。

    求積値 ∫Φ(score + y) dP(y) と閉形式 Φ(score / √(1 + var_bs)) の両方を返す。
    両者の差が INTEGRATION_TOL を超えた場合は warning を出す。
    """
    if not var_bs >= 0.0:
        raise DomainError(f"var[b'S] must be nonnegative, got {var_bs!r}")
    rule = rule or default_rule()
    sd = math.sqrt(var_bs)
    quadrature = float(rule.expect(std_normal_cdf(score + sd * rule.nodes)))
    closed_form = float(std_normal_cdf(score / math.sqrt(1.0 + var_bs)))
    result = IntegratedPd(quadrature=quadrature, closed_form=closed_form)
    if result.discrepancy > INTEGRATION_TOL:
        logger.warning(
            "Quadrature TTC PD %.12g differs from closed form %.12g (%d nodes)",
            quadrature, closed_form, rule.n_nodes,
        )
    return result


def ttc_pds_from_probit(pm: ProbitModel) -> FloatArray:
    """全債務者の TTC PD を閉形式 Φ(score_i / √(1 + var[b'S])) で返す。"""
    return np.asarray(std_normal_cdf(pm.scores / math.sqrt(1.0 + pm.var_bs)))


def naive_ttc_pd(score: float) -> float:
    """
    系統ファクター項を単に取り除いた素朴な TTC PD Φ(score)。

    偏りがある: score < 0 では真の TTC PD を過小評価し、score > 0 では過大評価する。
    比較用にのみ使うこと。
    """
    return float(std_normal_cdf(score))
