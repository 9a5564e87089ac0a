"""pit_capital で送出する例外の定義。

各例外は CLI の終了コード (exit_code) を持ち、対応する組み込み例外も継承する。
"""

from __future__ import annotations

from typing import Any


class PitCapitalError(Exception):
    """pit_capital の全例外の基底クラス。"""

    exit_code: int = 1

    def __init__(self, message: str, *, details: Any = None) -> None:
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """CLI が標準エラーに書き出すエラーオブジェクトを返す。"""
        return {
            "error": type(self).__name__,
            "message": str(self),
            "details": self.details,
        }


class ConfigError(PitCapitalError, ValueError):
    """設定・引数の不整合。"""

    exit_code = 2


class PortfolioParseError(ConfigError):
    """ポートフォリオファイルの構文エラー。"""


class PortfolioValidationError(PitCapitalError, ValueError):
    """ポートフォリオが不変条件を満たさない。details に違反のリストを持つ。"""

    exit_code = 3

    def __init__(self, message: str, violations: list[str]) -> None:
        super().__init__(message, details=list(violations))
        self.violations = list(violations)


class NumericalError(PitCapitalError, ArithmeticError):
    """数値計算上のエラーの基底クラス。"""

    exit_code = 4


class DomainError(NumericalError, ValueError):
    """関数の定義域外の入力。"""


class CapacityError(NumericalError):
    """厳密計算の容量超過。mc_loss_distribution を使う必要がある。"""


class UnsupportedModeError(NumericalError):
    """エンジンが対応していない計算モード。"""


class DegenerateModelError(NumericalError):
    """系統ファクターへの依存がない退化したモデル。"""


class InfeasibleScenarioError(NumericalError):
    """切断ボックスの採択率が小さすぎるシナリオ。"""

    def __init__(self, message: str, acceptance_rate: float) -> None:
        super().__init__(message, details={"acceptance_rate": acceptance_rate})
        self.acceptance_rate = acceptance_rate


class GoldenMismatchError(PitCapitalError):
    """比較表の再現で期待値から外れたセルがある。"""

    exit_code = 5

    def __init__(self, message: str, mismatches: list[str]) -> None:
        super().__init__(message, details=list(mismatches))
        self.mismatches = list(mismatches)
