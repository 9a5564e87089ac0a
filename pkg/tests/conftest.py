from pathlib import Path
import shutil

import pytest

from pit_capital.model import FactorModel, Obligor, Portfolio


DATA_DIR = Path(__file__).parent.parent / "pit_capital" / "data"


@pytest.fixture
def portfolio_dir(tmp_path: Path) -> Path:
    """同梱のポートフォリオを tmp_path にコピーして返す。"""
    dest = tmp_path / "portfolios"
    dest.mkdir()
    for f in DATA_DIR.glob("*.csv"):
        shutil.copy(f, dest / f.name)
    return dest


@pytest.fixture
def subinv_csv(portfolio_dir: Path) -> Path:
    """非投資適格 (PD 3%) の 100 債務者ポートフォリオ。"""
    return portfolio_dir / "table1_subinv.csv"


@pytest.fixture
def inv_csv(portfolio_dir: Path) -> Path:
    """投資適格 (PD 0.3%) の 100 債務者ポートフォリオ。"""
    return portfolio_dir / "table1_inv.csv"


@pytest.fixture
def factors_one() -> Path:
    """同梱の 1 ファクター単位分散のサイドカー。"""
    return DATA_DIR / "factors_one.json"


@pytest.fixture
def mixed_portfolio() -> Portfolio:
    """エクスポージャー・PD・感応度が不均一な 1 ファクターの小さなポートフォリオ。"""
    specs = [
        ("a", 0.1, 0.02, 0.3),
        ("b", 0.2, 0.05, 0.5),
        ("c", 0.3, 0.01, -0.2),
        ("d", 0.15, 0.10, 0.6),
        ("e", 0.25, 0.03, 0.4),
    ]
    return Portfolio(
        obligors=tuple(
            Obligor(id=i, exposure=u, ttc_pd=pd, sensitivity=rho, factor_weights=(1.0,))
            for i, u, pd, rho in specs
        ),
        factor_model=FactorModel.identity(1),
    )


@pytest.fixture
def write_csv(tmp_path: Path):
    """tmp_path にヘッダー付きの CSV を書き出す関数を返す。"""

    def _write(name: str, rows: list[str], header: str = "id,exposure,ttc_pd,rho,w1") -> Path:
        path = tmp_path / name
        path.write_text("\n".join([header, *rows]) + "\n")
        return path

    return _write
