from .capital import (
    AnalysisMode,
    CapitalReport,
    Engine,
    economic_capital,
    expected_loss,
    pit_confidence_level,
    run_analysis,
    value_at_risk,
)
from .loader import load_portfolio
from .loss_engine import (
    McConfig,
    mc_loss_distribution,
    pit_loss_distribution,
    ttc_loss_distribution,
)
from .model import FactorModel, Obligor, Portfolio, ProbitModel, Scenario
from .pd_engine import copula_to_probit, pit_to_ttc, probit_to_copula, ttc_to_pit
from .table1 import reproduce_table1

__all__ = [
    "AnalysisMode",
    "CapitalReport",
    "Engine",
    "FactorModel",
    "McConfig",
    "Obligor",
    "Portfolio",
    "ProbitModel",
    "Scenario",
    "copula_to_probit",
    "economic_capital",
    "expected_loss",
    "load_portfolio",
    "mc_loss_distribution",
    "pit_confidence_level",
    "pit_loss_distribution",
    "pit_to_ttc",
    "probit_to_copula",
    "reproduce_table1",
    "run_analysis",
    "ttc_loss_distribution",
    "ttc_to_pit",
    "value_at_risk",
]
