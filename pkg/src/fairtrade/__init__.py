"""Fair bilateral energy trading between energy hubs.

The pipeline: load a scenario, solve each hub's non-trading baseline,
solve the trading game (centrally or by consensus ADMM), then price the
resulting trades so the savings are shared evenly.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .dispatch import (DispatchResult, network_baseline, run_admm, social_cost_gap, solve_centralized,
                       verify_price_invariance)
from .errors import FairtradeError
from .pricing import (BeneficialPriceCertificate, FairnessReport, MediationConfig, PricingModel,
                      construct_beneficial_prices, cost_reduction, estimate_lipschitz, fairness_gradient,
                      fairness_metric, run_mediation)
from .profiles import DispatchProfile, PriceProfile
from .qp import QpProblem, QpSolution, Status, solve_qp
from .results_io import read_results, write_results
from .scenario import Scenario, load_scenario, shipped_scenario_path, validate_scenario

__all__ = [
    "BeneficialPriceCertificate", "DispatchProfile", "DispatchResult", "FairnessReport", "FairtradeError",
    "MediationConfig", "PriceProfile", "PricingModel", "QpProblem", "QpSolution", "Scenario", "Status",
    "construct_beneficial_prices", "cost_reduction", "estimate_lipschitz", "fairness_gradient",
    "fairness_metric", "load_scenario", "network_baseline", "read_results", "run_admm", "run_mediation",
    "shipped_scenario_path", "social_cost_gap", "solve_centralized", "solve_qp", "validate_scenario",
    "verify_price_invariance", "write_results",
]
