"""Persuasion rates on the treated from binary-outcome panels via difference-in-differences."""

from .boe import BoeInput, boe_ci, boe_point, boe_summary
from .bounds import aggregate_sharp_bounds, conditional_bounds
from .dataset import StaggeredPanel, TwoPeriodPanel, load_staggered_csv, load_two_period_csv, to_cells
from .errors import EstimationError, PersuasionError, ValidationError
from .nuisance import FoldPlan, Method, fit_nuisance
from .report import EstimateReport, Target
from .staggered import espr, espr_pretrend
from .twoperiod_reg import aprt_from_fe, fit_two_way_fe, gmm_iv, raprt_from_fe, type_shares
from .twoperiod_semipar import Link, estimate_did, estimate_dr, estimate_pi, estimate_pow

__version__ = "0.1.0"

__all__ = [
    "BoeInput", "boe_ci", "boe_point", "boe_summary", "aggregate_sharp_bounds", "conditional_bounds",
    "StaggeredPanel", "TwoPeriodPanel", "load_staggered_csv", "load_two_period_csv", "to_cells",
    "EstimationError", "PersuasionError", "ValidationError", "FoldPlan", "Method", "fit_nuisance",
    "EstimateReport", "Target", "espr", "espr_pretrend", "aprt_from_fe", "fit_two_way_fe", "gmm_iv",
    "raprt_from_fe", "type_shares", "Link", "estimate_did", "estimate_dr", "estimate_pi", "estimate_pow",
    "__version__",
]
