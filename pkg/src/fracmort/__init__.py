"""Mortality hazard modelling with fractional Ornstein-Uhlenbeck residuals."""

from .data import MortalityTable, extract_cohort, load_bundled_fixture, parse_hmd
from .errors import (
    DataFormatError,
    FilterInconsistencyError,
    FracmortError,
    GapError,
    InsufficientDataError,
    InsufficientVariationError,
    NotFoundError,
    NumericalDegeneracyError,
)
from .fgn import FgnPath, fbm_covariance, fgn_autocovariance, generate_fgn
from .fou import FouParams, FouPath, fou_variance, simulate_fou
from .hurst import HurstEstimate, HurstMethod, estimate_hurst
from .mortality import CohortSeries, MortalityModel, Sex, fit_model, forecast, survival_probability
from .qgv import Filter, QgvEstimates, classical_filter, daubechies_filter, estimate_qgv

__version__ = "0.1.0"
