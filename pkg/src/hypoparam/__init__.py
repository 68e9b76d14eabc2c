"""Parameter inference for partially observed Langevin systems.

Two routes from a time series of positions to a predictive model: the
contrast estimator for the stochastic differential equation, and
conditional-likelihood NARMA models derived from its numerical schemes.
"""

__version__ = "0.1.0"

from .ct_estimator import ContrastFit, fit_contrast
from .dt_estimator import NarmaModel, NarmaSpec, fit_narma, simulate_narma
from .sde_sim import (
    DoubleWell, KramersForm, LangevinParams, ObservationSeries, Quadratic, SimConfig,
    simulate_and_observe,
)

__all__ = [
    "ContrastFit", "DoubleWell", "KramersForm", "LangevinParams", "NarmaModel", "NarmaSpec",
    "ObservationSeries", "Quadratic", "SimConfig", "fit_contrast", "fit_narma",
    "simulate_and_observe", "simulate_narma",
]
