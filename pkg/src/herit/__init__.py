"""Heritability estimation from summary statistics: GWASH and LD score
regression estimators, simulation generators, analytic diagnostics and a
replicated-experiment runner."""
from .estimators import (
    DegenerateDenominatorError,
    DegenerateDesignError,
    EstimateResult,
    EstimatorSpec,
    estimate,
)
from .generators import (
    Ar1,
    Binomial,
    CoeffLaw,
    EquiCorr,
    Gaussian,
    GaussianEffects,
    Identity,
    MixedAr1,
    Mixture,
    PredictorLaw,
    Stratified,
    StudentT,
)
from .summary import LdScores, SummaryStats

__version__ = "0.1.0"
