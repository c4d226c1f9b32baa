"""Folding entropy, entropy production and SRB estimators for hyperbolic toral endomorphisms."""

__version__ = "0.1.0"

from .dynamics import PerturbedEndo, Prehistory, TrigTerm, example_map, periodic_points, preimages
from .entropy import entropy_production, folding_entropy, folding_entropy_constant_degree, jacobian_ratio
from .errors import (
    DegeneratePeriodError,
    HyperbolicityLossError,
    InvalidInputError,
    NumericalError,
    PerturbationTooLargeError,
    ToralfoldError,
    TreeBudgetError,
    ValidationError,
)
from .gibbs import forward_srb, gibbs_ball_diagnostic, inverse_srb, periodic_gibbs_approximant, pressure_estimate
from .livshitz import cohomology_verdict, periodic_average_spread
from .measures import AtomicMeasure, GridHistogram, integrate
from .torus import IntegerMatrix, reduce_mod1, torus_distance

__all__ = [
    "AtomicMeasure",
    "DegeneratePeriodError",
    "GridHistogram",
    "HyperbolicityLossError",
    "IntegerMatrix",
    "InvalidInputError",
    "NumericalError",
    "PerturbationTooLargeError",
    "PerturbedEndo",
    "Prehistory",
    "ToralfoldError",
    "TreeBudgetError",
    "TrigTerm",
    "ValidationError",
    "cohomology_verdict",
    "entropy_production",
    "folding_entropy",
    "folding_entropy_constant_degree",
    "forward_srb",
    "gibbs_ball_diagnostic",
    "integrate",
    "inverse_srb",
    "jacobian_ratio",
    "example_map",
    "periodic_average_spread",
    "periodic_gibbs_approximant",
    "periodic_points",
    "preimages",
    "pressure_estimate",
    "reduce_mod1",
    "torus_distance",
]
