"""Certified fixed-point solver for evolution equations in a Banach scale,
instantiated on a truncated mutation-selection correlation hierarchy."""

from .errors import (
    AdmissibilityError,
    BanachScaleError,
    ConfigurationError,
    ContractionViolationError,
    DomainError,
    ModelValidationError,
    OracleDomainError,
)
from .kimura import (
    CorrelationHierarchy,
    DiscreteSpace,
    KimuraModel,
    KimuraProblem,
    RateData,
    TimeProfile,
    model_constants,
    solve_kimura,
)
from .oracles import (
    bound_verifier,
    bruteforce_oracle,
    evolution_law_check,
    poisson_oracle,
    validate_poisson_closure,
)
from .scalecore import (
    OvcyannikovConstants,
    ScaleWindow,
    lambda0,
    lambda0_terms,
    time_horizon,
    weighted_gamma_norm,
)
from .solver import (
    EvolutionSystem,
    PerturbationMap,
    TriangleSolution,
    apriori_check,
    contraction_check,
    integral_map,
    picard_solve,
    residual_check,
)
from .stability import (
    PerturbedFamily,
    ProblemInstance,
    kimura_h_family,
    lambda1,
    scalar_exact,
    scalar_family,
    stability_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "BanachScaleError",
    "ConfigurationError",
    "ContractionViolationError",
    "CorrelationHierarchy",
    "DiscreteSpace",
    "DomainError",
    "EvolutionSystem",
    "KimuraModel",
    "KimuraProblem",
    "ModelValidationError",
    "OracleDomainError",
    "OvcyannikovConstants",
    "PerturbationMap",
    "PerturbedFamily",
    "ProblemInstance",
    "RateData",
    "ScaleWindow",
    "TimeProfile",
    "TriangleSolution",
    "apriori_check",
    "bound_verifier",
    "bruteforce_oracle",
    "contraction_check",
    "evolution_law_check",
    "integral_map",
    "kimura_h_family",
    "lambda0",
    "lambda0_terms",
    "lambda1",
    "model_constants",
    "picard_solve",
    "poisson_oracle",
    "residual_check",
    "scalar_exact",
    "scalar_family",
    "solve_kimura",
    "stability_experiment",
    "time_horizon",
    "validate_poisson_closure",
    "weighted_gamma_norm",
]
