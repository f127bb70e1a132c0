"""Numerical laboratory for two-penalty boundary (thin) obstacle problems.

The package solves the penalized boundary obstacle problem on the upper
half-cube, computes Almgren-, Weiss-, and Monneau-type monotonicity
quantities on a ladder of radii, forms blow-up rescalings with tangent
polynomial fits, and extracts and stratifies the free boundary.
"""

from .errors import (
    DegenerateNormalizationError,
    DomainError,
    InternalInconsistencyError,
    NonConvergedError,
    ResolutionError,
    SpecError,
)
from .expressions import parse_expression
from .fields import (
    CoefficientField,
    ProblemSpec,
    ScalarField,
    ValidationReport,
    validate_spec,
)
from .geometry import (
    Grid,
    QuadratureRule,
    build_grid,
    disk_quadrature,
    halfball_quadrature,
    hemisphere_quadrature,
    interpolate,
)
from .manufactured import AnalyticField, even_harmonic_polynomial, log_solution_w
from .solver import (
    DiscreteEnergy,
    SolveResult,
    assemble,
    minimize,
    solve_linear_mixed,
    weak_residual,
)
from .taylor import NormalizedProblem, Polynomial, check_f_growth, extend_obstacle, normalize

__version__ = "0.1.0"

__all__ = [
    "AnalyticField",
    "CoefficientField",
    "DegenerateNormalizationError",
    "DiscreteEnergy",
    "DomainError",
    "Grid",
    "InternalInconsistencyError",
    "NonConvergedError",
    "NormalizedProblem",
    "Polynomial",
    "ProblemSpec",
    "QuadratureRule",
    "ResolutionError",
    "ScalarField",
    "SolveResult",
    "SpecError",
    "ValidationReport",
    "assemble",
    "build_grid",
    "check_f_growth",
    "disk_quadrature",
    "even_harmonic_polynomial",
    "extend_obstacle",
    "halfball_quadrature",
    "hemisphere_quadrature",
    "interpolate",
    "log_solution_w",
    "minimize",
    "normalize",
    "parse_expression",
    "solve_linear_mixed",
    "validate_spec",
    "weak_residual",
]
