"""Block-banded least-squares solver for linear ODE specifications."""

from .assembly import BlockSystem, assemble_blocks
from .banded import Factorization, GradientBundle, decompose, solve_backward, solve_forward, substitute
from .dense import DenseSystem, assemble_dense, solve_dense
from .errors import (
    Diverged,
    MechbandError,
    MissingCache,
    NonFiniteInput,
    NonFiniteState,
    NonPositiveStep,
    NotPositiveDefinite,
    OracleTooLarge,
    ShapeMismatch,
    SingularNormalMatrix,
    UnderDetermined,
)
from .gradients import SpecGradients, chain_to_spec, grad_check, solve_spec, spec_gradients
from .spec import Dimensions, OdeSpec, Solution, Weights, make_spec, validate_spec

__version__ = "0.1.0"

__all__ = [
    "BlockSystem",
    "DenseSystem",
    "Dimensions",
    "Diverged",
    "Factorization",
    "GradientBundle",
    "MechbandError",
    "MissingCache",
    "NonFiniteInput",
    "NonFiniteState",
    "NonPositiveStep",
    "NotPositiveDefinite",
    "OdeSpec",
    "OracleTooLarge",
    "ShapeMismatch",
    "SingularNormalMatrix",
    "Solution",
    "SpecGradients",
    "UnderDetermined",
    "Weights",
    "assemble_blocks",
    "assemble_dense",
    "chain_to_spec",
    "decompose",
    "grad_check",
    "make_spec",
    "solve_backward",
    "solve_dense",
    "solve_forward",
    "solve_spec",
    "spec_gradients",
    "substitute",
    "validate_spec",
]
