"""Random, well-conditioned problem generators shared by tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .spec import Dimensions, OdeSpec, Weights


def random_spec(
    rng: np.random.Generator,
    dims: Dimensions,
    batch_shape: tuple[int, ...] = (),
    weights: Weights | None = None,
    step_range: tuple[float, float] = (0.05, 0.5),
) -> OdeSpec:
    """Gaussian ``c``, ``d``, ``u`` and uniform step sizes in ``step_range``.

    The smoothness and initial-value rows make the normal matrix positive
    definite for any ``c``, so these specs are safe for every solver.
    """
    lo, hi = step_range
    return OdeSpec(
        dims=dims,
        c=rng.standard_normal(batch_shape + dims.c_shape),
        d=rng.standard_normal(batch_shape + dims.d_shape),
        u=rng.standard_normal(batch_shape + dims.u_shape),
        s=rng.uniform(lo, hi, size=batch_shape + dims.s_shape),
        weights=weights or Weights(),
    )


def random_dims(rng: np.random.Generator, max_T: int = 12, max_V: int = 3, max_R: int = 3, max_Q: int = 4) -> Dimensions:
    """Dimensions drawn uniformly from the given ranges, redrawn until ``m >= n``."""
    while True:
        T = int(rng.integers(1, max_T + 1))
        R = int(rng.integers(0, max_R + 1))
        dims = Dimensions(
            T=T,
            V=int(rng.integers(1, max_V + 1)),
            Q=int(rng.integers(1, max_Q + 1)),
            R=R,
            T_init=int(rng.integers(1, min(T, 2) + 1)),
            R_init=int(rng.integers(0, R + 1)),
        )
        if dims.m >= dims.n:
            return dims


def random_weights(rng: np.random.Generator, low: float = 0.5, high: float = 2.0) -> Weights:
    gov, init, smooth = rng.uniform(low, high, size=3)
    return Weights(gov=float(gov), init=float(init), smooth=float(smooth))


def condition_number(spec: OdeSpec) -> float:
    """2-norm condition number of the assembled normal matrix (small specs only)."""
    from .assembly import assemble_blocks

    return float(np.linalg.cond(assemble_blocks(spec).to_dense()))


def random_suite_spec(
    rng: np.random.Generator,
    max_T: int = 12,
    max_V: int = 3,
    max_R: int = 3,
    max_Q: int = 4,
    max_cond: float = 1e8,
) -> OdeSpec:
    """Random dims, weights in ``[0.5, 2]`` and steps in ``[0.01, 1]``.

    Forward and backward smoothness rows of one interval are exact inverses
    of each other, so they pin only ``(T - 1) * B`` directions; the
    governing and initial rows must supply the remaining ``B``. Draws that
    cannot or whose normal matrix is worse conditioned than ``max_cond``
    are redrawn.
    """
    while True:
        dims = random_dims(rng, max_T, max_V, max_R, max_Q)
        spec = random_spec(rng, dims, weights=random_weights(rng), step_range=(0.01, 1.0))
        if dims.T * dims.Q + dims.T_init * dims.V * (dims.R_init + 1) < dims.B:
            continue
        if condition_number(spec) <= max_cond:
            return spec
