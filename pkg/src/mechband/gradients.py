"""Chain block-system gradients back to the ODE description ``(c, d, u, s)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import BlockSystem, assemble_blocks
from .banded import GradientBundle, solve_backward, solve_forward
from .errors import NonPositiveStep, ShapeMismatch
from .spec import OdeSpec, Solution, validate_spec


@dataclass
class SpecGradients:
    """Gradients shaped like the spec tensors (with the broadcast batch shape)."""

    dc: np.ndarray
    dd: np.ndarray
    du: np.ndarray
    ds: np.ndarray | None = None


def chain_to_spec(spec: OdeSpec, sys: BlockSystem, g: GradientBundle) -> SpecGradients:
    """Analytic ``dl/dc``, ``dl/dd``, ``dl/du`` from a solver backward pass.

    ``ds`` is left as ``None``; see :func:`grad_s_fd`.
    """
    dims = spec.dims
    batch = spec.batch_shape
    if g.d_beta.shape != sys.beta.shape or g.d_m_diag.shape != sys.m_diag.shape:
        raise ShapeMismatch("gradient bundle does not match the block system")
    T, Q, B = dims.T, dims.Q, dims.B
    w = spec.weights
    C = np.broadcast_to(spec.c, batch + dims.c_shape).reshape(batch + (T, Q, B))
    d = np.broadcast_to(spec.d, batch + dims.d_shape)
    G = g.d_m_diag
    db = g.d_beta

    dd = w.gov**2 * (C @ db[..., None])[..., 0]
    dC = w.gov**2 * (C @ (G + np.swapaxes(G, -1, -2)) + d[..., :, None] * db[..., None, :])
    dc = dC.reshape(batch + dims.c_shape)
    du = w.init**2 * db[..., : dims.T_init, :].reshape(batch + (dims.T_init, dims.V, dims.R + 1))
    du = du[..., : dims.R_init + 1]
    return SpecGradients(dc=dc, dd=dd, du=np.ascontiguousarray(du))


def spec_gradients(spec: OdeSpec, dl_dy: np.ndarray | Callable[[Solution], np.ndarray]) -> tuple[Solution, SpecGradients]:
    """Forward solve plus analytic gradients.

    ``dl_dy`` is either an array shaped like the solution or a callable
    mapping the solution to that array.
    """
    sys = assemble_blocks(spec)
    f, sol = solve_forward(sys)
    g_y = dl_dy(sol) if callable(dl_dy) else dl_dy
    bundle = solve_backward(f, g_y)
    return sol, chain_to_spec(spec, sys, bundle)


def solve_spec(spec: OdeSpec) -> Solution:
    return solve_forward(assemble_blocks(spec))[1]


def grad_s_fd(spec: OdeSpec, loss: Callable[[Solution], float]) -> np.ndarray:
    """Central finite differences of ``loss`` with respect to each step size.

    Costs two full solves per interval. The step is
    ``max(1e-4 * s_t, 1e-6)``, halved until ``s_t - h > 0``.
    """
    validate_spec(spec)
    if spec.batch_shape:
        raise ShapeMismatch("grad_s_fd takes an unbatched spec")
    s0 = np.array(spec.s)
    ds = np.zeros_like(s0)
    for t in range(s0.size):
        h = max(1e-4 * s0[t], 1e-6)
        while s0[t] - h <= 0:
            h *= 0.5
            if h == 0.0:
                raise NonPositiveStep(f"cannot perturb s[{t}] = {s0[t]}")
        plus, minus = s0.copy(), s0.copy()
        plus[t] += h
        minus[t] -= h
        lp = loss(solve_spec(spec.replace(s=plus)))
        lm = loss(solve_spec(spec.replace(s=minus)))
        ds[t] = (lp - lm) / (2 * h)
    return ds


def relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Norm-wise relative error ``|a - r| / max(|a|, |r|)`` (0 when both vanish)."""
    a = np.ravel(analytic)
    r = np.ravel(reference)
    scale = max(np.linalg.norm(a), np.linalg.norm(r))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - r) / scale)


def fd_spec_gradients(
    spec: OdeSpec,
    loss: Callable[[Solution], float],
    names: tuple[str, ...] = ("c", "d", "u"),
    entries: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Central-difference gradients of ``loss`` w.r.t. spec tensors.

    Each entry uses ``h = 1e-6 * (1 + |x|)``. ``entries`` optionally
    restricts a tensor to a subset of flat indices; skipped entries are NaN.
    """
    out = {}
    for name in names:
        base = np.array(getattr(spec, name))
        grad = np.full(base.size, np.nan)
        idx = np.arange(base.size) if entries is None or name not in entries else entries[name]
        flat = base.ravel()
        for k in idx:
            h = 1e-6 * (1.0 + abs(flat[k]))
            plus, minus = flat.copy(), flat.copy()
            plus[k] += h
            minus[k] -= h
            lp = loss(solve_spec(spec.replace(**{name: plus.reshape(base.shape)})))
            lm = loss(solve_spec(spec.replace(**{name: minus.reshape(base.shape)})))
            grad[k] = (lp - lm) / (2 * h)
        out[name] = grad.reshape(base.shape)
    return out


def grad_check(spec: OdeSpec, seed: int = 0, max_entries: int = 200) -> dict[str, float]:
    """Compare analytic and finite-difference gradients on ``l = 0.5 |y - y*|^2``.

    ``y*`` is random. At most ``max_entries`` randomly chosen entries per
    tensor are probed. Returns the relative error per tensor.
    """
    rng = np.random.default_rng(seed)
    target = rng.standard_normal(spec.dims.y_shape)

    def loss(sol: Solution) -> float:
        return 0.5 * float(np.sum((sol.y - target) ** 2))

    _, analytic = spec_gradients(spec, lambda sol: sol.y - target)
    entries = {}
    for name in ("c", "d", "u"):
        size = getattr(spec, name).size
        if size > max_entries:
            entries[name] = np.sort(rng.choice(size, max_entries, replace=False))
    fd = fd_spec_gradients(spec, loss, entries=entries)
    errors = {}
    for name in ("c", "d", "u"):
        ref = fd[name].ravel()
        mask = ~np.isnan(ref)
        errors[name] = relative_error(getattr(analytic, "d" + name).ravel()[mask], ref[mask])
    return errors
