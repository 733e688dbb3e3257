"""Row-by-row reference construction of the weighted least-squares system.

This is the literal cubic-cost baseline: every constraint becomes one row
of ``A`` with its own weight, and the normal equations are solved densely.
It intentionally shares no code with :mod:`mechband.assembly`.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from .errors import OracleTooLarge, SingularNormalMatrix
from .spec import Dimensions, OdeSpec, Solution, validate_spec

MAX_UNKNOWNS = 5000

GOVERNING = "governing"
INITIAL = "initial"
SMOOTH_FORWARD = "smooth_forward"
SMOOTH_BACKWARD = "smooth_backward"


@dataclass(frozen=True)
class DenseSystem:
    """``A``, squared row weights and ``b``, plus a provenance tag per row.

    ``A`` is ``(..., m, n)``; ``W_diag`` and ``b`` are ``(..., m)``.

    ``row_kind[k]`` is one of the four kind strings and ``row_index[k]`` is
    ``(t, q)`` for governing rows and ``(t, v, r)`` otherwise (0-based).
    """

    A: np.ndarray
    W_diag: np.ndarray
    b: np.ndarray
    row_kind: tuple[str, ...]
    row_index: tuple[tuple[int, ...], ...]
    dims: Dimensions

    def normal_matrix(self) -> np.ndarray:
        return (np.swapaxes(self.A, -1, -2) * self.W_diag[..., None, :]) @ self.A

    def normal_rhs(self) -> np.ndarray:
        return (np.swapaxes(self.A, -1, -2) @ (self.W_diag * self.b)[..., None])[..., 0]


def assemble_dense(spec: OdeSpec) -> DenseSystem:
    """Write out every constraint row of ``spec``.

    Rows are produced one at a time in a fixed order: governing, initial,
    then forward and backward smoothness per interval. Batched specs give
    batched ``A``, ``W_diag`` and ``b``; the row layout is shared.
    """
    dims = validate_spec(spec)
    if dims.n > MAX_UNKNOWNS:
        raise OracleTooLarge(f"n={dims.n} exceeds the dense oracle cap of {MAX_UNKNOWNS}")
    T, V, Q, R = dims.T, dims.V, dims.Q, dims.R
    batch = spec.batch_shape
    w = spec.weights
    col = dims.flat_index
    c = np.broadcast_to(spec.c, batch + dims.c_shape)
    d = np.broadcast_to(spec.d, batch + dims.d_shape)
    u = np.broadcast_to(spec.u, batch + dims.u_shape)
    s = np.broadcast_to(spec.s, batch + dims.s_shape)

    A = np.zeros(batch + (dims.m, dims.n))
    W = np.zeros(batch + (dims.m,))
    b = np.zeros(batch + (dims.m,))
    kinds, where = [], []
    k = 0

    for t in range(T):
        for q in range(Q):
            for v in range(V):
                for r in range(R + 1):
                    A[..., k, col(t, v, r)] = c[..., t, q, v, r]
            W[..., k] = w.gov**2
            b[..., k] = d[..., t, q]
            kinds.append(GOVERNING)
            where.append((t, q))
            k += 1

    for t in range(dims.T_init):
        for v in range(V):
            for r in range(dims.R_init + 1):
                A[..., k, col(t, v, r)] = 1.0
                W[..., k] = w.init**2
                b[..., k] = u[..., t, v, r]
                kinds.append(INITIAL)
                where.append((t, v, r))
                k += 1

    for t in range(T - 1):
        h = s[..., t]
        # y[t+1, r] = sum_{r'>=r} h^(r'-r)/(r'-r)! y[t, r'], moved to the left
        for v in range(V):
            for r in range(R + 1):
                A[..., k, col(t + 1, v, r)] += 1.0
                for rp in range(r, R + 1):
                    A[..., k, col(t, v, rp)] -= h ** (rp - r) / factorial(rp - r)
                W[..., k] = (w.smooth * h**r) ** 2
                kinds.append(SMOOTH_FORWARD)
                where.append((t, v, r))
                k += 1
        # y[t, r] = sum_{r'>=r} (-h)^(r'-r)/(r'-r)! y[t+1, r'], moved to the left
        for v in range(V):
            for r in range(R + 1):
                A[..., k, col(t, v, r)] += 1.0
                for rp in range(r, R + 1):
                    A[..., k, col(t + 1, v, rp)] -= (-h) ** (rp - r) / factorial(rp - r)
                W[..., k] = (w.smooth * h**r) ** 2
                kinds.append(SMOOTH_BACKWARD)
                where.append((t, v, r))
                k += 1

    assert k == dims.m
    return DenseSystem(A=A, W_diag=W, b=b, row_kind=tuple(kinds), row_index=tuple(where), dims=dims)


def _each(batch: tuple[int, ...]):
    return np.ndindex(batch) if batch else [()]


def dense_normal_solve(A: np.ndarray, W_diag: np.ndarray, b: np.ndarray):
    """Solve ``(A^T W A) y = A^T W b`` by dense Cholesky.

    Leading batch dimensions are allowed. Returns ``(y, factors, rhs)``
    where ``factors`` holds the lower Cholesky factors of the normal matrix.
    """
    AtW = np.swapaxes(A, -1, -2) * W_diag[..., None, :]
    M = AtW @ A
    rhs = (AtW @ b[..., None])[..., 0]
    y = np.empty_like(rhs)
    for idx in _each(M.shape[:-2]):
        try:
            # overwrite the normal matrix with its factor
            M[idx] = cholesky(M[idx], lower=True, overwrite_a=True, check_finite=False)
        except LinAlgError as exc:
            raise SingularNormalMatrix(f"normal matrix is not positive definite (batch item {idx})") from exc
        y[idx] = cho_solve((M[idx], True), rhs[idx], check_finite=False)
    return y, M, rhs


def dense_backward(factors: np.ndarray, y: np.ndarray, dl_dy: np.ndarray):
    """Dense counterpart of the solver backward pass: ``(dl/dbeta, dl/dM)``."""
    d_beta = np.empty_like(dl_dy)
    for idx in _each(factors.shape[:-2]):
        d_beta[idx] = cho_solve((factors[idx], True), dl_dy[idx], check_finite=False)
    d_M = -d_beta[..., :, None] * y[..., None, :]
    return d_beta, d_M


def solve_dense(sys: DenseSystem) -> Solution:
    """Solve the weighted normal equations of ``sys`` densely."""
    y, _, _ = dense_normal_solve(sys.A, sys.W_diag, sys.b)
    return Solution(y.reshape(y.shape[:-1] + sys.dims.y_shape))
