"""Blocked Cholesky/LDL solver for symmetric block-tridiagonal systems.

The factorization is ``M = P L L^T P^T`` with ``P`` unit block-lower-
bidiagonal (subdiagonal blocks ``P_t``) and ``L`` block diagonal with
lower-triangular blocks ``L_t``. Only ``2T - 1`` blocks are stored, so time
is ``O(T B^3)`` and memory ``O(T B^2)``.

Every operation accepts arbitrary leading batch dimensions. The loops over
time run once per sweep; block arithmetic is vectorized over the batch.
Triangular factors are only ever applied through substitution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import BlockSystem
from .errors import MissingCache, NotPositiveDefinite, ShapeMismatch
from .spec import Solution

_FLOAT_BYTES = 8


def solve_lower(L: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Solve ``L Z = X`` by forward substitution.

    ``L`` is ``(..., B, B)`` lower triangular, ``X`` is ``(..., B, K)``.
    Leading dimensions broadcast.
    """
    B = L.shape[-1]
    Z = np.empty(np.broadcast_shapes(L.shape[:-2], X.shape[:-2]) + X.shape[-2:])
    for i in range(B):
        acc = X[..., i, :]
        if i:
            acc = acc - np.einsum("...j,...jk->...k", L[..., i, :i], Z[..., :i, :])
        Z[..., i, :] = acc / L[..., i, i, None]
    return Z


def solve_lower_t(L: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Solve ``L^T Z = X`` by back substitution (``L`` lower triangular)."""
    B = L.shape[-1]
    Z = np.empty(np.broadcast_shapes(L.shape[:-2], X.shape[:-2]) + X.shape[-2:])
    for i in range(B - 1, -1, -1):
        acc = X[..., i, :]
        if i < B - 1:
            acc = acc - np.einsum("...j,...jk->...k", L[..., i + 1:, i], Z[..., i + 1:, :])
        Z[..., i, :] = acc / L[..., i, i, None]
    return Z


def _mT(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


@dataclass
class Factorization:
    """Blocks of ``P`` and ``L`` plus the cached forward solution.

    Attributes:
        l_blocks: ``(..., T, B, B)`` lower-triangular diagonal blocks of ``L``.
        p_blocks: ``(..., T-1, B, B)`` subdiagonal blocks of ``P``.
        y: ``(..., T, B)`` solution of the forward pass, or ``None``.
    """

    l_blocks: np.ndarray
    p_blocks: np.ndarray
    var_shape: tuple[int, int]
    y: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.l_blocks.shape[-3]

    @property
    def B(self) -> int:
        return self.l_blocks.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.l_blocks.shape[:-3]

    @property
    def matrix_blocks(self) -> int:
        """Number of stored ``B x B`` blocks per system (always ``2T - 1``)."""
        return self.l_blocks.shape[-3] + self.p_blocks.shape[-3]

    @property
    def vector_segments(self) -> int:
        return 0 if self.y is None else self.y.shape[-2]

    def retained_bytes(self) -> int:
        """Exact byte count of the retained buffers, summed over the batch."""
        per_system = self.matrix_blocks * self.B**2 + self.vector_segments * self.B
        return per_system * int(np.prod(self.batch_shape, dtype=np.int64)) * _FLOAT_BYTES

    def reconstruct(self) -> np.ndarray:
        """Dense ``P L L^T P^T``; for testing only."""
        T, B = self.T, self.B
        n = T * B
        P = np.zeros(self.batch_shape + (n, n))
        Lf = np.zeros_like(P)
        for t in range(T):
            sl = slice(t * B, (t + 1) * B)
            P[..., sl, sl] = np.eye(B)
            Lf[..., sl, sl] = self.l_blocks[..., t, :, :]
        for t in range(T - 1):
            P[..., (t + 1) * B:(t + 2) * B, t * B:(t + 1) * B] = self.p_blocks[..., t, :, :]
        PL = P @ Lf
        return PL @ _mT(PL)


@dataclass
class GradientBundle:
    """Loss gradients w.r.t. the block system.

    ``d_m_diag`` and ``d_n_sub`` treat every entry of each diagonal block and
    each subdiagonal block as an independent parameter; ``n_sub[t]`` feeds
    both the lower and (transposed) upper position of the full matrix.
    """

    d_m_diag: np.ndarray
    d_n_sub: np.ndarray
    d_beta: np.ndarray


def _cholesky_block(A: np.ndarray, t: int) -> np.ndarray:
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    if A.ndim > 2:
        for idx in np.ndindex(A.shape[:-2]):
            try:
                np.linalg.cholesky(A[idx])
            except np.linalg.LinAlgError:
                raise NotPositiveDefinite(t, idx) from None
    raise NotPositiveDefinite(t)


def decompose(sys: BlockSystem, ridge: float = 0.0) -> Factorization:
    """Blocked Cholesky followed by conversion to blocked LDL form.

    Args:
        sys: assembled block system, symmetric positive definite.
        ridge: optional ``ridge * I`` added to every diagonal block.

    Raises:
        NotPositiveDefinite: Cholesky of the Schur complement at block ``t``
            failed; ``err.block`` holds ``t``.
    """
    T = sys.T
    # time-major work buffers so each per-step slab is contiguous
    L = np.array(np.moveaxis(sys.m_diag, -3, 0), dtype=np.float64, order="C")
    P = np.array(np.moveaxis(sys.n_sub, -3, 0), dtype=np.float64, order="C")
    if ridge:
        L += ridge * np.eye(sys.B)
    for i in range(T):
        if i > 0:
            # P_{i-1} <- P_{i-1} L_{i-1}^{-T}
            P[i - 1] = _mT(solve_lower(L[i - 1], _mT(P[i - 1])))
            L[i] -= P[i - 1] @ _mT(P[i - 1])
        L[i] = _cholesky_block(L[i], i)
    if T > 1:
        # P_i <- P_i L_i^{-1}, all i at once
        P = _mT(solve_lower_t(L[:-1], _mT(P)))
    L = np.moveaxis(L, 0, -3)
    P = np.moveaxis(P, 0, -3)
    return Factorization(l_blocks=L, p_blocks=P, var_shape=sys.var_shape)


def substitute(f: Factorization, alpha: np.ndarray) -> np.ndarray:
    """Return ``M^{-1} alpha`` for ``alpha`` of shape ``(..., T, B)``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[-2:] != (f.T, f.B):
        raise ShapeMismatch(f"alpha has shape {alpha.shape}, expected (..., {f.T}, {f.B})")
    T = f.T
    batch = np.broadcast_shapes(alpha.shape[:-2], f.batch_shape)
    a = np.array(np.moveaxis(np.broadcast_to(alpha, batch + (T, f.B)), -2, 0), order="C")[..., None]
    P = np.moveaxis(f.p_blocks, -3, 0)
    for i in range(1, T):
        a[i] -= P[i - 1] @ a[i - 1]
    Lt = np.moveaxis(f.l_blocks, -3, 0)
    a = solve_lower_t(Lt, solve_lower(Lt, a))
    for i in range(T - 2, -1, -1):
        a[i] -= _mT(P[i]) @ a[i + 1]
    a = np.moveaxis(a[..., 0], 0, -2)
    return a


def solve_forward(sys: BlockSystem, ridge: float = 0.0) -> tuple[Factorization, Solution]:
    """Factorize ``sys`` and solve ``M y = beta``.

    The solution is cached on the returned factorization for
    :func:`solve_backward`.
    """
    f = decompose(sys, ridge=ridge)
    y = substitute(f, sys.beta)
    f.y = y
    V, R1 = sys.var_shape
    return f, Solution(y.reshape(y.shape[:-1] + (V, R1)))


def solve_backward(f: Factorization, dl_dy: np.ndarray) -> GradientBundle:
    """Back-propagate ``dl/dy`` through ``y = M^{-1} beta``.

    ``dl_dy`` may be shaped like the solution, ``(..., T, V, R+1)``, or like
    the block vector, ``(..., T, B)``.

    Raises:
        MissingCache: ``f`` carries no forward solution.
    """
    if f.y is None:
        raise MissingCache("factorization holds no cached solution; run solve_forward first")
    g = np.asarray(dl_dy, dtype=np.float64)
    if g.shape[-3:] == (f.T,) + tuple(f.var_shape):
        g = g.reshape(g.shape[:-2] + (f.B,))
    d_beta = substitute(f, g)
    y = f.y
    d_m = -d_beta[..., :, None] * y[..., None, :]
    d_n = -d_beta[..., 1:, :, None] * y[..., :-1, None, :] - y[..., 1:, :, None] * d_beta[..., :-1, None, :]
    return GradientBundle(d_m_diag=d_m, d_n_sub=d_n, d_beta=d_beta)
