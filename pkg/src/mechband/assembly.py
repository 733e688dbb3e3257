"""Direct assembly of the block-tridiagonal normal equations.

The constraint matrix is never formed. Each diagonal block collects the
governing, initial-value and smoothness contributions of one time point;
each subdiagonal block couples consecutive time points through the
smoothness rows only.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .spec import OdeSpec, validate_spec


@dataclass(frozen=True)
class BlockSystem:
    """Nonzero blocks of a symmetric block-tridiagonal system.

    Attributes:
        m_diag: ``(..., T, B, B)`` diagonal blocks.
        n_sub: ``(..., T-1, B, B)`` subdiagonal blocks; block ``t`` sits at
            block-row ``t + 1``, block-column ``t``.
        beta: ``(..., T, B)`` right-hand side segments.
        var_shape: ``(V, R + 1)`` used to reshape a block segment into
            variables and derivative orders.
    """

    m_diag: np.ndarray
    n_sub: np.ndarray
    beta: np.ndarray
    var_shape: tuple[int, int] | None = None

    def __post_init__(self):
        B = self.m_diag.shape[-1]
        if self.var_shape is None:
            object.__setattr__(self, "var_shape", (1, B))
        V, R1 = self.var_shape
        T = self.m_diag.shape[-3]
        if V * R1 != B or self.m_diag.shape[-2] != B:
            raise ValueError(f"inconsistent block shape {self.m_diag.shape} for var_shape {self.var_shape}")
        if self.n_sub.shape[-3:] != (T - 1, B, B) or self.beta.shape[-2:] != (T, B):
            raise ValueError(
                f"block shapes disagree: m_diag {self.m_diag.shape}, n_sub {self.n_sub.shape}, beta {self.beta.shape}"
            )

    @property
    def T(self) -> int:
        return self.m_diag.shape[-3]

    @property
    def B(self) -> int:
        return self.m_diag.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.m_diag.shape[:-3]

    def to_dense(self) -> np.ndarray:
        """Materialize the full ``(..., T*B, T*B)`` symmetric matrix."""
        T, B = self.T, self.B
        full = np.zeros(self.batch_shape + (T * B, T * B))
        for t in range(T):
            full[..., t * B:(t + 1) * B, t * B:(t + 1) * B] = self.m_diag[..., t, :, :]
        for t in range(T - 1):
            blk = self.n_sub[..., t, :, :]
            full[..., (t + 1) * B:(t + 2) * B, t * B:(t + 1) * B] = blk
            full[..., t * B:(t + 1) * B, (t + 1) * B:(t + 2) * B] = np.swapaxes(blk, -1, -2)
        return full

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Block product ``M @ x`` for ``x`` of shape ``(..., T, B)``."""
        x = np.asarray(x, dtype=np.float64)[..., None]
        out = self.m_diag @ x
        if self.T > 1:
            out[..., 1:, :, :] += self.n_sub @ x[..., :-1, :, :]
            out[..., :-1, :, :] += np.swapaxes(self.n_sub, -1, -2) @ x[..., 1:, :, :]
        return out[..., 0]

    def with_beta(self, beta: np.ndarray) -> BlockSystem:
        return BlockSystem(self.m_diag, self.n_sub, beta, self.var_shape)


def build_expansion_table(R: int) -> np.ndarray:
    """Taylor weights ``F[i, j] = 1 / (j - i)!`` for ``j >= i``, zero below."""
    F = np.zeros((R + 1, R + 1))
    for i in range(R + 1):
        for j in range(i, R + 1):
            F[i, j] = 1.0 / factorial(j - i)
    return F


@dataclass(frozen=True)
class StepScalings:
    """Diagonals of the per-interval scaling matrices, shape ``(..., T-1, R+1)``."""

    plus: np.ndarray
    minus: np.ndarray
    sq: np.ndarray


def step_scalings(s: np.ndarray, R: int) -> StepScalings:
    powers = np.arange(R + 1)
    s = np.asarray(s, dtype=np.float64)[..., None]
    return StepScalings(plus=s**powers, minus=(-s) ** powers, sq=s ** (2 * powers))


def _smoothness_blocks(s: np.ndarray, R: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-interval pieces of the smoothness normal matrix.

    Returns ``(head, tail, cross)`` each of shape ``(..., T-1, R+1, R+1)``:
    ``head`` adds to the block of the interval's left time point, ``tail`` to
    its right time point, ``cross`` is the subdiagonal coupling.
    """
    F = build_expansion_table(R)
    FtF = F.T @ F
    sc = step_scalings(s, R)
    # diag(a) @ K @ diag(b) == K * a[:, None] * b[None, :]
    outer_p = sc.plus[..., :, None] * sc.plus[..., None, :]
    outer_m = sc.minus[..., :, None] * sc.minus[..., None, :]
    sq = sc.sq[..., :, None] * np.eye(R + 1)
    head = FtF * outer_p + sq
    tail = FtF * outer_m + sq
    cross = -(F * outer_p) - (F.T * outer_m)
    return head, tail, cross


def _repeat_diag(block: np.ndarray, V: int) -> np.ndarray:
    """``Diag(block, ..., block)`` with ``V`` copies on the diagonal."""
    *lead, k, _ = block.shape
    out = np.zeros((*lead, V * k, V * k))
    for v in range(V):
        out[..., v * k:(v + 1) * k, v * k:(v + 1) * k] = block
    return out


def assemble_blocks(spec: OdeSpec) -> BlockSystem:
    """Compute ``M`` and ``beta`` block by block from ``spec``.

    Batched specs produce batched blocks with the broadcast batch shape.
    """
    dims = validate_spec(spec)
    T, V, R, B = dims.T, dims.V, dims.R, dims.B
    w = spec.weights
    batch = spec.batch_shape

    C = spec.c.reshape(spec.c.shape[:-2] + (B,))
    Ct = np.swapaxes(C, -1, -2)
    m_diag = np.array(np.broadcast_to(w.gov**2 * (Ct @ C), batch + (T, B, B)))
    beta = np.array(np.broadcast_to(w.gov**2 * (Ct @ spec.d[..., None])[..., 0], batch + (T, B)))

    # initial-value mask and targets
    init_mask = np.zeros((V, R + 1))
    init_mask[:, : dims.R_init + 1] = 1.0
    init_mask = init_mask.reshape(B)
    u_full = np.zeros(batch + (dims.T_init, V, R + 1))
    u_full[..., : dims.R_init + 1] = spec.u
    idx = np.arange(B)
    m_diag[..., : dims.T_init, idx, idx] += w.init**2 * init_mask
    beta[..., : dims.T_init, :] += w.init**2 * u_full.reshape(batch + (dims.T_init, B))

    n_sub = np.zeros(batch + (T - 1, B, B))
    if T > 1:
        # built at the step sizes' own batch shape, broadcast on accumulation
        head, tail, cross = _smoothness_blocks(spec.s, R)
        star = np.zeros(spec.s.shape[:-1] + (T, R + 1, R + 1))
        star[..., :-1, :, :] += head
        star[..., 1:, :, :] += tail
        m_diag += w.smooth**2 * _repeat_diag(star, V)
        n_sub[...] = w.smooth**2 * _repeat_diag(cross, V)

    m_diag = 0.5 * (m_diag + np.swapaxes(m_diag, -1, -2))
    return BlockSystem(m_diag=m_diag, n_sub=n_sub, beta=beta, var_shape=(V, R + 1))
