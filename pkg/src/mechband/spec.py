"""Semi-symbolic description of a linear ODE problem.

A problem is the tuple ``(c, d, u, s)`` plus dimensions and importance
weights. Governing clauses read

    sum_{v, r} c[t, q, v, r] * y[t, v, r] = d[t, q]

for every time point ``t`` and equation ``q``; ``u`` pins the first
``T_init`` time points up to derivative order ``R_init``; ``s[t]`` is the
step between time points ``t`` and ``t + 1``.

Arrays may carry leading batch dimensions. Trailing dimensions must match
:class:`Dimensions` exactly; leading dimensions must broadcast together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteInput, NonPositiveStep, ShapeMismatch, UnderDetermined


@dataclass(frozen=True)
class Dimensions:
    T: int
    V: int
    Q: int
    R: int
    T_init: int = 1
    R_init: int = 0

    def __post_init__(self):
        for name in ("T", "V", "Q", "R", "T_init", "R_init"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ShapeMismatch(f"{name} must be an integer, got {value!r}")
        if self.T < 1 or self.V < 1 or self.Q < 1:
            raise ShapeMismatch(f"T, V, Q must be >= 1, got {self}")
        if self.R < 0:
            raise ShapeMismatch(f"R must be >= 0, got {self.R}")
        if not 1 <= self.T_init <= self.T:
            raise ShapeMismatch(f"T_init must lie in [1, T={self.T}], got {self.T_init}")
        if not 0 <= self.R_init <= self.R:
            raise ShapeMismatch(f"R_init must lie in [0, R={self.R}], got {self.R_init}")

    @property
    def B(self) -> int:
        """Block size: unknowns per time point."""
        return self.V * (self.R + 1)

    @property
    def n(self) -> int:
        return self.T * self.B

    @property
    def m(self) -> int:
        return (
            self.T * self.Q
            + self.T_init * self.V * (self.R_init + 1)
            + 2 * (self.T - 1) * self.V * (self.R + 1)
        )

    @property
    def c_shape(self) -> tuple[int, ...]:
        return (self.T, self.Q, self.V, self.R + 1)

    @property
    def d_shape(self) -> tuple[int, ...]:
        return (self.T, self.Q)

    @property
    def u_shape(self) -> tuple[int, ...]:
        return (self.T_init, self.V, self.R_init + 1)

    @property
    def s_shape(self) -> tuple[int, ...]:
        return (self.T - 1,)

    @property
    def y_shape(self) -> tuple[int, ...]:
        return (self.T, self.V, self.R + 1)

    def flat_index(self, t: int, v: int, r: int) -> int:
        """0-based position of ``y[t, v, r]`` in the flattened unknown vector."""
        return t * self.B + v * (self.R + 1) + r


@dataclass(frozen=True)
class Weights:
    """Importance weights; each enters the normal equations squared."""

    gov: float = 1.0
    init: float = 1.0
    smooth: float = 1.0

    def __post_init__(self):
        for name in ("gov", "init", "smooth"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise NonFiniteInput(f"weight {name} is not finite: {value}")
            if value <= 0:
                raise ShapeMismatch(f"weight {name} must be strictly positive, got {value}")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class OdeSpec:
    dims: Dimensions
    c: np.ndarray
    d: np.ndarray
    u: np.ndarray
    s: np.ndarray
    weights: Weights = field(default_factory=Weights)

    def __post_init__(self):
        for name in ("c", "d", "u", "s"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def batch_shape(self) -> tuple[int, ...]:
        dims = self.dims
        leads = [
            self.c.shape[: self.c.ndim - len(dims.c_shape)],
            self.d.shape[: self.d.ndim - len(dims.d_shape)],
            self.u.shape[: self.u.ndim - len(dims.u_shape)],
            self.s.shape[: self.s.ndim - len(dims.s_shape)],
        ]
        try:
            return np.broadcast_shapes(*leads)
        except ValueError as exc:
            raise ShapeMismatch(f"batch dimensions do not broadcast: {leads}") from exc

    def replace(self, **changes) -> OdeSpec:
        fields = dict(dims=self.dims, c=self.c, d=self.d, u=self.u, s=self.s, weights=self.weights)
        fields.update(changes)
        return OdeSpec(**fields)


@dataclass(frozen=True)
class Solution:
    """Solved trajectory ``y[..., t, v, r]`` (r-th derivative of variable v)."""

    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(self.y))

    @property
    def trajectory(self) -> np.ndarray:
        """Zeroth-order channel, shape ``(..., T, V)``."""
        return self.y[..., 0]

    def flat(self) -> np.ndarray:
        *lead, T, V, R1 = self.y.shape
        return self.y.reshape(*lead, T * V * R1)


def _check_trailing(name: str, arr: np.ndarray, expected: tuple[int, ...]) -> None:
    k = len(expected)
    if arr.ndim < k or arr.shape[arr.ndim - k:] != expected:
        raise ShapeMismatch(f"{name} has shape {arr.shape}, expected (..., {', '.join(map(str, expected))})")


def validate_spec(spec: OdeSpec) -> Dimensions:
    """Check shapes and values of ``spec`` and return its dimensions.

    Raises:
        ShapeMismatch: a tensor does not match ``spec.dims``.
        NonFiniteInput: some entry is NaN or infinite.
        NonPositiveStep: some step size is ``<= 0``.
        UnderDetermined: fewer constraints than unknowns.
    """
    dims = spec.dims
    _check_trailing("c", spec.c, dims.c_shape)
    _check_trailing("d", spec.d, dims.d_shape)
    _check_trailing("u", spec.u, dims.u_shape)
    _check_trailing("s", spec.s, dims.s_shape)
    spec.batch_shape  # raises on incompatible leading dims
    for name in ("c", "d", "u", "s"):
        if not np.all(np.isfinite(getattr(spec, name))):
            raise NonFiniteInput(f"{name} contains non-finite entries")
    if spec.s.size and np.any(spec.s <= 0):
        bad = np.argwhere(spec.s <= 0)[0]
        raise NonPositiveStep(f"step size s{list(bad)} = {spec.s[tuple(bad)]} is not positive")
    if dims.m < dims.n:
        raise UnderDetermined(f"m={dims.m} constraints < n={dims.n} unknowns")
    return dims


def make_spec(c, d, u, s, weights: Weights | None = None, *, batch_ndim: int = 0) -> OdeSpec:
    """Build and validate a spec, inferring dimensions from array shapes.

    ``batch_ndim`` leading axes of ``c`` are treated as batch dimensions.
    """
    c = np.asarray(c, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if c.ndim != 4 + batch_ndim:
        raise ShapeMismatch(f"c must have {4 + batch_ndim} axes, got shape {c.shape}")
    T, Q, V, R1 = c.shape[batch_ndim:]
    if u.ndim < 3:
        raise ShapeMismatch(f"u must have at least 3 axes, got shape {u.shape}")
    T_init, _, R_init1 = u.shape[-3:]
    dims = Dimensions(T=T, V=V, Q=Q, R=R1 - 1, T_init=T_init, R_init=R_init1 - 1)
    spec = OdeSpec(dims=dims, c=c, d=d, u=u, s=s, weights=weights or Weights())
    validate_spec(spec)
    return spec
