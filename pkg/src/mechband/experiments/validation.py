"""Standalone validation on linear ODEs with closed-form solutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ..assembly import assemble_blocks
from ..banded import solve_forward
from ..spec import Dimensions, OdeSpec, Weights

MSE_THRESHOLD = 1e-6
MSE_STRICT = 1e-8
# With zero extra orders the first-order Taylor constraints leave
# population growth at MSE ~1e-5; one extra order gives < 1e-8 everywhere.
EXTRA_ORDERS = 1

_t = sp.Symbol("t", real=True)


@dataclass(frozen=True)
class ClosedFormOde:
    """A scalar linear ODE ``sum_r coeffs[r] * y^(r) = rhs`` and its exact solution.

    ``initial`` holds ``y(0), y'(0), ...`` up to one below the ODE order.
    """

    name: str
    constants: dict[str, float]
    initial: tuple[float, ...]
    coeffs: tuple[float, ...]
    rhs: float
    expr: sp.Expr = field(repr=False)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def exact(self, t, max_order: int | None = None) -> np.ndarray:
        """Exact ``y, y', ...`` at times ``t``, shape ``(len(t), max_order + 1)``.

        ``max_order`` defaults to the ODE order.
        """
        top = self.order if max_order is None else max_order
        t = np.asarray(t, dtype=np.float64)
        cols = []
        for r in range(top + 1):
            fn = sp.lambdify(_t, sp.diff(self.expr, _t, r), "numpy")
            cols.append(np.broadcast_to(np.asarray(fn(t), dtype=np.float64), t.shape))
        return np.stack(cols, axis=-1)

    def residual(self, t: np.ndarray) -> np.ndarray:
        derivs = self.exact(t)
        return derivs @ np.asarray(self.coeffs) - self.rhs

    def spec_builder(
        self,
        steps: int = 1000,
        dt: float = 0.01,
        weights: Weights | None = None,
        extra_orders: int = EXTRA_ORDERS,
    ) -> OdeSpec:
        """Encode the ODE on ``steps`` uniformly spaced time points.

        The solver carries ``extra_orders`` derivative orders beyond the ODE
        order; their governing coefficients are zero. Each extra order adds
        one Taylor term to the smoothness constraints.
        """
        R = self.order + extra_orders
        dims = Dimensions(T=steps, V=1, Q=1, R=R, T_init=1, R_init=self.order - 1)
        coeffs = np.zeros(R + 1)
        coeffs[: self.order + 1] = self.coeffs
        c = np.broadcast_to(coeffs.reshape(1, 1, 1, R + 1), dims.c_shape)
        d = np.full(dims.d_shape, self.rhs)
        u = np.asarray(self.initial, dtype=np.float64).reshape(dims.u_shape)
        s = np.full(dims.s_shape, dt)
        return OdeSpec(dims=dims, c=c, d=d, u=u, s=s, weights=weights or Weights())


def closed_form_suite() -> list[ClosedFormOde]:
    """The six validation problems with their published constants."""
    exp, cos, sin, sqrt = sp.exp, sp.cos, sp.sin, sp.sqrt
    t = _t
    R = sp.Rational
    suite = []

    c0, c1, c2, u0 = R(7, 10), R(12, 10), R(231, 100), R(10)
    suite.append(ClosedFormOde(
        "rc_circuit", {"c0": 0.7, "c1": 1.2, "c2": 2.31}, (10.0,),
        coeffs=(float(1 / c1), float(c2)), rhs=float(c0),
        expr=c0 * c1 + (u0 - c0 * c1) * exp(-t / (c1 * c2)),
    ))

    c0, u0 = R(23, 100), R(478, 100)
    suite.append(ClosedFormOde(
        "population_growth", {"c0": 0.23}, (4.78,),
        coeffs=(float(c0), -1.0), rhs=0.0,
        expr=u0 * exp(c0 * t),
    ))

    c0, c1, u0 = R(32, 100), R(28, 100), R(14, 100)
    k = c0 + c1
    suite.append(ClosedFormOde(
        "language_death", {"c0": 0.32, "c1": 0.28}, (0.14,),
        coeffs=(float(k), 1.0), rhs=float(c0),
        expr=c0 / k - (c0 / k - u0) * exp(-k * t),
    ))

    c0, u0, u1 = R(21, 10), R(4, 10), R(-3, 100)
    suite.append(ClosedFormOde(
        "harmonic_oscillator", {"c0": 2.1}, (0.4, -0.03),
        coeffs=(float(c0), 0.0, 1.0), rhs=0.0,
        expr=u0 * cos(t * sqrt(c0)) + u1 / sqrt(c0) * sin(t * sqrt(c0)),
    ))

    c0, c1, u0, u1 = R(45, 10), R(43, 100), R(12, 100), R(43, 1000)
    root = sqrt(4 * c0 - c1**2)
    suite.append(ClosedFormOde(
        "damped_harmonic_oscillator", {"c0": 4.5, "c1": 0.43}, (0.12, 0.043),
        coeffs=(float(c0), float(c1), 1.0), rhs=0.0,
        expr=exp(-c1 / 2 * t) * (u0 * cos(t / 2 * root) + (c1 * u0 + 2 * u1) / root * sin(t / 2 * root)),
    ))

    u0, u1, u2 = R(0), R(-1), R(1)
    w = sqrt(3) / 2
    suite.append(ClosedFormOde(
        "third_order", {}, (0.0, -1.0, 1.0),
        coeffs=(0.0, 1.0, 1.0, 1.0), rhs=0.0,
        expr=u0 + u1 + u2 + exp(-t / 2) * (-(u1 + u2) * cos(w * t) + sqrt(3) / 3 * (u1 - u2) * sin(w * t)),
    ))
    return suite


@dataclass(frozen=True)
class ValidationRow:
    name: str
    order: int
    mse: tuple[float, ...]  # per derivative order 0..min(R, 2)

    @property
    def passed(self) -> bool:
        return self.mse[0] < MSE_THRESHOLD


def run_validation(
    steps: int = 1000,
    dt: float = 0.01,
    weights: Weights | None = None,
    extra_orders: int = EXTRA_ORDERS,
) -> list[ValidationRow]:
    """Solve every closed-form ODE and report MSE against the exact solution.

    MSE is reported for ``y``, ``y'`` and ``y''``.
    """
    report = []
    for ode in closed_form_suite():
        spec = ode.spec_builder(steps, dt, weights, extra_orders)
        _, sol = solve_forward(assemble_blocks(spec))
        times = np.concatenate([[0.0], np.cumsum(spec.s)])
        top = min(spec.dims.R, 2)
        exact = ode.exact(times, top)
        y = sol.y[:, 0, :]
        mse = tuple(float(np.mean((y[:, r] - exact[:, r]) ** 2)) for r in range(top + 1))
        report.append(ValidationRow(ode.name, ode.order, mse))
    return report
