"""Coefficient discovery for the Lorenz system.

Each optimization step samples windows of an RK4 reference trajectory,
encodes every window as a first-order linear ODE whose right-hand side is
the current coefficients applied to basis features of the observed states,
solves the batch, and descends the squared trajectory error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..assembly import assemble_blocks
from ..banded import solve_backward, solve_forward
from ..errors import Diverged, NonFiniteInput, NonFiniteState
from ..gradients import chain_to_spec
from ..spec import Dimensions, OdeSpec, Weights

logger = logging.getLogger(__name__)

TRUTH = np.array([-10.0, 10.0, 28.0, -1.0, -1.0, -8.0 / 3.0, 1.0])
COEFF_NAMES = ("a1", "a2", "a3", "a4", "a5", "a6", "a7")
# coefficient slices per equation: dx/dt, dy/dt, dz/dt
_SLICES = (slice(0, 2), slice(2, 5), slice(5, 7))


@dataclass(frozen=True)
class LorenzConfig:
    sigma: float = 10.0
    rho: float = 28.0
    beta_param: float = 8.0 / 3.0
    init: tuple[float, float, float] = (1.0, 1.0, 1.0)
    n_steps: int = 10_000
    dt: float = 0.01
    window: int = 50
    batch: int = 512
    opt_steps: int = 5000
    # a step of 1e-2 leaves a3, a4 far from the optimum after 5000 steps
    lr: float = 1e-1
    lr_decay_step: int = 3000
    lr_decay: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    init_coeffs: tuple[float, ...] = field(default=(0.0,) * 7)
    weights: Weights = field(default_factory=Weights)
    seed: int = 0

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.window > self.n_steps + 1:
            raise ValueError("window longer than the trajectory")
        if len(self.init_coeffs) != 7:
            raise ValueError("init_coeffs needs 7 entries")

    def lr_at(self, step: int) -> float:
        return self.lr * (self.lr_decay if step >= self.lr_decay_step else 1.0)


def lorenz_rhs(state: np.ndarray, sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> np.ndarray:
    x, y, z = state[..., 0], state[..., 1], state[..., 2]
    return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1)


def rk4_lorenz(cfg: LorenzConfig) -> np.ndarray:
    """Classical fixed-step RK4 trajectory, shape ``(n_steps + 1, 3)``."""
    h = cfg.dt

    def f(state):
        return lorenz_rhs(state, cfg.sigma, cfg.rho, cfg.beta_param)

    traj = np.empty((cfg.n_steps + 1, 3))
    traj[0] = cfg.init
    state = traj[0].copy()
    for k in range(cfg.n_steps):
        k1 = f(state)
        k2 = f(state + 0.5 * h * k1)
        k3 = f(state + 0.5 * h * k2)
        k4 = f(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise NonFiniteState(f"RK4 state became non-finite at step {k + 1}")
        traj[k + 1] = state
    return traj


def lorenz_basis(state: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Features ``[x, y]``, ``[x, y, xz]``, ``[z, xy]`` for the three equations."""
    state = np.asarray(state, dtype=np.float64)
    x, y, z = state[..., 0], state[..., 1], state[..., 2]
    return (
        np.stack([x, y], axis=-1),
        np.stack([x, y, x * z], axis=-1),
        np.stack([z, x * y], axis=-1),
    )


def basis_rhs(coeffs: np.ndarray, state: np.ndarray) -> np.ndarray:
    """Right-hand sides of the three equations, shape ``state.shape``."""
    feats = lorenz_basis(state)
    return np.stack([f @ coeffs[sl] for f, sl in zip(feats, _SLICES)], axis=-1)


def window_dims(window: int) -> Dimensions:
    return Dimensions(T=window, V=3, Q=3, R=1, T_init=1, R_init=0)


def window_spec(coeffs: np.ndarray, windows: np.ndarray, dt: float, weights: Weights | None = None) -> OdeSpec:
    """Encode observed windows ``(batch, T, 3)`` as first-order linear ODEs.

    Equation ``q`` reads ``y_q' = d[t, q]`` where ``d`` is the current
    coefficients applied to the observed state at ``t``.
    """
    T = windows.shape[-2]
    dims = window_dims(T)
    c = np.zeros(dims.c_shape)
    for q in range(3):
        c[:, q, q, 1] = 1.0
    return OdeSpec(
        dims=dims,
        c=c,
        d=basis_rhs(coeffs, windows),
        u=windows[..., :1, :, None],
        s=np.full(dims.s_shape, dt),
        weights=weights or Weights(),
    )


def loss_and_grad(coeffs: np.ndarray, windows: np.ndarray, dt: float, weights: Weights | None = None):
    """Batch-mean of ``sum_t |y_t - x_t|^2`` and its gradient w.r.t. ``coeffs``."""
    spec = window_spec(coeffs, windows, dt, weights)
    sys = assemble_blocks(spec)
    f, sol = solve_forward(sys)
    n_batch = windows.shape[0]
    resid = sol.y[..., 0] - windows
    loss = float(np.sum(resid**2)) / n_batch
    dl_dy = np.zeros(sol.y.shape)
    dl_dy[..., 0] = 2.0 * resid / n_batch
    grads = chain_to_spec(spec, sys, solve_backward(f, dl_dy))
    feats = lorenz_basis(windows)
    g = np.concatenate([np.einsum("btk,bt->k", feats[q], grads.dd[..., q]) for q in range(3)])
    return loss, g


def ema(values: np.ndarray, factor: float = 0.9) -> np.ndarray:
    out = np.empty(len(values))
    acc = None
    for i, v in enumerate(values):
        acc = v if acc is None else factor * acc + (1 - factor) * v
        out[i] = acc
    return out


@dataclass
class DiscoveryResult:
    coefficients: np.ndarray  # at the lowest-loss step
    final_coefficients: np.ndarray
    best_step: int
    loss: np.ndarray
    history: np.ndarray  # coefficients before each step, shape (steps + 1, 7)

    @property
    def loss_ema(self) -> np.ndarray:
        return ema(self.loss, 0.9)


def discover_lorenz(cfg: LorenzConfig = LorenzConfig(), trajectory: np.ndarray | None = None) -> DiscoveryResult:
    """Fit the seven Lorenz coefficients by Adam on batched window solves.

    Raises:
        Diverged: the loss became non-finite.
    """
    rng = np.random.default_rng(cfg.seed)
    traj = rk4_lorenz(cfg) if trajectory is None else trajectory
    n_starts = traj.shape[0] - cfg.window + 1
    offsets = np.arange(cfg.window)

    a = np.array(cfg.init_coeffs, dtype=np.float64)
    m = np.zeros(7)
    v = np.zeros(7)
    b1, b2 = cfg.adam_betas
    losses = np.empty(cfg.opt_steps)
    history = np.empty((cfg.opt_steps + 1, 7))
    history[0] = a
    for step in range(cfg.opt_steps):
        starts = rng.integers(0, n_starts, size=cfg.batch)
        windows = traj[starts[:, None] + offsets]
        if not np.all(np.isfinite(a)):
            raise Diverged(f"coefficients became non-finite at step {step}")
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                loss, g = loss_and_grad(a, windows, cfg.dt, cfg.weights)
            except NonFiniteInput as exc:
                raise Diverged(f"non-finite right-hand side at step {step}") from exc
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise Diverged(f"loss became non-finite at step {step}")
        losses[step] = loss
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** (step + 1))
        v_hat = v / (1 - b2 ** (step + 1))
        a = a - cfg.lr_at(step) * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        history[step + 1] = a
        if step % 500 == 0:
            logger.info("step %d loss %.6g coeffs %s", step, loss, np.array2string(a, precision=4))

    if cfg.opt_steps == 0:
        best = 0
        coeffs = a.copy()
    else:
        best = int(np.argmin(losses))
        # losses[k] is evaluated at history[k]
        coeffs = history[best].copy()
    return DiscoveryResult(
        coefficients=coeffs,
        final_coefficients=a.copy(),
        best_step=best,
        loss=losses,
        history=history,
    )
