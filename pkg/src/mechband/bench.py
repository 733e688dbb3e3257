"""Runtime and retained-memory benchmarks of the banded and dense solvers.

Timing covers one forward solve plus one backward pass per repeat. Memory
is not sampled: it is the exact byte count of the buffers each solver
keeps between the forward and backward pass, computed from the layout.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .assembly import assemble_blocks
from .banded import solve_backward, solve_forward
from .dense import MAX_UNKNOWNS, assemble_dense, dense_backward, dense_normal_solve
from .errors import OracleTooLarge
from .sampling import random_spec
from .spec import Dimensions

logger = logging.getLogger(__name__)

SOLVERS = ("banded", "dense")
RESIDUAL_TOL = 1e-8
_FLOAT_BYTES = 8
# cap on the dense working set of one timed chunk and on the total
# retained bytes of a dense case; larger cases are reported as skipped
DENSE_CHUNK_BYTES = 256 * 2**20
DENSE_BUDGET_BYTES = 2 * 2**30
BANDED_CHUNK_BYTES = 256 * 2**20

CSV_COLUMNS = ("solver", "T", "batch", "V", "R", "Q", "median_seconds", "retained_bytes", "residual", "status")


@dataclass(frozen=True)
class BenchCase:
    solver: str
    T: int
    batch: int = 1
    V: int = 3
    R: int = 1
    Q: int = 3
    repeats: int = 7
    warmup: int = 2

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.repeats < 3:
            raise ValueError(f"repeats must be >= 3, got {self.repeats}")
        if self.warmup < 0 or self.batch < 1:
            raise ValueError("warmup must be >= 0 and batch >= 1")

    @property
    def dims(self) -> Dimensions:
        return Dimensions(T=self.T, V=self.V, Q=self.Q, R=self.R)


@dataclass(frozen=True)
class BenchResult:
    case: BenchCase
    median_seconds: float
    retained_bytes: int
    residual: float
    status: str = "ok"

    @property
    def skipped(self) -> bool:
        return self.status != "ok"

    def row(self) -> dict:
        out = {k: v for k, v in asdict(self.case).items() if k in CSV_COLUMNS}
        out.update(
            median_seconds=self.median_seconds,
            retained_bytes=self.retained_bytes,
            residual=self.residual,
            status=self.status,
        )
        return out


def banded_retained_bytes(dims: Dimensions, batch: int = 1) -> int:
    """``2T - 1`` blocks of ``B x B`` plus ``T`` segments of ``B``, per system."""
    T, B = dims.T, dims.B
    return ((2 * T - 1) * B * B + T * B) * _FLOAT_BYTES * batch


def dense_retained_bytes(dims: Dimensions, batch: int = 1) -> int:
    """``A``, row weights, ``b``, the ``n x n`` factor and ``y``, per system."""
    m, n = dims.m, dims.n
    return (m * n + 2 * m + n * n + n) * _FLOAT_BYTES * batch


def _chunks(batch: int, per_item: int, limit: int) -> list[tuple[int, int]]:
    size = max(1, min(batch, limit // max(per_item, 1)))
    return [(lo, min(lo + size, batch)) for lo in range(0, batch, size)]


def _relative_residual(Mx: np.ndarray, rhs: np.ndarray) -> float:
    axes = tuple(range(-Mx.ndim + 1, 0)) if Mx.ndim > 1 else None
    num = np.max(np.abs(Mx - rhs), axis=axes)
    den = np.maximum(np.max(np.abs(rhs), axis=axes), 1.0)
    return float(np.max(num / den))


def _bench_banded(case: BenchCase, rng: np.random.Generator) -> BenchResult:
    dims = case.dims
    per_item = 6 * banded_retained_bytes(dims)
    chunks = _chunks(case.batch, per_item, BANDED_CHUNK_BYTES)
    systems, grads = [], []
    for lo, hi in chunks:
        spec = random_spec(rng, dims, (hi - lo,))
        systems.append(assemble_blocks(spec))
        grads.append(rng.standard_normal((hi - lo,) + dims.y_shape))

    def run_once():
        for sys, g in zip(systems, grads):
            f, _ = solve_forward(sys)
            solve_backward(f, g)

    for _ in range(case.warmup):
        run_once()
    times = []
    for _ in range(case.repeats):
        start = time.perf_counter()
        run_once()
        times.append(time.perf_counter() - start)
    residual = max(_relative_residual(sys.matvec(solve_forward(sys)[0].y), sys.beta) for sys in systems)
    return BenchResult(case, float(np.median(times)), banded_retained_bytes(dims, case.batch), residual)


def _bench_dense(case: BenchCase, rng: np.random.Generator) -> BenchResult:
    dims = case.dims
    retained = dense_retained_bytes(dims, case.batch)
    if retained > DENSE_BUDGET_BYTES:
        logger.info("dense T=%d batch=%d needs %d bytes; skipped", case.T, case.batch, retained)
        return BenchResult(case, float("nan"), retained, float("nan"), status="skipped")
    chunks = _chunks(case.batch, 2 * dense_retained_bytes(dims), DENSE_CHUNK_BYTES)
    systems, grads = [], []
    for lo, hi in chunks:
        systems.append(assemble_dense(random_spec(rng, dims, (hi - lo,))))
        grads.append(rng.standard_normal((hi - lo, dims.n)))

    def run_once():
        out = []
        for sys, g in zip(systems, grads):
            y, factors, rhs = dense_normal_solve(sys.A, sys.W_diag, sys.b)
            dense_backward(factors, y, g)
            out.append((y, rhs))
        return out

    for _ in range(case.warmup):
        run_once()
    times = []
    for _ in range(case.repeats):
        start = time.perf_counter()
        sols = run_once()
        times.append(time.perf_counter() - start)
    residual = max(
        _relative_residual((sys.normal_matrix() @ y[..., None])[..., 0], rhs) for sys, (y, rhs) in zip(systems, sols)
    )
    return BenchResult(case, float(np.median(times)), retained, residual)


def run_bench(
    cases: Iterable[BenchCase],
    seed: int = 0,
    *,
    parallel: bool = False,
    skip_oversized: bool = False,
) -> list[BenchResult]:
    """Time every case on freshly generated random specs.

    Args:
        cases: benchmark cases, run in order.
        seed: seeds the one generator used for all cases.
        parallel: allow multi-threaded BLAS inside timed regions; the
            default pins them to one thread for stable measurements.
        skip_oversized: report dense cases above the unknown cap as
            skipped instead of raising.

    Raises:
        OracleTooLarge: a dense case exceeds the unknown cap and
            ``skip_oversized`` is false.
    """
    rng = np.random.default_rng(seed)
    results = []
    with threadpool_limits(limits=None if parallel else 1):
        for case in cases:
            if case.solver == "dense" and case.dims.n > MAX_UNKNOWNS:
                if not skip_oversized:
                    raise OracleTooLarge(f"dense case T={case.T} has n={case.dims.n} > {MAX_UNKNOWNS}")
                results.append(
                    BenchResult(case, float("nan"), dense_retained_bytes(case.dims, case.batch), float("nan"), "skipped")
                )
                continue
            res = _bench_banded(case, rng) if case.solver == "banded" else _bench_dense(case, rng)
            logger.info("%s T=%d batch=%d: %.4g s (%s)", case.solver, case.T, case.batch, res.median_seconds, res.status)
            results.append(res)
    return results


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def solver_slope(results: Sequence[BenchResult], solver: str, batch: int | None = None) -> float:
    """Runtime slope over the completed results of one solver (and batch)."""
    sel = [r for r in results if r.case.solver == solver and not r.skipped and (batch is None or r.case.batch == batch)]
    if len(sel) < 2:
        return float("nan")
    return loglog_slope([r.case.T for r in sel], [r.median_seconds for r in sel])


SCALING_BANDED_T = (64, 128, 256, 512, 1024)
SCALING_DENSE_T = (8, 16, 32, 64)
SCALING_BATCH = 32
LORENZ_BATCHES = (64, 512, 4096)
LORENZ_T = (5, 50, 500)


def preset_cases(name: str, repeats: int = 7, warmup: int = 2) -> list[BenchCase]:
    """Case grid of a named preset: ``lorenz`` or ``scaling``."""
    if name == "lorenz":
        return [
            BenchCase(solver, T, batch, repeats=repeats, warmup=warmup)
            for solver in SOLVERS
            for batch in LORENZ_BATCHES
            for T in LORENZ_T
        ]
    if name == "scaling":
        return [BenchCase("banded", T, SCALING_BATCH, repeats=repeats, warmup=warmup) for T in SCALING_BANDED_T] + [
            BenchCase("dense", T, SCALING_BATCH, repeats=repeats, warmup=warmup) for T in SCALING_DENSE_T
        ]
    raise ValueError(f"unknown preset {name!r}; expected 'lorenz' or 'scaling'")


def write_csv(results: Sequence[BenchResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for res in results:
            row = res.row()
            for key in ("median_seconds", "residual"):
                row[key] = f"{row[key]:.17g}"
            writer.writerow(row)
