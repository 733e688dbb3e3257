"""JSON spec files and CSV trajectory files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import MechbandError
from .spec import Dimensions, OdeSpec, Solution, Weights, validate_spec

SPEC_KEYS = ("dims", "weights", "c", "d", "u", "s")
DIM_KEYS = ("T", "V", "Q", "R", "T_init", "R_init")
WEIGHT_KEYS = ("gov", "init", "smooth")
TRAJECTORY_HEADER = ("t", "time", "var", "order", "value")


class SpecFileError(MechbandError, ValueError):
    """A spec document is malformed; ``path`` locates the offending node."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def fmt(x: float) -> str:
    """Round-trip float formatting (17 significant digits)."""
    return f"{float(x):.17g}"


def _check_keys(obj: Any, path: str, allowed: tuple[str, ...], required: tuple[str, ...]) -> None:
    if not isinstance(obj, dict):
        raise SpecFileError(path, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            raise SpecFileError(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in obj:
            raise SpecFileError(f"{path}.{key}", "missing required key")


def _tensor(value: Any, shape: tuple[int, ...], path: str) -> np.ndarray:
    """Check a nested list against ``shape`` node by node, then convert."""

    def walk(node, depth, where):
        if depth == len(shape):
            if isinstance(node, bool) or not isinstance(node, (int, float)):
                raise SpecFileError(where, f"expected a number, got {json.dumps(node)[:40]}")
            return
        if not isinstance(node, list):
            raise SpecFileError(where, f"expected an array of length {shape[depth]}")
        if len(node) != shape[depth]:
            raise SpecFileError(where, f"expected length {shape[depth]}, got {len(node)}")
        for i, child in enumerate(node):
            walk(child, depth + 1, f"{where}[{i}]")

    walk(value, 0, path)
    return np.array(value, dtype=np.float64).reshape(shape)


def spec_from_dict(doc: Any) -> OdeSpec:
    """Build a validated :class:`OdeSpec` from a parsed JSON document.

    ``weights`` may be omitted (all ones); so may ``dims.T_init`` and
    ``dims.R_init`` (1 and 0).
    """
    _check_keys(doc, "$", SPEC_KEYS, ("dims", "c", "d", "u", "s"))
    _check_keys(doc["dims"], "$.dims", DIM_KEYS, ("T", "V", "Q", "R"))
    raw_dims = doc["dims"]
    for key, val in raw_dims.items():
        if isinstance(val, bool) or not isinstance(val, int):
            raise SpecFileError(f"$.dims.{key}", f"expected an integer, got {json.dumps(val)}")
    try:
        dims = Dimensions(**raw_dims)
    except MechbandError as exc:
        raise SpecFileError("$.dims", str(exc)) from exc
    weights = Weights()
    if "weights" in doc:
        _check_keys(doc["weights"], "$.weights", WEIGHT_KEYS, ())
        for key, val in doc["weights"].items():
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise SpecFileError(f"$.weights.{key}", f"expected a number, got {json.dumps(val)}")
        try:
            weights = Weights(**doc["weights"])
        except ValueError as exc:
            raise SpecFileError("$.weights", str(exc)) from exc
    spec = OdeSpec(
        dims=dims,
        c=_tensor(doc["c"], dims.c_shape, "$.c"),
        d=_tensor(doc["d"], dims.d_shape, "$.d"),
        u=_tensor(doc["u"], dims.u_shape, "$.u"),
        s=_tensor(doc["s"], dims.s_shape, "$.s"),
        weights=weights,
    )
    validate_spec(spec)
    return spec


def load_spec(path: str | Path) -> OdeSpec:
    """Read and validate a JSON spec file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFileError("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return spec_from_dict(doc)


def spec_to_dict(spec: OdeSpec) -> dict:
    """Inverse of :func:`spec_from_dict` for unbatched specs."""
    d = spec.dims
    w = spec.weights
    return {
        "dims": {k: getattr(d, k) for k in DIM_KEYS},
        "weights": {"gov": w.gov, "init": w.init, "smooth": w.smooth},
        "c": spec.c.tolist(),
        "d": spec.d.tolist(),
        "u": spec.u.tolist(),
        "s": spec.s.tolist(),
    }


def save_spec(spec: OdeSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=1))


def write_trajectory(sol: Solution, s: np.ndarray, path_or_file) -> int:
    """Write one row per ``(t, v, r)``; returns the row count."""
    y = np.asarray(sol.y)
    T, V, R1 = y.shape
    times = np.concatenate([[0.0], np.cumsum(s)])
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for t in range(T):
            for v in range(V):
                for r in range(R1):
                    writer.writerow([t, fmt(times[t]), v, r, fmt(y[t, v, r])])
    finally:
        if own:
            fh.close()
    return T * V * R1


def read_trajectory(path: str | Path) -> np.ndarray:
    """Load a trajectory CSV back into a ``(T, V, R+1)`` array."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    T = 1 + max(int(r["t"]) for r in rows)
    V = 1 + max(int(r["var"]) for r in rows)
    R1 = 1 + max(int(r["order"]) for r in rows)
    y = np.full((T, V, R1), np.nan)
    for r in rows:
        y[int(r["t"]), int(r["var"]), int(r["order"])] = float(r["value"])
    return y
