import numpy as np
import pytest

from mechband.spec import Dimensions, OdeSpec, Weights


@pytest.fixture
def toy_spec() -> OdeSpec:
    """T=2, V=Q=1, R=0: both governing rows, the initial row and both
    smoothness rows are satisfied by the constant trajectory y = 1."""
    dims = Dimensions(T=2, V=1, Q=1, R=0)
    return OdeSpec(
        dims=dims,
        c=np.ones(dims.c_shape),
        d=np.ones(dims.d_shape),
        u=np.ones(dims.u_shape),
        s=np.array([0.01]),
        weights=Weights(),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            lines += [value for name, value in rep.user_properties if name == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
