import numpy as np
import pytest

from mechband.errors import NonFiniteInput, NonPositiveStep, ShapeMismatch, UnderDetermined
from mechband.spec import Dimensions, OdeSpec, Solution, Weights, make_spec, validate_spec


@pytest.mark.parametrize(
    "kwargs, m, n",
    [
        (dict(T=50, Q=3, V=3, R=1), 741, 300),
        (dict(T=1, Q=1, V=1, R=0), 2, 1),
        (dict(T=2, Q=1, V=1, R=0), 5, 2),
    ],
)
def test_constraint_counts(kwargs, m, n):
    dims = Dimensions(**kwargs)
    assert (dims.m, dims.n) == (m, n)


def test_block_size_and_shapes():
    dims = Dimensions(T=4, V=2, Q=3, R=2, T_init=2, R_init=1)
    assert dims.B == 6
    assert dims.c_shape == (4, 3, 2, 3)
    assert dims.d_shape == (4, 3)
    assert dims.u_shape == (2, 2, 2)
    assert dims.s_shape == (3,)
    assert dims.y_shape == (4, 2, 3)


def test_flat_index_is_row_major():
    dims = Dimensions(T=3, V=2, Q=1, R=1)
    order = [dims.flat_index(t, v, r) for t in range(3) for v in range(2) for r in range(2)]
    assert order == list(range(dims.n))


@pytest.mark.parametrize(
    "kwargs",
    [dict(T=0, V=1, Q=1, R=0), dict(T=2, V=1, Q=1, R=-1), dict(T=2, V=1, Q=1, R=0, T_init=3),
     dict(T=2, V=1, Q=1, R=0, R_init=1), dict(T=2.0, V=1, Q=1, R=0)],
)
def test_invalid_dimensions(kwargs):
    with pytest.raises(ShapeMismatch):
        Dimensions(**kwargs)


@pytest.mark.parametrize("bad", [dict(gov=0.0), dict(init=-1.0), dict(smooth=float("inf"))])
def test_weights_strictly_positive(bad):
    with pytest.raises(ValueError):
        Weights(**bad)


def test_validate_is_deterministic(toy_spec):
    assert validate_spec(toy_spec) == validate_spec(toy_spec) == toy_spec.dims


def test_validate_rejects_bad_values(toy_spec):
    with pytest.raises(NonPositiveStep):
        validate_spec(toy_spec.replace(s=np.array([0.0])))
    with pytest.raises(NonFiniteInput):
        validate_spec(toy_spec.replace(d=np.array([[1.0], [np.nan]])))
    with pytest.raises(ShapeMismatch):
        validate_spec(toy_spec.replace(d=np.ones((3, 1))))


def test_underdetermined():
    dims = Dimensions(T=1, V=2, Q=1, R=1)
    spec = OdeSpec(dims, np.ones(dims.c_shape), np.ones(dims.d_shape), np.ones(dims.u_shape), np.ones(0))
    with pytest.raises(UnderDetermined):
        validate_spec(spec)


def test_spec_arrays_are_read_only(toy_spec):
    with pytest.raises(ValueError):
        toy_spec.c[0, 0, 0, 0] = 2.0


def test_batch_shape_broadcasts(toy_spec):
    spec = toy_spec.replace(d=np.ones((5, 2, 1)))
    assert spec.batch_shape == (5,)
    assert validate_spec(spec) == toy_spec.dims


def test_make_spec_infers_dims():
    spec = make_spec(np.ones((3, 2, 2, 2)), np.ones((3, 2)), np.ones((1, 2, 1)), np.full(2, 0.1))
    assert spec.dims == Dimensions(T=3, V=2, Q=2, R=1, T_init=1, R_init=0)


def test_solution_views():
    y = np.arange(12.0).reshape(2, 3, 2)
    sol = Solution(y)
    np.testing.assert_array_equal(sol.trajectory, y[..., 0])
    np.testing.assert_array_equal(sol.flat(), np.arange(12.0))
