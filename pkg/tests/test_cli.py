import csv
import json

import numpy as np
import pytest

from mechband.cli import main
from mechband.files import SpecFileError, load_spec, read_trajectory, save_spec, spec_from_dict
from mechband.sampling import random_spec
from mechband.spec import Dimensions

TOY = {
    "dims": {"T": 2, "V": 1, "Q": 1, "R": 0, "T_init": 1, "R_init": 0},
    "weights": {"gov": 1, "init": 1, "smooth": 1},
    "c": [[[[1]]], [[[1]]]],
    "d": [[1], [1]],
    "u": [[[1]]],
    "s": [0.01],
}


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy2.json"
    path.write_text(json.dumps(TOY))
    return path


def test_solve_toy(toy_file, tmp_path):
    out = tmp_path / "traj.csv"
    assert main(["solve", "--spec", str(toy_file), "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0].keys()) == ["t", "time", "var", "order", "value"]
    assert [float(r["value"]) for r in rows] == pytest.approx([1.0, 1.0], abs=1e-14)
    assert [float(r["time"]) for r in rows] == [0.0, 0.01]


def test_solve_to_stdout(toy_file, capsys):
    assert main(["solve", "--spec", str(toy_file)]) == 0
    assert capsys.readouterr().out.startswith("t,time,var,order,value")


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"dims": {"T": 2,}')
    assert main(["solve", "--spec", str(path), "--out", str(tmp_path / "o.csv")]) == 1
    assert "$" in capsys.readouterr().err


@pytest.mark.parametrize(
    "mutate, where",
    [
        (lambda d: d.update(extra=1), "$.extra"),
        (lambda d: d["dims"].update(W=1), "$.dims.W"),
        (lambda d: d["c"][1][0][0].__setitem__(0, "x"), "$.c[1][0][0][0]"),
        (lambda d: d["d"].append([1]), "$.d"),
        (lambda d: d.pop("s"), "$.s"),
        (lambda d: d["weights"].update(gov=True), "$.weights.gov"),
    ],
)
def test_spec_errors_name_json_path(mutate, where, tmp_path, capsys):
    doc = json.loads(json.dumps(TOY))
    mutate(doc)
    with pytest.raises(SpecFileError) as info:
        spec_from_dict(doc)
    assert info.value.path == where
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert main(["solve", "--spec", str(path)]) == 1
    assert where in capsys.readouterr().err


def test_solver_errors_exit_one(tmp_path, capsys):
    doc = json.loads(json.dumps(TOY))
    doc["s"] = [-0.1]
    path = tmp_path / "neg.json"
    path.write_text(json.dumps(doc))
    assert main(["solve", "--spec", str(path)]) == 1
    assert "NonPositiveStep" in capsys.readouterr().err
    doc = {"dims": {"T": 1, "V": 2, "Q": 1, "R": 0}, "c": [[[[1], [1]]]], "d": [[1]], "u": [[[1], [1]]], "s": []}
    doc["dims"]["R"] = 1
    doc["c"] = [[[[1, 0], [1, 0]]]]
    path.write_text(json.dumps(doc))
    assert main(["solve", "--spec", str(path)]) == 1
    assert "UnderDetermined" in capsys.readouterr().err


def test_roundtrip_and_grad_check(tmp_path, capsys):
    spec = random_spec(np.random.default_rng(3), Dimensions(T=5, V=2, Q=2, R=1))
    path = tmp_path / "rand.json"
    save_spec(spec, path)
    back = load_spec(path)
    np.testing.assert_array_equal(back.c, spec.c)
    out = tmp_path / "traj.csv"
    assert main(["solve", "--spec", str(path), "--out", str(out), "--grad-check"]) == 0
    text = capsys.readouterr().out
    line = [ln for ln in text.splitlines() if ln.startswith("grad-check max")][0]
    assert float(line.split()[-1]) <= 1e-5
    y = read_trajectory(out)
    assert y.shape == spec.dims.y_shape


def test_validate_command(tmp_path, capsys):
    out = tmp_path / "val.csv"
    assert main(["validate", "--out", str(out)]) == 0
    assert "6/6 passed" in capsys.readouterr().out
    with open(out) as fh:
        assert len(list(csv.DictReader(fh))) == 6


def test_validate_short_grid_does_not_crash():
    assert main(["validate", "--steps", "10"]) in (0, 2)


def test_validate_coarse_grid_exits_two(capsys):
    assert main(["validate", "--steps", "40", "--dt", "0.5"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_discover_zero_steps(tmp_path, capsys):
    assert main(["discover-lorenz", "--steps", "0", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "-2.6667" in text and "28.0000" in text
    with open(tmp_path / "coefficients.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["best"]) for r in rows] == [0.0] * 7
    assert (tmp_path / "loss.csv").read_text().startswith("step,loss,loss_ema")


def test_discover_short_run_writes_loss(tmp_path):
    assert main(["discover-lorenz", "--steps", "5", "--batch", "4", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "loss.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 5


def test_bench_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bench", "--preset", "gpu"])
    assert info.value.code == 1


def test_thread_env(monkeypatch, toy_file):
    monkeypatch.setenv("MECHBAND_THREADS", "1")
    assert main(["solve", "--spec", str(toy_file)]) == 0
    monkeypatch.setenv("MECHBAND_THREADS", "zero")
    with pytest.raises(SystemExit):
        main(["solve", "--spec", str(toy_file)])


def test_float_output_round_trips(tmp_path):
    spec = random_spec(np.random.default_rng(5), Dimensions(T=3, V=1, Q=1, R=1))
    path = tmp_path / "s.json"
    save_spec(spec, path)
    out = tmp_path / "t.csv"
    assert main(["solve", "--spec", str(path), "--out", str(out)]) == 0
    from mechband.gradients import solve_spec

    np.testing.assert_array_equal(read_trajectory(out), solve_spec(spec).y)
