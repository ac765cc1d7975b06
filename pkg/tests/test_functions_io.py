import json

import numpy as np
import pytest

from dbay.benchmark import generate_problem
from dbay.dcop import evaluate_objective
from dbay.exceptions import InvalidInstance
from dbay.functions import PiecewiseLinearTable, SensorTargetUtility, angle_difference, make_evaluator
from dbay.problem_io import instance_from_dict, instance_to_dict, load_problem, save_problem


def test_angle_difference_wraps():
    assert angle_difference(170.0, -170.0) == pytest.approx(-20.0)
    assert angle_difference(170.0, -170.0, wrap=False) == pytest.approx(340.0)
    assert angle_difference(0.0, 180.0) in (180.0, -180.0)


def test_sensor_function_takes_best_sensor():
    f = SensorTargetUtility([0.5, 0.0], [[0.0, 0.0], [1.0, 0.0]])
    assert f(0.0, 180.0) == 1.0
    assert f(18.0, 90.0) == pytest.approx(0.5)
    assert f(90.0, 90.0) == 0.0


def test_sensor_function_grid_matches_scalar(rng):
    f = SensorTargetUtility([0.3, 0.4], [[0.0, 0.0], [1.0, 0.5]])
    a, b = rng.uniform(-180, 180, (2, 40))
    g = f.grid(a[:, None], b[None, :])
    for i in range(40):
        for j in range(0, 40, 7):
            assert g[i, j] == pytest.approx(f(a[i], b[j]), abs=1e-14)


def test_table_interpolates_and_clamps():
    f = PiecewiseLinearTable([[0.0, 1.0], [0.0, 2.0]], [[0.0, 2.0], [1.0, 3.0]])
    assert f(0.5, 1.0) == pytest.approx(1.5)
    assert f(-5.0, 0.0) == 0.0
    assert f.slope_bounds() == [1.0, 1.0]
    xs = np.linspace(-0.2, 1.2, 9)
    assert np.allclose(f.grid(xs[:, None], xs[None, :] * 2), [[f(a, 2 * b) for b in xs] for a in xs])


def test_table_validation():
    with pytest.raises(ValueError):
        PiecewiseLinearTable([[0.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ValueError):
        make_evaluator("quadratic", {})


def test_roundtrip_preserves_objective(tmp_path, rng):
    inst = generate_problem(2).instance
    path = save_problem(inst, tmp_path / "p.json")
    back = load_problem(path)
    assert instance_to_dict(back) == instance_to_dict(inst)
    for _ in range(20):
        w = {i: float(v) for i, v in enumerate(rng.uniform(-180, 180, 6))}
        assert evaluate_objective(back, w) == evaluate_objective(inst, w)


def test_lipschitz_defaults_to_evaluator_bounds():
    doc = {
        "agents": [0],
        "domains": [{"lower": 0, "upper": 1}],
        "functions": [{"scope": [0], "kind": "piecewise-linear", "params": {"axes": [[0, 1]], "values": [0, 3]}}],
    }
    inst = instance_from_dict(json.loads(json.dumps(doc)))
    assert inst.agent_lipschitz(0) == 3.0


def test_malformed_problem_rejected():
    with pytest.raises(InvalidInstance):
        instance_from_dict({"agents": [0]})
