import json

import numpy as np
import pytest

from mapfluct import JumpLaw, LevyComponent, builtin, make_spec, stationary, validate
from mapfluct.errors import ModelValidationError, SchemaError
from mapfluct.model import BUILTIN_NAMES, dump_model_file, load_model_file, spec_from_json, spec_to_json

Q2 = [[-1.0, 1.0], [2.0, -2.0]]


def test_scalar_brownian_is_valid():
    m = validate(make_spec([[0.0]], [LevyComponent(0.0, 1.0)]))
    assert m.n_states == 1
    np.testing.assert_array_equal(m.pi, [1.0])


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_validate(name):
    m = validate(builtin(name))
    assert m.n_states == 2


def test_model_d_two_sided(model_d):
    assert not model_d.spectrally_negative


def test_model_c_is_drift_minus_subordinator(model_c):
    for comp in model_c.levy:
        assert comp.a == 2.0 and comp.sigma2 == 0.0
        assert all(law.is_negative for _, law in comp.jumps)


def test_positive_jump_flagged():
    levy = [LevyComponent(1.0, 2.0, ((1.0, JumpLaw.exponential(3.0, +1)),)), LevyComponent(-1.0, 2.0)]
    with pytest.raises(ModelValidationError) as ei:
        validate(make_spec(Q2, levy, spectrally_negative=True))
    assert "PositiveJumpInSpectrallyNegative" in ei.value.codes


def test_all_violations_reported():
    Q = [[-1.0, 0.5], [-1.0, 2.0]]
    levy = [LevyComponent(0.0, 0.0, ((1.0, JumpLaw.exponential(1.0)),)), LevyComponent(0.0, 1.0)]
    with pytest.raises(ModelValidationError) as ei:
        validate(make_spec(Q, levy))
    codes = set(ei.value.codes)
    assert {"RowSumViolation", "NegativeOffDiagonal", "DegenerateComponent"} <= codes


def test_reducible_rejected():
    Q = [[-1.0, 1.0], [0.0, 0.0]]
    with pytest.raises(ModelValidationError) as ei:
        validate(make_spec(Q, [LevyComponent(0.0, 1.0)] * 2))
    assert "Reducible" in ei.value.codes


def test_downward_subordinator_rejected():
    levy = [LevyComponent(-1.0, 0.0, ((1.0, JumpLaw.exponential(1.0)),))]
    with pytest.raises(ModelValidationError) as ei:
        validate(make_spec([[0.0]], levy))
    assert "DegenerateComponent" in ei.value.codes


def test_stationary_model_a(model_a):
    # pi proportional to (2, 1) solves pi Q = 0 by hand
    np.testing.assert_allclose(stationary(model_a).pi, [2 / 3, 1 / 3], atol=1e-14)


def test_stationary_scale_invariant():
    Q = np.array([[-2.0, 1.8, 0.2], [0.3, -1.0, 0.7], [2.5, 0.5, -3.0]])
    p1 = stationary(Q).pi
    p2 = stationary(7.5 * Q).pi
    np.testing.assert_allclose(p1, p2, atol=1e-13)
    assert np.max(np.abs(p1 @ Q)) < 1e-10


def test_json_round_trip(tmp_path):
    for name in BUILTIN_NAMES:
        spec = builtin(name)
        path = tmp_path / f"{name}.json"
        dump_model_file(spec, path)
        m = load_model_file(path)
        assert spec_to_json(m.spec) == spec_to_json(spec)


def test_unknown_field_path():
    obj = {"n_states": 1, "Q": [[0]], "states": [{"drift": 1, "sigma2": 1, "foo": 2}]}
    with pytest.raises(SchemaError) as ei:
        spec_from_json(obj)
    assert ei.value.path == "states[0].foo"


def test_bad_json_is_schema_or_decode_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises((SchemaError, json.JSONDecodeError)):
        load_model_file(p)
