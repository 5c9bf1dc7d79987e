import json

import numpy as np
import pytest

from mapfluct.cli import main
from mapfluct.model import builtin, dump_model_file


@pytest.fixture
def model_a_file(tmp_path):
    p = tmp_path / "model_a.json"
    dump_model_file(builtin("MODEL-A"), p)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cumulant_report(capsys, model_a_file):
    code, out, _ = run(capsys, "cumulant", "--model", model_a_file, "--alpha", "0", "1", "--q", "1")
    assert code == 0
    rep = json.loads(out)
    rows = rep["results"]["cumulant"]
    assert rows[0]["alpha"] == 0 and abs(rows[0]["kappa"]) < 1e-12
    assert rows[1]["F"] == [[1.0, 1.0], [2.0, -2.0]]
    assert abs(rep["results"]["Phi"][0]["Phi"] - 0.772866) < 1e-6


def test_unknown_field_exit_2(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n_states": 1, "Q": [[0]], "states": [{"drift": 1, "sigma2": 1, "foo": 2}]}))
    code, _, err = run(capsys, "cumulant", "--model", str(p))
    assert code == 2 and "states[0].foo" in err


def test_invalid_model_exit_2(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n_states": 2, "Q": [[-1, 1], [0, 0]],
                             "states": [{"drift": 1, "sigma2": 1}, {"drift": 1, "sigma2": 1}]}))
    code, _, err = run(capsys, "cumulant", "--model", str(p))
    assert code == 2 and "Reducible" in err


def test_alpha_outside_domain_names_state(capsys):
    code, _, err = run(capsys, "cumulant", "--model", "MODEL-C", "--alpha", "-2")
    assert code == 3 and "state 0" in err


def test_whfactor_resolvent_csv(capsys):
    code, out, _ = run(capsys, "whfactor", "--model", "MODEL-A", "--q", "1", "--csv")
    assert code == 0
    rows = [line.split(",") for line in out.strip().splitlines()[1:]]
    vals = [[float(x) for x in r[1:]] for r in rows]
    np.testing.assert_allclose(vals, [[0.75, 0.25], [0.5, 0.5]], atol=1e-12)


def test_whfactor_scalar(capsys, tmp_path):
    p = tmp_path / "bm.json"
    p.write_text(json.dumps({"n_states": 1, "Q": [[0]], "states": [{"drift": 0, "sigma2": 1}]}))
    code, out, _ = run(capsys, "whfactor", "--model", str(p), "--q", "0.5", "--alpha", "1", "--xi", "0")
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["results"]["matrix"], [[0.5]], atol=1e-12)


def test_whfactor_inf_domain_exit_3(capsys):
    code, _, err = run(capsys, "whfactor", "--model", "MODEL-A", "--q", "1", "--side", "inf", "--alpha", "0.9")
    assert code == 3 and "DomainViolation" in err


def test_bad_arguments_exit_2(capsys):
    assert run(capsys, "whfactor", "--model", "MODEL-A")[0] == 2
    assert run(capsys, "nonsense")[0] == 2


def test_verify_structure(capsys, model_a_file):
    code, out, _ = run(capsys, "verify", "--suite", "structure", "--model", model_a_file)
    assert code == 0
    assert out.count("[PASS]") >= 15 and "[FAIL]" not in out


def test_verify_wh_small_json(capsys, tmp_path):
    dump = tmp_path / "samples.csv"
    code, out, _ = run(capsys, "verify", "--suite", "wh", "--paths", "20000", "--seed", "7", "--json",
                       "--dump-samples", str(dump))
    rep = json.loads(out)
    assert rep["seed"] == 7 and rep["checks"]
    assert code == (0 if rep["passed"] else 1)
    assert dump.read_text().startswith("rep,start_state")


def test_verify_seed_from_env(capsys, monkeypatch):
    monkeypatch.setenv("MAPFLUCT_SEED", "11")
    code, out, _ = run(capsys, "verify", "--suite", "wh", "--paths", "5000", "--json")
    assert json.loads(out)["seed"] == 11


def test_verify_reproducible(capsys):
    a = run(capsys, "verify", "--suite", "wh", "--paths", "5000", "--seed", "3", "--csv")
    b = run(capsys, "verify", "--suite", "wh", "--paths", "5000", "--seed", "3", "--csv", "--threads", "3")
    assert a[0] == b[0] and a[1] == b[1]


def test_verify_ballot_table(capsys, tmp_path):
    p = tmp_path / "model_c.json"
    dump_model_file(builtin("MODEL-C"), p)
    code, out, _ = run(capsys, "verify", "--suite", "ballot", "--model", str(p), "--paths", "20000")
    assert code in (0, 1)
    assert out.count("ballot cell") == 3
