import json
import math

import numpy as np
import pytest

from aubry.cli import RunConfig, main, run
from aubry.errors import ConfigError

GOLDEN_Q = {"quotients": [1] * 40}


def write(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return str(p)


def read_csv(path):
    lines = open(path).read().splitlines()
    assert lines[0].startswith("# config_sha256=")
    header = lines[1].split(",")
    rows = [l.split(",") for l in lines[2:]]
    return header, rows


def column(path, name):
    header, rows = read_csv(path)
    i = header.index(name)
    return np.array([float(r[i]) for r in rows])


def invoke(tmp_path, command, doc, *flags, out="out"):
    cfg = write(tmp_path, doc, f"{command}-{out}.json")
    return run([command, "--config", cfg, "--out", str(tmp_path / out), *flags])


def test_free_cocycle(tmp_path):
    doc = {"model": {"alpha": GOLDEN_Q, "potential": []},
           "task": {"energies": {"min": -1.95, "max": 1.95, "count": 40}, "iterates": 100000}}
    code, rep = invoke(tmp_path, "cocycle", doc)
    assert code == 0
    E = column(tmp_path / "out" / "cocycle.csv", "E")
    rho = column(tmp_path / "out" / "cocycle.csv", "rotation")
    assert np.abs(rho - np.arccos(E / 2) / (2 * np.pi)).max() < 1e-3
    assert set(rep.artifacts) == {"cocycle.csv", "report.json"}


def test_amo_lyapunov_on_spectrum(tmp_path):
    # energies on the spectrum from a direct diagonalization
    from aubry.model import Frequency, build_direct_window, TrigPotential
    from aubry.linalg import eigh_tridiagonal
    w = build_direct_window(TrigPotential.cosine(2.0), Frequency.golden(), 0.1, 400)
    ev = eigh_tridiagonal(w.tridiag()).values[::40]
    doc = {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 2.0}},
           "task": {"energies": [float(e) for e in ev]}}
    code, rep = invoke(tmp_path, "cocycle", doc)
    assert code == 0
    assert rep.results["min_lyapunov"] >= math.log(2) - 2e-2


def test_rational_alpha(tmp_path, capsys):
    doc = {"model": {"alpha": 0.5, "potential": []}, "task": {}}
    code, rep = invoke(tmp_path, "cocycle", doc)
    assert code == 3 and rep is None
    assert "RationalInput" in capsys.readouterr().err


def test_empty_energy_grid(tmp_path, capsys):
    doc = {"model": {"alpha": GOLDEN_Q}, "task": {"energies": []}}
    assert invoke(tmp_path, "ids", doc)[0] == 3
    assert "empty energy grid" in capsys.readouterr().err


def test_line_numbers():
    text = '{\n  "model": {"alpha": 0.618},\n  "task": {\n    "iterates": 10\n  }\n}'
    with pytest.raises(ConfigError) as e:
        RunConfig.from_text(text, "cocycle")
    assert e.value.line == 4 and "line 4" in str(e.value)
    with pytest.raises(ConfigError) as e:
        RunConfig.from_text('{\n "task": {\n  "bogus": 1}}', "cocycle")
    assert e.value.line == 3
    with pytest.raises(ConfigError) as e:
        RunConfig.from_text('{\n "model": {,}}', "cocycle")
    assert e.value.line == 2


def test_config_round_trip():
    text = json.dumps({"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 1.0}}, "task": {"N": 500}})
    a = RunConfig.from_text(text, "ids")
    b = RunConfig.from_text(json.dumps(a.document), "ids")
    assert a.document == b.document and a.sha256 == b.sha256


def test_self_dual_ids(tmp_path):
    doc = {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 1.0}, "coupling": 1.0},
           "task": {"kind": "both", "energies": {"count": 200}, "N": 2000, "phases": 16,
                    "box": 2000, "thetas": 16}}
    code, rep = invoke(tmp_path, "ids", doc)
    assert code == 0
    assert rep.results["ids_distance"] < 1e-2


def test_gap_labels(tmp_path):
    doc = {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 2.0}},
           "task": {"energies": {"count": 2001}, "N": 2000, "phases": 16}}
    code, rep = invoke(tmp_path, "ids", doc)
    assert code == 0
    widest = max(rep.results["gaps"], key=lambda g: g["hi"] - g["lo"])
    assert abs(widest["label"][0]) == 1


def test_duality_and_echo(tmp_path):
    doc = {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 0.4}},
           "task": {"theta": 0.13, "box": 400, "ids_N": 2000, "ids_energies": 2001}}
    code, rep = invoke(tmp_path, "duality", doc)
    assert code == 0 and not rep.violations
    assert rep.results["min_completeness_mass"] >= 0.999
    # re-run from the echoed config
    echo = json.load(open(tmp_path / "out" / "report.json"))["config"]
    code2, rep2 = invoke(tmp_path, "duality", echo, out="echo")
    assert code2 == 0 and rep2.config_sha256 == rep.config_sha256
    for name in ("labels.csv", "completeness.csv"):
        assert (tmp_path / "out" / name).read_bytes() == (tmp_path / "echo" / name).read_bytes()


def test_duality_degenerate(tmp_path, capsys):
    from aubry.model import GOLDEN
    doc = {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 0.4}},
           "task": {"theta": GOLDEN / 2 + 5e-10, "box": 200, "ids_N": 500, "ids_energies": 201}}
    assert invoke(tmp_path, "duality", doc)[0] == 4
    assert "DegenerateConjugation" in capsys.readouterr().err


def test_duality_free(tmp_path):
    doc = {"model": {"alpha": GOLDEN_Q, "potential": []},
           "task": {"theta": 0.13, "box": 200, "ids_N": 1000, "ids_energies": 1001}}
    code, rep = invoke(tmp_path, "duality", doc)
    assert code == 0
    assert all(m == 1.0 for m in rep.results["completeness_mass"].values())


def test_strict_threshold(tmp_path):
    doc = {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 0.4}},
           "task": {"theta": 0.13, "box": 200, "ids_N": 500, "ids_energies": 501},
           "thresholds": {"bloch_residual": 1e-30}}
    assert invoke(tmp_path, "duality", doc, "--strict")[0] == 2
    code, rep = invoke(tmp_path, "duality", doc, out="lax")
    assert code == 0 and rep.violations[0]["name"] == "bloch_residual"


def test_multidim(tmp_path):
    doc = {"model": {"alpha": [0.6180339887498949, 0.4142135623730951], "potential": {"cosine": 1.0},
                     "coupling": 8.0},
           "task": {"box": [20, 20]}}
    code, rep = invoke(tmp_path, "multidim", doc)
    assert code == 0
    assert rep.results["median_ipr"] >= 0.5
    assert len(read_csv(tmp_path / "out" / "localization.csv")[1]) == 400
    doc["model"]["coupling"] = 0.0
    assert invoke(tmp_path, "multidim", doc, out="zero")[0] == 3
    doc["model"]["coupling"] = 8.0
    doc["task"]["box"] = [50, 50]
    assert invoke(tmp_path, "multidim", doc, out="big")[0] == 3


def test_model_info_and_cf(tmp_path):
    doc = {"model": {"alpha": GOLDEN_Q, "potential": [[1, 0.5, 0.0], [-1, 0.5, 0.0]]}}
    code, rep = invoke(tmp_path, "model-info", doc)
    assert code == 0 and rep.results["real_even"] and rep.results["degree"] == 1
    code, rep = invoke(tmp_path, "cf", {"model": {"alpha": GOLDEN_Q}}, out="cf")
    assert code == 0
    q = column(tmp_path / "cf" / "cf.csv", "q_n")
    assert list(q[:6]) == [1, 2, 3, 5, 8, 13]


@pytest.mark.parametrize("command,doc", [
    ("cocycle", {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 1.0}}, "task": {"iterates": 20000}}),
    ("ids", {"model": {"alpha": GOLDEN_Q, "potential": {"cosine": 1.0}},
             "task": {"kind": "both", "N": 300, "phases": 8, "box": 300, "thetas": 8}}),
])
def test_workers_bit_identical(tmp_path, command, doc):
    a = invoke(tmp_path, command, doc, "--workers", "1", out="w1")
    b = invoke(tmp_path, command, doc, "--workers", "4", out="w4")
    assert a[0] == b[0] == 0
    for name in a[1].artifacts:
        if name != "report.json":
            assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w4" / name).read_bytes()


def test_main_exit_code(tmp_path):
    cfg = write(tmp_path, {"model": {"alpha": GOLDEN_Q}})
    assert main(["cf", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert main(["cf", "--config", str(tmp_path / "missing.json")]) == 3
