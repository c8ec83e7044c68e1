import json
import subprocess
import sys

import numpy as np
import pytest

from copsense.cli import ExperimentConfig, main, run_experiment
from copsense.copositive import load_certificate
from copsense.model import ModelError, load_instance, petersen_graph, save_graph


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_cop_identity(tmp_path, capsys):
    f = tmp_path / "eye.json"
    f.write_text(json.dumps(np.eye(3).tolist()))
    code, out, _ = _run(capsys, "check-cop", f)
    assert code == 0 and out.strip() == "Copositive"
    f.write_text(json.dumps({"matrix": [[1.0, -2.0], [-2.0, 1.0]]}))
    code, out, _ = _run(capsys, "check-cop", f, "--details")
    assert code == 0 and out.splitlines()[0] == "NotCopositive"


def test_generate_solve_certificate_predict(tmp_path, capsys):
    inst = tmp_path / "edge.json"
    cert = tmp_path / "cert.json"
    assert _run(capsys, "generate", "single-edge", "-o", inst)[0] == 0
    code, out, _ = _run(capsys, "solve", inst)
    assert code == 0 and out.startswith("Optimal z=-2")
    code, out, _ = _run(capsys, "closed-form", inst, "-o", cert, "--eps0", "0.01")
    assert code == 0 and "verdict=Copositive" in out
    obj = load_certificate(cert).objective
    code, out, _ = _run(capsys, "predict", cert, "--delta", "0,0,0")
    assert code == 0 and float(out) == pytest.approx(obj, abs=1e-9)
    code, out, _ = _run(capsys, "predict", cert)
    assert float(out) == pytest.approx(obj, abs=1e-9)


def test_fit_and_lift(tmp_path, capsys):
    inst = tmp_path / "comb.json"
    cert = tmp_path / "fit.json"
    _run(capsys, "generate", "comb", "--v", "1", "--p", "1", "-o", inst)
    code, out, _ = _run(capsys, "fit", inst, "-o", cert, "--rows", "1", "--rg", "3")
    assert code == 0 and "verdict=Copositive" in out
    code, out, _ = _run(capsys, "lift", inst)
    dump = json.loads(out)
    n = load_instance(inst).n
    assert dump["dim"] == n + 1 and np.asarray(dump["C"]).shape == (n + 1, n + 1)


def test_reduce_edgecolor(tmp_path, capsys):
    g = tmp_path / "petersen.json"
    save_graph(petersen_graph(), g)
    code, out, _ = _run(capsys, "reduce-edgecolor", g, "--H", 4, "--rhs", 1, "-o",
                        tmp_path / "pet.json", "--chromatic")
    assert code == 0 and "chromatic index = 4" in out


def test_demo_commands(capsys):
    code, out, _ = _run(capsys, "demo-gap", "--step", "5", "--bound", "10")
    assert code == 0 and "complete=True" in out
    assert "-2" in out
    code, out, _ = _run(capsys, "demo-nonattain")
    assert code == 0 and out.strip()


def test_exit_codes(tmp_path, capsys):
    assert _run(capsys, "solve", tmp_path / "missing.json")[0] == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(capsys, "solve", bad)[0] == 3
    gap = tmp_path / "gap.json"
    _run(capsys, "generate", "gap", "-o", gap)
    code, _, err = _run(capsys, "solve", gap)
    assert code == 2 and "ExactError" in err
    rect = tmp_path / "rect.json"
    rect.write_text(json.dumps([[1.0, 2.0]]))
    assert _run(capsys, "check-cop", rect)[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--bogus-flag"])
    assert exc.value.code == 4
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 4


def test_console_entry_point_usage():
    res = subprocess.run([sys.executable, "-m", "copsense.cli", "--nope"], capture_output=True,
                         text=True)
    assert res.returncode == 4 and "usage" in res.stderr


def _small_cfg(tmp_path, name, **kw):
    d = {"family": "COMB", "seeds": [0, 1], "densities": [0.5], "sizes": {"v": 1, "p": 1},
         "grid": {"values": [1, 2]}, "output": str(tmp_path / name)}
    d.update(kw)
    return d


def test_experiment_deterministic(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(_small_cfg(tmp_path, "a")))
    assert _run(capsys, "experiment", cfg)[0] == 0
    assert _run(capsys, "experiment", cfg, "-o", tmp_path / "b")[0] == 0
    a = (tmp_path / "a" / "report.csv").read_bytes()
    assert a == (tmp_path / "b" / "report.csv").read_bytes()
    assert (tmp_path / "a" / "timings.json").exists()
    svgs = list((tmp_path / "a").glob("*.svg"))
    assert len(svgs) == 2
    text = svgs[0].read_text()
    assert text.startswith("<svg") and "polyline" in text
    body = json.loads((tmp_path / "a" / "report.json").read_text())
    for inst in body["instances"]:
        for row in inst["rows"]:
            for v in row["predictions"].values():
                if v is not None and row["z_true"] is not None:
                    assert v <= row["z_true"] + 1e-4


def test_seed_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("COPSENSE_SEED", "7")
    cfg = ExperimentConfig.from_dict(_small_cfg(tmp_path, "x"))
    assert cfg.seed == 7
    monkeypatch.setenv("COPSENSE_SEED", "seven")
    with pytest.raises(ModelError):
        ExperimentConfig.from_dict(_small_cfg(tmp_path, "x"))


def test_empty_methods_gives_ground_truth_only(tmp_path):
    cfg = ExperimentConfig.from_dict(_small_cfg(tmp_path, "e", methods=[], seeds=[0]))
    res = run_experiment(cfg, write=False)
    assert not res.failures
    rep = res.reports[0]
    assert all(r["predictions"] == {} and r["z_true"] is not None for r in rep.rows)


def test_file_family_round_trip(tmp_path, capsys):
    inst = tmp_path / "sslp.json"
    _run(capsys, "generate", "sslp", "--n", "2", "--m", "1", "-o", inst)
    cfg = ExperimentConfig.from_dict({"family": "File", "files": [str(inst)],
                                      "grid": {"rows": [1], "values": [0, 1]},
                                      "output": str(tmp_path / "f")})
    res = run_experiment(cfg)
    assert not res.failures and len(res.reports) == 1
    assert not res.reports[0].violations()


def test_config_validation(tmp_path):
    with pytest.raises(ModelError):
        ExperimentConfig.from_dict({"family": "Nope"})
    with pytest.raises(ModelError):
        ExperimentConfig.from_dict({"family": "COMB", "grid": {"values": []}})
    with pytest.raises(ModelError):
        ExperimentConfig.from_dict({"family": "COMB", "surprise": 1})
    with pytest.raises(ModelError):
        ExperimentConfig.from_dict({"family": "COMB", "methods": ["Magic"]})
