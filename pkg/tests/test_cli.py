import csv
import json

import pytest

from lattice_epidemics.cli import OUTPUT_ENV, parse_and_dispatch


def run(argv, tmp_path, name="out"):
    out = tmp_path / name
    return parse_and_dispatch([*argv, "--out", str(out)]), out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_survival_subcritical(tmp_path):
    code, out = run(["survival", "--lambda", "0.3", "--phi", "0.3", "--beta", "0.2", "--model", "irp",
                     "--kappa", "inf", "--horizon", "200", "--replicas", "2000", "--seed", "1"], tmp_path)
    assert code == 0
    (row,) = read_csv(out / "survival.csv")
    assert float(row["p_hat"]) <= 0.01
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["kappa"] == "inf" and manifest["master_seed"] == 1
    assert {"versions", "wall_clock_seconds", "outputs"} <= set(manifest)


def test_tilde_table_delta1(tmp_path):
    code, out = run(["tilde-table", "--grid", "0.5,1,2", "--alpha1", "1", "--alpha2", "1", "--kd", "1",
                     "--phi", "1", "--lambda", "1", "--beta", "0", "--samples", "1000"], tmp_path)
    assert code == 0
    rows = read_csv(out / "tilde_table.csv")
    (cell,) = [r for r in rows if float(r["a"]) == 1 and float(r["b"]) == 1]
    assert float(cell["delta1_tilde"]) == 9.0


def test_pde_zero_time_returns_profiles(tmp_path):
    code, out = run(["pde", "--T", "0", "--M", "32", "--m1", "2,0.5", "--m2", "1,0,0.5"], tmp_path)
    assert code == 0
    import math

    for r in read_csv(out / "pde.csv"):
        th = float(r["theta"])
        assert float(r["lambda1"]) == pytest.approx(2 + 0.5 * math.cos(2 * math.pi * th), abs=1e-15)
        assert float(r["lambda2"]) == pytest.approx(1 + 0.5 * math.sin(2 * math.pi * th), abs=1e-15)


def test_invalid_config_exit_code(tmp_path, capsys):
    code, _ = run(["pde", "--T", "0.1", "--M", "64", "--dt", "0.1"], tmp_path)
    assert code == 2
    assert "CFL_VIOLATION" in capsys.readouterr().err
    code, _ = run(["survival", "--lambda", "-1"], tmp_path)
    assert code == 2
    code, _ = run(["phi-c", "--bracket", "1,1", "--replicas", "5"], tmp_path)
    assert code == 2


def test_unknown_flag_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        parse_and_dispatch(["survival", "--bogus", "1"])
    assert exc.value.code == 2


def test_budget_exit_code(tmp_path):
    code, out = run(["simulate", "--lambda", "2", "--phi", "1", "--horizon", "5",
                     "--max-events", "50"], tmp_path)
    assert code == 3
    assert json.loads((out / "manifest.json").read_text())["status"] == "budget_exceeded"
    code, _ = run(["hydro-converge", "--Ns", "8", "--replicas", "2", "--max-events", "10",
                   "--alpha1", "0.5"], tmp_path, "h")
    assert code == 3


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda": 0.5, "kappa": 3, "model": "crp", "horizon": 2,
                               "replicas": 10, "seed": 8}))
    code, out = run(["survival", "--config", str(cfg), "--lambda", "0.1"], tmp_path)
    assert code == 0
    conf = json.loads((out / "manifest.json").read_text())["config"]
    assert conf["lam"] == 0.1 and conf["kappa"] == 3 and conf["model"] == "crp" and conf["seed"] == 8
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"lamda": 1}))
    assert run(["survival", "--config", str(bad)], tmp_path)[0] == 2


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    assert parse_and_dispatch(["couple-check", "--lambda", "0.5", "--beta", "0.5", "--phi", "2",
                               "--phi-b", "1", "--horizon", "5", "--replicas", "5"]) == 0
    rows = read_csv(tmp_path / "env_out" / "coupling.csv")
    assert rows[0]["violations"] == "0"


@pytest.mark.parametrize("argv", [
    ["simulate", "--lambda", "0.8", "--phi", "0.5", "--horizon", "3", "--seed", "2"],
    ["two-species", "--alpha1", "0.5", "--kd", "0.5", "--lambda", "0.5", "--N", "8", "--horizon", "0.02"],
    ["window", "--N", "4", "--C", "2,3", "--replicas", "2", "--horizon", "0.1"],
    ["phi-c", "--lambda", "0.2", "--beta", "0.2", "--bracket", "0,4", "--replicas", "50",
     "--horizon", "10", "--tol", "1", "--threshold", "0.1"],
])
def test_outputs_byte_identical(tmp_path, argv):
    code1, out1 = run(argv, tmp_path, "a")
    code2, out2 = run(argv + ["--jobs", "1"], tmp_path, "b")
    assert code1 == code2 == 0
    manifest = json.loads((out1 / "manifest.json").read_text())
    for name in manifest["outputs"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
