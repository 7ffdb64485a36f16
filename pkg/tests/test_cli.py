import csv
import json

import numpy as np
import pytest

from blowup_control.cli import DEFAULTS, load_config, main
from blowup_control.errors import ConfigError


def write_ini(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL = "[grid]\npoints = 64\n"
ZERO = "[surface]\nfamily = zero\n" + SMALL


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_print_defaults(capsys):
    assert main(["--print-defaults"]) == 0
    assert capsys.readouterr().out == DEFAULTS


def test_no_command_is_an_error():
    assert main([]) == 1


def test_check_passes_and_catches_perturbations(tmp_path):
    out = str(tmp_path / "c")
    assert main(["check", "--out", out]) == 0
    summary = json.loads((tmp_path / "c" / "check.json").read_text())
    assert summary["passed"]
    assert main(["check", "--out", out, "--perturb-A", "1e-6"]) == 1
    assert main(["check", "--out", out, "--perturb-oracle", "1e-6"]) == 1


def test_expand_flat_residual_vanishes(tmp_path):
    cfg = write_ini(tmp_path, ZERO)
    assert main(["expand", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "residual.csv")
    assert list(rows[0]) == ["T", "residual_sup", "fitted_p", "log_correction"]
    assert all(float(r["residual_sup"]) == 0 for r in rows)
    coeffs = read_csv(tmp_path / "coefficients.csv")
    assert len(coeffs) == 64 and all(float(r["u0"]) == 1.0 for r in coeffs)


def test_expand_rejects_steep_surface(tmp_path, capsys):
    cfg = write_ini(tmp_path, "[surface]\nfamily = cosine_well\nlam = 1.5\n" + SMALL)
    assert main(["expand", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_construct_flat_passes(tmp_path, capsys):
    cfg = write_ini(tmp_path, ZERO + "[w0]\ntheta = 0\n")
    assert main(["construct", "--config", cfg, "--out", str(tmp_path)]) == 0
    budget = json.loads(capsys.readouterr().out)
    assert budget["pass"] and budget["norm_phi"] == 0
    u = np.loadtxt(tmp_path / "u.txt")
    assert np.allclose(u, 1 / 11, atol=1e-10)
    for name in ("record.json", "ut.txt", "budget.csv", "config.ini", "provenance.json"):
        assert (tmp_path / name).is_file()


def test_construct_large_lambda_reports_failure(tmp_path, capsys):
    # a failing budget is a result, not an error
    cfg = write_ini(tmp_path, "[surface]\nfamily = cosine_well\nlam = 0.05\n" + SMALL)
    assert main(["construct", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is False


def test_surface_without_family(tmp_path):
    cfg = write_ini(tmp_path, "[surface]\nlam = 0.01\n")
    assert main(["construct", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[pipeline]\ns0 = 1.2\n"))
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[pipeline]\ns = 2.5\n"))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"))
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[grid\npoints = 3\n"))
    with pytest.raises(ConfigError):
        load_config(overrides={("grid", "points"): "many"})


def test_config_digest_tracks_content(tmp_path):
    a = load_config()
    b = load_config(overrides={("w0", "theta"): "2e-6"})
    assert a.digest != b.digest and a.digest == load_config().digest


def test_verify_from_record(tmp_path):
    cfg = write_ini(tmp_path, ZERO + "[w0]\ntheta = 0\n")
    rec_dir = tmp_path / "rec"
    assert main(["construct", "--config", cfg, "--out", str(rec_dir)]) == 0
    out = tmp_path / "ver"
    assert main(["verify", "--config", cfg, "--record", str(rec_dir / "record.json"), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["first_blowup_extrapolated"] - 11) <= 0.002 * 11
    assert summary["argmin_in_K"]
    assert len(read_csv(out / "blowup_map.csv")) == 64


def test_verify_cfl_misconfiguration(tmp_path):
    cfg = write_ini(tmp_path, ZERO + "[verifier]\ncfl = 1.2\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_sweep_columns(tmp_path):
    cfg = write_ini(tmp_path, SMALL + "[sweep]\nlambdas = 0, 0.004\nthetas = 0, 1e-6\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 4
    assert {"lambda", "theta", "norm_exact", "norm_phi", "norm_tail", "total", "pass"} <= set(rows[0])


def test_simulate_provenance(tmp_path):
    cfg = write_ini(tmp_path, SMALL + "[pipeline]\nb = 4\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    prov = json.loads((tmp_path / "provenance.json").read_text())
    assert prov["command"] == "simulate" and prov["seed"] == 0
    assert {"config_hash", "package", "numpy", "sympy", "python"} <= set(prov)
    with open(tmp_path / "energy.jsonl") as fh:
        first = json.loads(fh.readline())
        later = [json.loads(line) for line in fh]
    assert first["provenance"]["config_hash"] == prov["config_hash"]
    assert later and "e0" in later[0]
    assert len(read_csv(tmp_path / "final_state.csv")) == 64
