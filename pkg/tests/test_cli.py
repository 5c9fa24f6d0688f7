import json

import numpy as np
import pytest

from mirror_vlasov import selftest
from mirror_vlasov.cli import main
from mirror_vlasov.config import ConfigError, parse_config
from mirror_vlasov.diagnostics import read_csv

SMALL = {
    "geometry": {"M": 2, "L": 2.0},
    "initial_data": {"n_per_slab": 16, "seed": 3},
    "stepping": {"dt": 2e-3, "t_end": 0.2, "record_every": 25},
    "diagnostics": {"R_list": [2, 4], "average_windows": [[0.0, 0.1], [0.15, 0.5]]},
}


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(SMALL))
    return path


# ------------------------------------------------------------------ config

def test_full_config_parses():
    text = json.dumps({
        "geometry": {"A": 1.0, "A_bar": 0.6, "theta": 3.0, "L": 16.0, "M": 16},
        "initial_data": {"C0": 1.0, "lambda": 1.0, "C1": 1.0, "alpha": 0.7,
                         "N_cutoff": None, "n_per_slab": 64, "seed": 0},
        "field": {"softening": None, "near_radius": 2.0, "method": "hybrid"},
        "stepping": {"dt": 1e-3, "t_end": 10.0, "record_every": 100,
                     "max_speed_floor": 1.0},
        "diagnostics": {"mu_spacing": 0.5, "cell_size": 0.25,
                        "R_list": [4, 8, 16, 32, 64], "average_windows": [[0, 1]]},
        "output_dir": "out",
    })
    cfg = parse_config(text)
    assert cfg.geometry.theta == 3.0 and cfg.initial.lam == 1.0
    assert cfg.n_per_slab == 64 and cfg.field.method == "hybrid"
    assert parse_config("{}").stepping == cfg.stepping


@pytest.mark.parametrize("data, msg", [
    ({"geometry": {"theta": 1.5}}, "theta must exceed 2"),
    ({"initial_data": {"alpha": 0.5}}, "alpha must exceed 5/9"),
    ({"geometry": {"radius": 1.0}}, "unknown key 'geometry.radius'"),
    ({"stepping": {"dt": -1}}, "stepping: dt must be positive"),
    ({"field": {"method": "fmm"}}, "field: method"),
    ({"initial_data": {"n_per_slab": 0}}, "n_per_slab"),
    ({"diagnostics": {"mu_spacing": 2.0}}, "mu_spacing"),
    ({"geometry": 3}, "expected an object"),
])
def test_config_validation(data, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(json.dumps(data))


def test_malformed_json():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("{not json")


def test_overrides():
    cfg = parse_config(json.dumps(SMALL), ["stepping.dt=5e-4", "field.method=direct",
                                           "initial_data.N_cutoff=3"])
    assert cfg.stepping.dt == 5e-4
    assert cfg.field.method == "direct"
    assert cfg.initial.N_cutoff == 3
    with pytest.raises(ConfigError):
        parse_config("{}", ["stepping.dt"])


# --------------------------------------------------------------- commands

def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == len(selftest.CHECKS) and "FAIL" not in out


def test_selftest_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(selftest, "CHECKS",
                        selftest.CHECKS + [("broken", lambda: (False, "forced"))])
    assert main(["selftest"]) == 4
    assert "FAIL  broken" in capsys.readouterr().out


def test_missing_config(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "missing.json")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"geometry": {"theta": 1.5}}))
    assert main(["run", "--config", str(path)]) == 2
    assert "theta must exceed 2" in capsys.readouterr().err


def test_runtime_error_exit_code(cfg_file, tmp_path, capsys):
    code = main(["run", "--config", str(cfg_file), "--output", str(tmp_path / "o"),
                 "--set", "stepping.magnetic=false", "--set", "stepping.t_end=2.0",
                 "--set", "initial_data.lambda=0.1"])
    assert code == 3
    assert "cylinder wall" in capsys.readouterr().err


def _schema_ok(path):
    first = path.read_text().splitlines()[0]
    return first.startswith("# columns:")


def test_run_then_diagnose(cfg_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg_file), "--output", str(out),
                 "--workers", "2"]) == 0
    assert "max Qratio" in capsys.readouterr().out
    for name in ("diag.csv", "qr.csv", "averages.csv", "snap_0.csv", "snap_100.csv"):
        assert (out / name).exists() and _schema_ok(out / name)
    diag = read_csv(out / "diag.csv")
    np.testing.assert_allclose(diag["t"], [0.0, 0.05, 0.1, 0.15, 0.2])
    assert diag["workRes"][0] == 0.0 and np.all(diag["minMargin"] > 0)
    qr = read_csv(out / "qr.csv")
    assert list(qr["R"]) == [2.0, 4.0] and np.all(qr["Q0"] >= 1)
    av = read_csv(out / "averages.csv")
    assert list(av["delta"]) == [0.1]  # the second window exceeds the run

    assert main(["diagnose", "--config", str(cfg_file), "--output", str(out)]) == 0
    re = read_csv(out / "diag_recomputed.csv")
    for col in ("t", "minMargin", "C3fit"):
        np.testing.assert_allclose(re[col], diag[col], rtol=1e-12)
    # R(t) is rebuilt from snapshot times only, so it can only lag the in-run value
    assert re["Q"][0] == diag["Q"][0]
    assert np.all(re["Rt"] <= diag["Rt"]) and np.all(re["Q"] <= diag["Q"])
    np.testing.assert_allclose(re["supE"], diag["supE"], rtol=1e-12)
    assert np.all(np.isnan(re["workRes"]))


def test_diagnose_without_snapshots(cfg_file, tmp_path):
    assert main(["diagnose", "--config", str(cfg_file), "--output", str(tmp_path)]) == 1


def test_converge_writes_gauges(cfg_file, tmp_path, capsys):
    out = tmp_path / "conv"
    code = main(["converge", "--config", str(cfg_file), "--output", str(out),
                 "--cutoffs", "1,2", "--cutoffs", "1.5"])
    assert code == 0
    assert capsys.readouterr().out.count("sigma(T)") == 2
    assert _schema_ok(out / "conv.csv")
    conv = read_csv(out / "conv.csv")
    assert conv["delta"][0] == 0.0 and conv["eta"][0] == 0.0
    assert set(zip(conv["N"], conv["Nprime"])) == {(1.0, 2.0), (1.5, 3.0)}
    np.testing.assert_array_equal(conv["sigma"], conv["delta"] + conv["eta"])


def test_converge_rejects_bad_cutoffs(cfg_file, tmp_path):
    assert main(["converge", "--config", str(cfg_file), "--output", str(tmp_path),
                 "--cutoffs", "3,2"]) == 2
    assert main(["converge", "--config", str(cfg_file), "--output", str(tmp_path)]) == 2


def test_outputs_are_byte_identical_across_workers(cfg_file, tmp_path):
    blobs = []
    for w in (1, 3):
        out = tmp_path / f"w{w}"
        assert main(["run", "--config", str(cfg_file), "--output", str(out),
                     "--workers", str(w)]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert blobs[0] == blobs[1]


def test_bad_worker_count(cfg_file):
    assert main(["run", "--config", str(cfg_file), "--workers", "0"]) == 2
