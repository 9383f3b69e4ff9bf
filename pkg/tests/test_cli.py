import json

import pytest

from yamabe_blowup import __version__
from yamabe_blowup.cli import (EXIT_ERROR, EXIT_FAIL, EXIT_OK, EXIT_USAGE, ConfigError, main,
                               parse_config_text, resolve_config)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def data_rows(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")][1:]


def test_verify_weyl_json(capsys):
    code, out, err = run(capsys, "verify-weyl")
    assert code == EXIT_OK and "PASS" in err
    d = json.loads(out)
    assert d["config"]["version"] == __version__ and d["config"]["params"]["n"] == 25


def test_small_n_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("n = 3\n")
    code, out, err = run(capsys, "verify-weyl", "--config", str(cfg))
    assert code == EXIT_USAGE and out == ""


def test_config_errors_name_line_and_field():
    with pytest.raises(ConfigError, match="line 2.*field 'tol'"):
        parse_config_text("n = 5\ntol = abc\n", "verify-weyl")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("bogus = 1\n", "verify-weyl")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("n = 5\nn = 6\n", "verify-weyl")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("n 5\n", "verify-weyl")
    with pytest.raises(ConfigError, match="seed"):
        resolve_config("verify-weyl", seed=-1)


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# comment\nn_points = many\n")
    code, _, err = run(capsys, "verify-weyl", "--config", str(cfg))
    assert code == EXIT_USAGE and "n_points" in err and "line 2" in err
    code, _, err = run(capsys, "verify-weyl", "--config", str(tmp_path / "missing.txt"))
    assert code == EXIT_USAGE


def test_seed_flag_overrides_config(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("seed = 5\n")
    code, out, _ = run(capsys, "--seed", "9", "tune-tau0", "--config", str(cfg))
    assert json.loads(out)["config"]["seed"] == 9


def test_tune_tau0(capsys):
    code, out, _ = run(capsys, "tune-tau0")
    assert code == EXIT_OK
    assert "-7.04072868632" in out


def test_csv_is_lf_and_17_digits(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("k_max = 6\n")
    code, out, _ = run(capsys, "--out", str(tmp_path), "--format", "csv", "volume-scan",
                       "--config", str(cfg))
    assert code == EXIT_OK and out == ""
    raw = (tmp_path / "volume-scan.csv").read_bytes()
    assert b"\r" not in raw
    text = raw.decode()
    assert text.startswith("# version = ")
    rows = data_rows(text)
    assert len(rows) == 5
    vol = rows[0].split(",")[2]
    assert len(vol.replace("-", "").replace(".", "").split("e")[0]) >= 15


def test_certify_norms_rows(capsys):
    code, out, _ = run(capsys, "--format", "csv", "certify-norms")
    assert code == EXIT_OK
    assert len(data_rows(out)) == 24


def test_non_sharp_interaction_flags_drift(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("sharp = false\n")
    code, _, err = run(capsys, "certify-norms", "--config", str(cfg))
    assert code == EXIT_FAIL and "FAIL" in err


def test_reduced_energy_and_small_dimension(tmp_path, capsys):
    code, out, _ = run(capsys, "--format", "csv", "reduced-energy")
    assert code == EXIT_OK
    cfg = tmp_path / "c.txt"
    cfg.write_text("n = 12\n")
    code, _, err = run(capsys, "reduced-energy", "--config", str(cfg))
    # the divergence is raised by the numerical module, not by the config layer
    assert code == EXIT_ERROR and "n >= 19" in err


def test_energy_small_sweep(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("k_list = 3\nn_samples = 64\n")
    code, out, _ = run(capsys, "--format", "csv", "energy", "--config", str(cfg))
    assert code == EXIT_OK
    rows = data_rows(out)
    assert len(rows) == 7 and {r.split(",")[6] for r in rows} >= {"G1", "G2", "R_bound"}
    assert "# tau0_resolved = " in out


def test_energy_without_admissible_tau0(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("n = 20\nk_list = 3\nn_samples = 64\n")
    code, _, err = run(capsys, "energy", "--config", str(cfg))
    assert code == EXIT_ERROR and "no admissible tau0" in err


def test_byte_determinism_and_worker_independence(tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d, w in ((a, "1"), (b, "1"), (c, "3")):
        assert main(["--out", str(d), "--workers", w, "--format", "csv", "certify-norms"]) == EXIT_OK
    capsys.readouterr()
    f = "certify-norms.csv"
    assert (a / f).read_bytes() == (b / f).read_bytes() == (c / f).read_bytes()


def test_certify_all_subset(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("criteria = 1,2\n")
    code, out, _ = run(capsys, "--format", "csv", "certify-all", "--config", str(cfg))
    assert code == EXIT_OK and len(data_rows(out)) == 2
    cfg.write_text("criteria = 1,4\n")
    code, _, err = run(capsys, "certify-all", "--config", str(cfg))
    assert code == EXIT_FAIL and "FAIL" in err
    cfg.write_text("criteria = 14\n")
    assert run(capsys, "certify-all", "--config", str(cfg))[0] == EXIT_USAGE


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--version"])
    assert ei.value.code == 0
    assert __version__ in capsys.readouterr().out
