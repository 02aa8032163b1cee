import csv
import io
import json

import numpy as np
import pytest

from illiquid_pide.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, main

from conftest import SIGMA

COARSE = ["--set", "grid.dx=0.04", "--set", "grid.dtau=0.02", "--set", "grid.N=100"]
MEDIUM = ["--set", "grid.dx=0.02", "--set", "grid.dtau=0.01", "--set", "grid.N=200"]
NO_JUMPS = ["--set", "model.kind=zero", "--set", "market.rho=0"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_price_single_column(capsys):
    code, out, _ = run(capsys, "price", "--spots", "90", "100", "110", *COARSE)
    table = rows(out)
    assert code == EXIT_OK
    assert table[0] == ["S", "V"]
    assert [float(r[0]) for r in table[1:]] == [90.0, 100.0, 110.0]
    prices = [float(r[1]) for r in table[1:]]
    assert prices[0] > prices[1] > prices[2] > 0


def test_empty_spot_list_gives_header_only(capsys):
    code, out, _ = run(capsys, "price", "--spots", *COARSE)
    assert code == EXIT_OK and out == "S,V\n"


def test_spot_outside_band_is_numerical_failure(capsys):
    code, out, err = run(capsys, "price", "--spots", "1e6", *COARSE)
    assert code == EXIT_NUMERIC and out == ""
    assert "BandError" in err


def test_rho_times_L_at_least_one_rejected(capsys):
    code, out, err = run(capsys, "price", "--set", "market.rho=1.0", *COARSE)
    assert code == EXIT_CONFIG and out == ""
    assert "rho * L must be < 1" in err


def test_all_problems_reported_together(capsys):
    code, _, err = run(capsys, "price", "--set", "market.rho=2", "--set", "grid.dx=-1", "--set", "output.format=xml")
    assert code == EXIT_CONFIG
    assert "rho * L" in err and "[grid]" in err and "[output]" in err


def test_finite_scheme_with_variance_gamma_rejected(capsys):
    code, _, err = run(capsys, "price", "--set", "mode.scheme=finite", *COARSE)
    assert code == EXIT_CONFIG
    assert "finite" in err and "VarianceGamma" in err


def test_first_order_hedge_needs_small_feedback(capsys):
    code, _, err = run(capsys, "hedge", "--hedge-mode", "optimal-first-order", "--set", "market.rho=0.4", *COARSE)
    assert code == EXIT_CONFIG and "rho * L <= 0.3" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "price", "--config", str(tmp_path / "nope.ini"))
    assert code == EXIT_CONFIG and "cannot read config" in err


def test_config_file_layered_over_defaults(capsys, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[market]\nrho = 0.05\n")
    code, out, _ = run(capsys, "price", "--config", str(ini), "--print-config")
    assert code == EXIT_OK
    assert "rho = 0.05" in out and "kappa = 0.16" in out


def test_print_config_round_trips(capsys, tmp_path):
    code, out, _ = run(capsys, "mc", "--print-config", "--set", "mc.paths=1234")
    assert code == EXIT_OK and "[mc]" in out and "paths = 1234" in out
    ini = tmp_path / "dump.ini"
    ini.write_text(out)
    code, again, _ = run(capsys, "mc", "--config", str(ini), "--print-config")
    assert again == out


def test_invalid_seed(capsys):
    code, _, err = run(capsys, "mc", "--seed", "-1")
    assert code == EXIT_CONFIG and "seed" in err


def test_invalid_thread_env(capsys, monkeypatch):
    monkeypatch.setenv("ILLIQUID_PIDE_THREADS", "many")
    code, _, err = run(capsys, "price", "--spots", "100", *COARSE)
    assert code == EXIT_CONFIG and "ILLIQUID_PIDE_THREADS" in err


def test_thread_count_does_not_change_output(capsys, monkeypatch):
    args = ["price", "--layout", "table1", "--spots", "95", "100", *COARSE]
    _, serial, _ = run(capsys, *args)
    monkeypatch.setenv("ILLIQUID_PIDE_THREADS", "4")
    _, parallel, _ = run(capsys, *args)
    assert serial == parallel


def test_mc_reruns_are_bit_identical(capsys):
    args = ["mc", "--set", "mc.paths=50000", "--seed", "99", "--threads", "2"]
    _, first, _ = run(capsys, *args)
    _, second, _ = run(capsys, *args)
    assert first == second
    table = rows(first)
    assert table[0] == ["price", "se", "paths", "seed"] and table[1][2:] == ["50000", "99"]


def test_table1_without_jumps_or_feedback(capsys):
    # every column collapses onto the classical price
    code, out, _ = run(capsys, "price", "--layout", "table1", "--spots", "90", "100", "110", *NO_JUMPS, *COARSE)
    table = rows(out)
    assert code == EXIT_OK and table[0] == ["S", "bs", "fs", "bs_pide", "fs_pide"]
    for r in table[1:]:
        assert len(set(r[1:])) == 1


def test_flat_smile_without_jumps_or_feedback(capsys):
    code, out, _ = run(capsys, "smile", *NO_JUMPS, *MEDIUM)
    table = rows(out)
    assert code == EXIT_OK and table[0] == ["K", "iv", "source"]
    vols = np.array([float(r[1]) for r in table[1:]])
    assert len(vols) == 27
    assert np.all(np.abs(vols - SIGMA) < 2e-3)


def test_single_strike_smile(capsys):
    code, out, _ = run(capsys, "smile", "--strikes", "100", *COARSE)
    table = rows(out)
    assert code == EXIT_OK
    assert [r[2] for r in table[1:]] == ["fs", "classical", "fs-pide"]
    assert all(r[0] == "100" for r in table[1:])


def test_table2_columns(capsys):
    code, out, _ = run(capsys, "table2", "--spots", "100", *COARSE)
    header = rows(out)[0]
    assert code == EXIT_OK
    assert header == ["S", "fs_rho0.1", "fs_pide_rho0.1", "fs_rho0.2", "fs_pide_rho0.2", "fs_rho0.3", "fs_pide_rho0.3"]


def test_json_output(capsys):
    code, out, _ = run(capsys, "price", "--spots", "100", "--format", "json", *COARSE)
    data = json.loads(out)
    assert code == EXIT_OK and list(data[0]) == ["S", "V"] and data[0]["S"] == 100.0


def test_output_file(capsys, tmp_path):
    dest = tmp_path / "hedge.csv"
    code, out, _ = run(capsys, "hedge", "--spots", "100", "--out", str(dest), *COARSE)
    assert code == EXIT_OK and out == ""
    table = rows(dest.read_text())
    assert table[0] == ["S", "mode", "phi", "var_rate_diff", "var_rate_jump"]
    assert table[1][1] == "delta"


def test_validate_failure_exit_code(capsys):
    # too coarse for the closed-form check
    code, out, _ = run(capsys, "validate", "--set", "mc.paths=20000", *COARSE)
    records = [json.loads(line) for line in out.splitlines()]
    assert code == EXIT_VALIDATION
    assert any(not r["passed"] for r in records)
    assert {"check", "passed", "detail", "seconds"} <= set(records[0])
