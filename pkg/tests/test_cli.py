import csv
import json

import pytest

from udncomp.cli import (CSV_HEADER, EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, SchemeSpec,
                         SweepSpec, main, parse_scheme)
from udncomp.errors import ConfigError


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({
        "tiers": [{"density_per_km2": 200}, {"density_per_km2": 800}],
        "comp": {"scheme": "rrlp", "eta_db": -4.0},
        "sim": {"trials": 400, "seed": 7},
    }))
    return path


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@pytest.mark.parametrize("text, expected", [
    ("rrlp", SchemeSpec("rrlp", "rrlp")),
    ("rrlp:N=2", SchemeSpec("rrlp(N=2)", "rrlp", target=2.0)),
    ("rrlp:eta_db=-3", SchemeSpec("rrlp(eta_db=-3)", "rrlp", eta_db=-3.0)),
    ("fnsb:3", SchemeSpec("fnsb(3)", "fnsb", n_strongest=3)),
    ("fnsb", SchemeSpec("fnsb(2)", "fnsb", n_strongest=2)),
    ("arlp_threshold:-60", SchemeSpec("arlp_threshold(-60)", "arlp_threshold", floor_dbm=-60.0)),
    ("no_comp", SchemeSpec("no_comp", "no_comp")),
])
def test_parse_scheme(text, expected):
    assert parse_scheme(text) == expected


@pytest.mark.parametrize("text", ["rrlp:M=2", "fnsb:x", "bogus", "no_comp:1", "rrlp:N=abc"])
def test_parse_scheme_rejects(text):
    with pytest.raises(ConfigError):
        parse_scheme(text)


@pytest.mark.parametrize("axis, grid, needle", [
    ("total_density", (), "empty"),
    ("sir_threshold", (0.0, 0.0), "increasing"),
    ("sir_threshold", (5.0, 0.0), "increasing"),
    ("target_N_avg", (1.0, 2.0), "exceed 1"),
    ("density_ratio", (0.5, 1.5), "[0, 1]"),
    ("total_density", (-1.0,), "> 0"),
    ("height", (1.0,), "unknown sweep axis"),
])
def test_sweep_spec_validation(axis, grid, needle):
    with pytest.raises(ConfigError, match=needle.replace("[", r"\[").replace("]", r"\]")):
        SweepSpec(axis, grid)


def test_empty_grid_exits_with_config_code(tmp_path, scenario, capsys):
    code = main(["sweep", "--scenario", str(scenario), "--out", str(tmp_path / "o"),
                 "--axis", "total_density", "--grid"])
    assert code == EXIT_CONFIG
    assert "empty" in capsys.readouterr().err


def test_bad_scenario_exits_with_config_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["coverage", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["coverage", "--out", str(tmp_path / "o"), "--trials", "0"]) == EXIT_CONFIG


def test_coverage_sweep_outputs_and_rerun_is_byte_identical(tmp_path, scenario):
    args = ["coverage", "--scenario", str(scenario), "--thresholds-db", "-5", "0", "5",
            "--schemes", "rrlp", "fnsb:2", "no_comp"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == EXIT_OK
    a = (tmp_path / "a" / "coverage.csv").read_bytes()
    assert a == (tmp_path / "b" / "coverage.csv").read_bytes()
    rows = read_csv(tmp_path / "a" / "coverage.csv")
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 3 * 3
    for axis_value, scheme, path, value, lo, hi in rows[1:]:
        assert path == "mc"
        assert 0.0 <= float(lo) <= float(value) <= float(hi) <= 1.0
    by = {(r[0], r[1]): float(r[3]) for r in rows[1:]}
    for scheme in ("rrlp", "fnsb(2)", "no_comp"):
        assert by[("-5.0", scheme)] >= by[("0.0", scheme)] >= by[("5.0", scheme)]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["command"] == "coverage"
    assert all(s["status"] == "ok" for s in manifest["per_point_status"])


def test_sweep_writes_one_csv_per_metric(tmp_path, scenario):
    out = tmp_path / "o"
    code = main(["sweep", "--scenario", str(scenario), "--out", str(out), "--axis",
                 "total_density", "--grid", "500", "2000", "--trials", "200",
                 "--metrics", "coverage", "mean_comp_size", "tx_ase"])
    assert code == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == [
        "coverage.csv", "manifest.json", "mean_comp_size.csv", "tx_ase.csv"]
    rows = read_csv(out / "mean_comp_size.csv")[1:]
    assert [r[0] for r in rows] == ["500.0", "2000.0"]
    assert all(float(r[3]) >= 1.0 for r in rows)


def test_calibrate_eta_writes_table(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["calibrate-eta", "--out", str(out), "--densities-per-km2", "50000",
                 "--targets", "2", "3"])
    assert code == EXIT_OK
    rows = read_csv(out / "eta_table.csv")
    assert rows[0] == ["lambda_b", "target_N", "eta_db"]
    table = {(float(r[0]), float(r[1])): float(r[2]) for r in rows[1:]}
    assert len(table) == 2
    # the dense end of the table is reproduced within 0.15 dB
    assert table[(0.05, 3.0)] == pytest.approx(-0.43, abs=0.15)
    assert table[(0.05, 2.0)] == pytest.approx(-0.22, abs=0.15)
    assert table[(0.05, 3.0)] < table[(0.05, 2.0)] < 0
    assert "eta_db" in capsys.readouterr().out


def test_dump_realization(tmp_path, scenario, capsys):
    out = tmp_path / "o"
    assert main(["dump-realization", "--scenario", str(scenario), "--out", str(out),
                 "--window-radius", "300"]) == EXIT_OK
    rows = read_csv(out / "realization.csv")
    assert len(rows) > 1
    assert "written to" in capsys.readouterr().out


def test_validate_writes_verdicts(tmp_path):
    out = tmp_path / "o"
    code = main(["validate", "--out", str(out), "--level", "fast", "--criteria", "5"])
    report = json.loads((out / "verdicts.json").read_text())
    assert [v["criterion"] for v in report["verdicts"]] == [5]
    assert code == (EXIT_OK if report["all_passed"] else EXIT_ACCEPTANCE)
    assert report["all_passed"] == report["verdicts"][0]["passed"]


def test_validate_with_bad_scenario_reports_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"tiers": []}))
    out = tmp_path / "o"
    assert main(["validate", "--scenario", str(bad), "--out", str(out)]) == EXIT_CONFIG
    report = json.loads((out / "verdicts.json").read_text())
    assert report["all_passed"] is False and "config_error" in report
