import csv

import pytest

from epidtn.cli import main, parse_grid, UsageError
from epidtn.config import NetworkConfig


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def rates_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("r") / "rates.csv"
    assert main(["estimate-rates", "--config", "reference:3:5", "--runs", "1000", "--seed", "1",
                 "--out", str(path)]) == 0
    return path


def test_estimate_rates_deterministic(tmp_path, rates_file):
    other = tmp_path / "again.csv"
    main(["estimate-rates", "--config", "reference:3:5", "--runs", "1000", "--seed", "1", "--out", str(other)])
    assert other.read_bytes() == rates_file.read_bytes()
    row = read(rates_file)[0]
    assert row["eta_n"] == "4" and row["n_gamma"] == "1000"


def test_estimate_rates_zero_runs(tmp_path):
    assert main(["estimate-rates", "--config", "reference:3:5", "--runs", "0", "--out", str(tmp_path / "r")]) == 2


def test_analyze_mono(tmp_path, rates_file):
    out = tmp_path / "a"
    assert main(["analyze", "--config", "reference:3:5", "--engine", "mono", "--rates", str(rates_file),
                 "--out", str(out), "--cdf-grid", "0:2000:250"]) == 0
    row = read(out / "summary.csv")[0]
    assert row["states"] == "1475"
    cdf = read(out / "cdf.csv")
    assert len(cdf) == 9 and cdf[0]["value"] == "0"
    vals = [float(r["value"]) for r in cdf]
    assert vals == sorted(vals)


def test_analyze_ode_and_folded(tmp_path, rates_file):
    for engine in ("ode", "folded"):
        out = tmp_path / engine
        assert main(["analyze", "--config", "reference:3:5", "--engine", engine,
                     "--rates", str(rates_file), "--out", str(out)]) == 0
        assert float(read(out / "summary.csv")[0]["delay"]) > 0


def test_yaml_config(tmp_path, rates_file):
    path = tmp_path / "net.yaml"
    NetworkConfig.reference(3, 5).dump(path)
    out = tmp_path / "y"
    assert main(["analyze", "--config", str(path), "--engine", "folded", "--rates", str(rates_file),
                 "--out", str(out)]) == 0
    assert read(out / "summary.csv")[0]["states"] == "400"


def test_rates_must_match_node_count(tmp_path, rates_file):
    assert main(["analyze", "--config", "reference:3:7", "--engine", "mono", "--rates", str(rates_file),
                 "--out", str(tmp_path)]) == 2


def test_state_budget_exit_code(tmp_path, rates_file, capsys):
    rc = main(["analyze", "--config", "reference:3:5", "--engine", "mono", "--rates", str(rates_file),
               "--out", str(tmp_path), "--max-states", "100"])
    assert rc == 3
    assert "folded" in capsys.readouterr().err


def test_simulate_outputs(tmp_path):
    out = tmp_path / "s"
    assert main(["simulate", "--config", "reference:3:5", "--runs", "200", "--seed", "4", "--out", str(out)]) == 0
    assert len(read(out / "runs.csv")) == 200
    assert read(out / "summary.csv")[0]["ci_defined"] == "true"
    assert read(out / "chi_square.csv")[0]["test"] == "uniform"
    assert (out / "cdf.csv").exists()


def test_simulate_single_run_flags_ci(tmp_path):
    out = tmp_path / "one"
    assert main(["simulate", "--config", "reference:3:5", "--runs", "1", "--out", str(out)]) == 0
    row = read(out / "summary.csv")[0]
    assert row["ci_defined"] == "false" and row["delay_hw"] == ""


def test_compare(tmp_path, rates_file):
    out = tmp_path / "c"
    assert main(["compare", "--config", "reference:3:5", "--engines", "mono,folded,sim",
                 "--rates", str(rates_file), "--runs", "300", "--out", str(out)]) == 0
    rows = {r["engine"]: r for r in read(out / "comparison.csv")}
    assert float(rows["sim"]["pe_delay"]) == 0.0
    assert float(rows["mono"]["pe_delay"]) >= 0.0


def test_compare_needs_two_engines(tmp_path):
    assert main(["compare", "--config", "reference:3:5", "--engines", "mono", "--out", str(tmp_path)]) == 2


def test_statespace(capsys):
    assert main(["statespace", "--config", "reference:4:5", "--engine", "folded"]) == 0
    assert "600 states" in capsys.readouterr().out


def test_bad_arguments():
    with pytest.raises(SystemExit) as e:
        main(["analyze", "--config", "reference:3:5", "--engine", "nope", "--out", "x"])
    assert e.value.code == 2
    assert main(["statespace", "--config", "missing.yaml"]) == 2


def test_parse_grid():
    assert parse_grid("0:10:5") == [0.0, 5.0, 10.0]
    with pytest.raises(UsageError):
        parse_grid("5:0:1")
