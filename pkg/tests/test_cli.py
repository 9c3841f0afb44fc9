import json

import numpy as np
import pytest

from jointspec.cli import main, read_series


@pytest.fixture
def series(tmp_path):
    path = tmp_path / "x.csv"
    assert main(["simulate", "--dgp", "M0", "--n", "201", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_simulate_is_reproducible(series, tmp_path):
    other = tmp_path / "y.csv"
    main(["simulate", "--dgp", "M0", "--n", "201", "--seed", "3", "--out", str(other)])
    assert series.read_text() == other.read_text()
    assert read_series(str(series)).size == 201


def test_simulate_sde_requires_delta(capsys):
    assert main(["simulate", "--dgp", "N1", "--n", "50"]) == 2
    assert main(["simulate", "--dgp", "N1", "--n", "50", "--delta", "0.02"]) == 0
    assert len(capsys.readouterr().out.split()) == 50


def test_simulate_param_override(capsys):
    assert main(["simulate", "--dgp", "ar1garch", "--n", "30", "--param", "a1=0.5"]) == 0
    assert main(["simulate", "--dgp", "ar1garch", "--n", "30", "--param", "a1"]) == 2


def test_read_series_header_and_errors(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("value\n1.0\n2.5\n\n3\n")
    np.testing.assert_array_equal(read_series(str(p)), [1.0, 2.5, 3.0])
    p.write_text("1.0\nabc\n")
    assert main(["fit", "--model", "arch1", "--data", str(p)]) == 3


def test_fit_json(series, tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", "--model", "arch1", "--data", str(series), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert set(d["theta_hat"]) == {"alpha0", "alpha1"}
    assert d["converged"] and len(d["sigma0"]) == 2


def test_test_writes_valid_report(series, tmp_path):
    out = tmp_path / "rep.json"
    code = main(["test", "--model", "arch1", "--data", str(series), "--B", "100", "--m", "20",
                 "--engines", "numeric,bootstrap", "--out", str(out)])
    assert code == 0
    d = json.loads(out.read_text())
    assert set(d["pvalues"]) == {"numeric", "bootstrap"}


def test_mc_table(tmp_path):
    out = tmp_path / "t.tsv"
    code = main(["mc", "--experiment", "arch1", "--dgp", "M0", "--n", "60", "--reps", "2",
                 "--engines", "numeric", "--m", "10", "--out", str(out)])
    assert code in (0, 3)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("n\tdgp\tN:S1") and lines[1].split("\t")[1] == "M0"


def test_apply(tmp_path, capsys):
    path = tmp_path / "r.csv"
    main(["simulate", "--dgp", "N5", "--n", "201", "--delta", "0.005", "--out", str(path)])
    code = main(["apply", "--data", str(path), "--delta", "0.005", "--models", "D1,D6",
                 "--engines", "numeric", "--m", "20", "--B", "100",
                 "--json", str(tmp_path / "a.json")])
    assert code == 0
    assert "D1" in capsys.readouterr().out
    assert set(json.loads((tmp_path / "a.json").read_text())) == {"D1", "D6"}


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--dgp", "nope", "--n", "10"],
        ["mc", "--experiment", "table9"],
        ["test", "--model", "arch1", "--data", "/nonexistent.csv"],
        ["test", "--model", "nomodel", "--data", "/nonexistent.csv"],
        ["frobnicate"],
        ["apply", "--data", "x.csv"],
    ],
)
def test_config_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv))
    assert exc.value.code == 2


def test_bad_data_exits_3(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("\n".join(["1.0"] * 100))
    assert main(["test", "--model", "arch1", "--data", str(p)]) == 3
    p.write_text("1\n2\n3\n")
    assert main(["fit", "--model", "arch1", "--data", str(p)]) == 3
    p.write_text("1\n2\n0\n" * 30)
    assert main(["test", "--model", "D3", "--delta", "0.1", "--data", str(p)]) == 3
