"""
End-to-end tests of the command-line subcommands
"""

import json

import numpy as np
import pytest

from main import main
from services.io import read_series


def summary(output, command):
    return json.loads((output / f"summary_{command}.json").read_text())


def test_spectrum_free_circle(tmp_path):
    output = tmp_path / "out"
    assert main(["spectrum", "--alpha", "1", "--n", "0", "--roots", "10", "--output", str(output)]) == 0
    columns = read_series(output / "roots.txt")
    assert columns["k"] == pytest.approx([1, 1, 2, 2, 3, 3, 4, 4, 5, 5], abs=1e-7)
    result = summary(output, "spectrum")
    assert result["root_count"] == 10
    assert result["count_check"]["passed"]


def test_invalid_alpha_writes_nothing(tmp_path, capsys):
    output = tmp_path / "out"
    assert main(["spectrum", "--alpha", "-1", "--roots", "10", "--output", str(output)]) == 2
    assert not output.exists()
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error_code"] == "CONFIG_ERROR"


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["spectrum", "--alpha", "1.5", "--n", "1", "--roots", "10", "--output", str(blocker / "out")]) == 5


def test_completeness_failure(tmp_path):
    config = tmp_path / "coarse.yaml"
    config.write_text("alpha: 1.2\nn: 1\nroots: 40\nbase_step: 0.3\ntangency_threshold: 1.0e-300\nmax_rescans: 0\n")
    assert main(["spectrum", "--config", str(config), "--output", str(tmp_path / "out")]) == 3


def test_analyze_roots_file(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    args = ["--alpha", "1.5", "--n", "3", "--roots", "400"]
    assert main(["spectrum", *args, "--output", str(first)]) == 0
    assert main(["analyze", *args, "--roots-file", str(first / "roots.txt"), "--output", str(second)]) == 0
    result = summary(second, "analyze")
    assert set(result["comparisons"]) == {"odd", "even", "all"}
    assert "ks_odd_even" in result["metrics"]
    for name in ("spacings_odd.txt", "ecdf_even.txt", "histogram_all.txt"):
        assert (second / name).exists()
    odd = read_series(second / "spacings_odd.txt")["s"]
    assert odd.size == 200


def test_analyze_reports_skipped_statistics(tmp_path):
    config = tmp_path / "short.yaml"
    config.write_text("alpha: 1.5\nn: 3\nroots: 1200\nlengths: [1.0, 5000.0]\n")
    output = tmp_path / "out"
    assert main(["analyze", "--config", str(config), "--output", str(output)]) == 0
    result = summary(output, "analyze")
    assert result["number_variance"]["lengths"] == [1.0]
    assert any("5000.0" in warning and "dropped" in warning for warning in result["warnings"])
    assert result["small_s_exponents"]["even"] is None
    assert any("small-s exponent undetermined" in warning for warning in result["warnings"])


def test_sweep_marks_degenerate_point(tmp_path):
    output = tmp_path / "out"
    assert main(["sweep", "--alpha", "1,1.2", "--n", "1", "--roots", "40", "--output", str(output)]) == 0
    rows = summary(output, "sweep")["sweep"]
    assert [row["status"] for row in rows] == ["degenerate", "ok"]
    table = read_series(output / "sweep.txt")
    assert np.isnan(table["dF_W"][0])
    assert table["dF_W"][1] > 0


def test_perturb_check(tmp_path):
    output = tmp_path / "out"
    assert main(["perturb-check", "--alpha", "1.01", "--n", "1", "--levels", "20", "--output", str(output)]) == 0
    result = summary(output, "perturb-check")["perturbation"]
    assert result["within_bound"]
    assert (output / "perturbation.txt").exists()


def test_rmt_table(tmp_path):
    table = tmp_path / "goe.txt"
    assert main(["rmt-table", "--table", str(table), "--output", str(tmp_path / "out")]) == 0
    assert read_series(table)["F_GOE"][0] == 0.0
    metadata = summary(tmp_path / "out", "rmt-table")["goe_table"]
    assert metadata["delta_goe_wigner"] == pytest.approx(3.8182e-5, abs=1e-6)


def test_selftest(tmp_path):
    output = tmp_path / "out"
    assert main(["selftest", "--output", str(output)]) == 0
    checks = summary(output, "selftest")["selftest"]
    assert len(checks) == 6
    assert all(check["passed"] for check in checks)


def test_summaries_reproducible(tmp_path):
    results = []
    for name in ("a", "b"):
        output = tmp_path / name
        assert main(["spectrum", "--alpha", "1.3", "--n", "4", "--roots", "200", "--output", str(output)]) == 0
        result = summary(output, "spectrum")
        result.pop("timings")
        result["config"].pop("output")
        results.append(result)
    assert results[0] == results[1]
