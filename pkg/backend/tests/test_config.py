"""
Tests for run configuration loading
"""

import pytest

from config import RunConfig, load_run_config
from models.errors import ConfigError
from models.schemas import Topology


def write_yaml(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return path


class TestAlpha:
    def test_range(self):
        config = load_run_config(overrides={"alpha": "1.05:1.6:0.025"})
        assert len(config.alpha) == 23
        assert config.alpha[0] == 1.05
        assert config.alpha[-1] == pytest.approx(1.6)

    def test_comma_list_and_scalar(self):
        assert load_run_config(overrides={"alpha": "1,1.2"}).alpha == [1.0, 1.2]
        assert load_run_config(overrides={"alpha": 2}).alpha == [2.0]

    @pytest.mark.parametrize("alpha", ["-1", "0", "1.2,0"])
    def test_rejects_non_positive(self, alpha):
        with pytest.raises(ConfigError):
            load_run_config(overrides={"alpha": alpha})


class TestFile:
    def test_values_from_yaml(self, tmp_path):
        path = write_yaml(tmp_path, "topology: segment\nalpha: 1.3\nn: 5\nroots: 500\n")
        config = load_run_config(path)
        assert config.topology == Topology.SEGMENT
        assert config.system().n == 5
        assert config.roots == 500

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_run_config(write_yaml(tmp_path, "alpha: 1.3\nroot_count: 5\n"))
        assert info.value.details["unknown"] == ["root_count"]

    def test_not_a_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(write_yaml(tmp_path, "- 1\n- 2\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.yaml")


class TestPrecedence:
    def test_cli_over_yaml_over_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SPECTRA_ROOTS", "300")
        monkeypatch.setenv("SPECTRA_N", "7")
        monkeypatch.setenv("SPECTRA_THREADS", "2")
        path = write_yaml(tmp_path, "roots: 400\nn: 9\n")
        config = load_run_config(path, {"roots": 500, "n": None})
        assert config.roots == 500
        assert config.n == 9
        assert config.threads == 2

    def test_defaults(self):
        config = RunConfig()
        assert config.topology == Topology.CIRCLE
        assert config.alpha == [1.001]
        assert config.n == 47
        assert config.include_ground_state is False
        assert config.scan_policy().max_rescans == 3


def test_explicit_positions_required(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write_yaml(tmp_path, "positions_mode: explicit\n"))


def test_explicit_positions(tmp_path):
    config = load_run_config(write_yaml(tmp_path, "positions_mode: explicit\npositions: [1.0, 2.5]\nalpha: 2\n"))
    assert config.system().positions == (1.0, 2.5)
