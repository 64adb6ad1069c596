"""
Unit tests for configuration models and settings.
"""
import math
from pathlib import Path

import pytest
from pydantic import ValidationError as PydanticValidationError

from regflow.config.settings import detect_config, get_settings
from regflow.models.schemas import (
    CSV_COLUMNS,
    DetectConfig,
    ExperimentRecord,
    FlowModel,
    RunConfig,
    SummaryRow,
    SweepSpec,
)

# Mark all tests as unit tests
pytestmark = pytest.mark.unit


class TestFlowModelFlags:
    """Test resolving the flow model from command-line flags."""

    def test_defaults_to_standard(self):
        assert FlowModel.from_flags() is FlowModel.NONE

    def test_regularized_selects_uniform(self):
        assert FlowModel.from_flags(regularized=True) is FlowModel.UNIFORM

    def test_annotation_files_select_their_prior(self):
        assert FlowModel.from_flags(metadata=True) is FlowModel.METADATA
        assert FlowModel.from_flags(bipartite=True, regularized=True) is FlowModel.BIPARTITE
        assert FlowModel.from_flags(teleport=True) is FlowModel.TELEPORT

    def test_explicit_prior_wins(self):
        assert FlowModel.from_flags(prior="uniform", metadata=True) is FlowModel.UNIFORM

    def test_conflicting_flags(self):
        with pytest.raises(ValueError):
            FlowModel.from_flags(metadata=True, bipartite=True)
        with pytest.raises(ValueError):
            FlowModel.from_flags(teleport=True, regularized=True)

    def test_is_regularized(self):
        assert FlowModel.METADATA.is_regularized
        assert not FlowModel.TELEPORT.is_regularized


class TestRunConfig:
    """Test validation of a detection run."""

    def test_metadata_needs_file(self):
        with pytest.raises(PydanticValidationError):
            RunConfig(input_path=Path("net.txt"), model=FlowModel.METADATA)

    def test_bipartite_accepts_two_mode_pajek(self):
        config = RunConfig(input_path=Path("net.net"), model=FlowModel.BIPARTITE)
        assert config.types_path is None

    def test_bipartite_edge_list_needs_types(self):
        with pytest.raises(PydanticValidationError):
            RunConfig(input_path=Path("net.txt"), model=FlowModel.BIPARTITE)

    def test_remove_fraction_range(self):
        with pytest.raises(PydanticValidationError):
            RunConfig(input_path=Path("net.txt"), remove_fraction=1.0)


class TestSweepSpec:
    """Test sweep specification parsing."""

    def test_default_grids(self):
        spec = SweepSpec()
        assert len(spec.r_values) == 20
        assert spec.r_values[0] == 0.0
        assert spec.r_values[-1] == 0.95
        assert spec.mu_values == [0.0, 0.15, 0.5]

    def test_comma_separated_lists(self):
        spec = SweepSpec(r_values="0.1, 0.2", methods="none,metadata")
        assert spec.r_values == [0.1, 0.2]
        assert spec.methods == [FlowModel.NONE, FlowModel.METADATA]

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(mu_values=[1.5]),
            dict(r_values=[]),
            dict(n_nodes=5, n_modules=6),
            dict(methods=[FlowModel.BIPARTITE]),
            dict(network_path=Path("net.txt"), methods=[FlowModel.METADATA]),
        ],
    )
    def test_invalid_specs(self, kwargs):
        with pytest.raises(PydanticValidationError):
            SweepSpec(**kwargs)


class TestRecords:
    """Test CSV rows and summary statistics."""

    def test_row_uses_repr_floats(self):
        record = ExperimentRecord(
            method=FlowModel.UNIFORM, r=0.1, mu=0.0, rep=2, seed=17,
            n_modules=3, ami=1 / 3, codelength=2.5,
        )
        row = dict(zip(CSV_COLUMNS, record.to_row()))
        assert row["method"] == "uniform"
        assert row["ami"] == repr(1 / 3)
        assert row["savings"] == ""
        assert row["n_modules"] == "3"

    def test_mean_stderr(self):
        assert SummaryRow.mean_stderr([2.0]) == (2.0, 0.0)
        mean, stderr = SummaryRow.mean_stderr([1.0, 3.0])
        assert mean == 2.0
        assert stderr == pytest.approx(1.0)
        assert all(math.isnan(x) for x in SummaryRow.mean_stderr([]))


class TestSettings:
    """Test settings sources and detection overrides."""

    def test_defaults(self):
        settings = get_settings()
        assert settings.trials == 10
        assert settings.teleport_alpha == 0.15

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("REGFLOW_TRIALS", "3")
        assert get_settings().trials == 3

    def test_env_file(self, tmp_path):
        (tmp_path / ".env.regflow").write_text("REGFLOW_SEED=42\n")
        assert get_settings().seed == 42

    def test_detect_config_overrides(self):
        cfg = detect_config(seed=5, trials=None, prior_scale=2.0)
        assert cfg.search.seed == 5
        assert cfg.search.trials == 10
        assert cfg.prior_scale == 2.0
        assert cfg.weight_model == "ccm"

    def test_detect_config_takes_ami_average_from_settings(self, monkeypatch):
        monkeypatch.setenv("REGFLOW_AMI_AVERAGE", "geometric")
        assert detect_config().ami_average == "geometric"
        assert detect_config(ami_average="min").ami_average == "min"

    def test_unknown_ami_average(self):
        with pytest.raises(PydanticValidationError):
            DetectConfig(ami_average="median")
