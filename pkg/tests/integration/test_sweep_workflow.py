"""
Integration tests for the bench command group.

Run with: pytest tests/integration/ -v
"""
import csv
import json

import pytest
from typer.testing import CliRunner

from regflow.main import app
from regflow.services.graph import read_graph

# Mark all tests as integration tests
pytestmark = pytest.mark.integration

runner = CliRunner()

SMALL_SWEEP = """\
# planted network, two removal fractions, two noise levels
R_VALUES=0.0,0.3
MU_VALUES=0.0,0.5
REPETITIONS=2
METHODS=none,uniform,metadata
N_NODES=60
N_MODULES=3
AVG_DEGREE=6
MIXING=0.1
MEAN_WEIGHT=3
TRIALS=2
SEED=5
"""


@pytest.fixture
def sweep_file(tmp_path):
    path = tmp_path / "sweep.env"
    path.write_text(SMALL_SWEEP)
    return path


@pytest.fixture
def cliques_file(tmp_path, bridged_cliques_text):
    path = tmp_path / "cliques.txt"
    path.write_text(bridged_cliques_text)
    return path


class TestSweepCommand:
    """Test `regflow bench sweep`."""

    def test_writes_one_row_per_record(self, tmp_path, sweep_file):
        """Test the CSV layout and the summary file."""
        output = tmp_path / "results" / "sweep.csv"
        result = runner.invoke(app, ["bench", "sweep", str(sweep_file), "-o", str(output), "--quiet"])
        assert result.exit_code == 0, result.output

        with open(output, newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2 * 2 * 2 * 3
        assert {row["method"] for row in rows} == {"none", "uniform", "metadata"}
        assert all(row["ami"] != "" for row in rows)
        assert all(row["fold_multiedges"] != "" for row in rows)

        summary = json.loads((tmp_path / "results" / "sweep.summary.json").read_text())
        assert len(summary["rows"]) == 2 * 2 * 3
        assert summary["spec"]["repetitions"] == 2

    def test_reruns_are_identical(self, tmp_path, sweep_file):
        """Test that a fixed seed reproduces the CSV byte for byte."""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        for output in (first, second):
            result = runner.invoke(app, ["bench", "sweep", str(sweep_file), "-o", str(output), "--quiet"])
            assert result.exit_code == 0, result.output
        assert first.read_bytes() == second.read_bytes()

    def test_progress_and_summary_table(self, tmp_path, sweep_file):
        result = runner.invoke(app, ["bench", "sweep", str(sweep_file), "-o", str(tmp_path / "c.csv")])
        assert result.exit_code == 0, result.output
        assert "Wrote 24 records" in result.output

    def test_unknown_method(self, tmp_path):
        """Test that an invalid spec is a configuration error."""
        path = tmp_path / "bad.env"
        path.write_text("METHODS=none,walktrap\n")
        result = runner.invoke(app, ["bench", "sweep", str(path)])
        assert result.exit_code == 2
        assert "methods" in result.output


class TestSamplingCommands:
    """Test `regflow bench sample` and `regflow bench xval`."""

    def test_sample_thins_network(self, tmp_path, cliques_file):
        output = tmp_path / "thin.txt"
        result = runner.invoke(
            app,
            ["bench", "sample", str(cliques_file), str(output), "--fraction", "0.5", "--undirected", "--seed", "2"],
        )
        assert result.exit_code == 0, result.output
        thinned = read_graph(output, directed=False)
        assert thinned.describe()["total_weight"] == 169 - 85

    def test_sample_keeps_every_node_in_order(self, tmp_path):
        """Test that nodes whose links are all removed stay in the sample."""
        source = tmp_path / "star.txt"
        source.write_text("hub x 1\nhub y 1\nz hub 1\nw hub 9\n")
        output = tmp_path / "thin.txt"
        result = runner.invoke(
            app, ["bench", "sample", str(source), str(output), "--fraction", "0.9", "--seed", "4"]
        )
        assert result.exit_code == 0, result.output
        original = read_graph(source)
        thinned = read_graph(output)
        assert thinned.names == original.names
        assert thinned.describe()["total_weight"] == 13 - 12

    def test_sample_writes_two_mode_pajek(self, tmp_path):
        source = tmp_path / "two_mode.net"
        source.write_text("*Vertices 5 2\n*Edges\n1 3 4\n1 4 2\n2 5 6\n")
        output = tmp_path / "thin.net"
        result = runner.invoke(
            app, ["bench", "sample", str(source), str(output), "--fraction", "0.5", "--seed", "1"]
        )
        assert result.exit_code == 0, result.output
        thinned = read_graph(output)
        assert thinned.n_nodes == 5
        assert (thinned.n_a, thinned.n_b) == (2, 3)
        assert thinned.describe()["total_weight"] == 12 - 6

    def test_sample_rejects_full_removal(self, tmp_path, cliques_file):
        result = runner.invoke(
            app, ["bench", "sample", str(cliques_file), str(tmp_path / "x.txt"), "--fraction", "1.0"]
        )
        assert result.exit_code == 2

    def test_xval(self, cliques_file):
        """Test a single cross-validation run."""
        result = runner.invoke(app, ["bench", "xval", str(cliques_file), "--undirected", "--regularized"])
        assert result.exit_code == 0, result.output
        assert "uniform: 2 modules" in result.output
        assert "Training fold multiedges: 85" in result.output
