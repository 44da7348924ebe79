"""
Tests for run artifacts: CSV, JSON documents, episode logs and plots.
"""

import json
import math

import pandas as pd
import pytest

from pipescale.export import (
    SUMMARY_SCHEMA,
    ExportError,
    csv_columns,
    ensure_writable,
    export_run,
    plot_latency_cost,
    read_log,
    rounds_frame,
    summary_document,
    write_json,
    write_log,
)
from pipescale.harness import EpisodeLog, run_experiment
from pipescale.reward import RewardBreakdown
from pipescale.scenario import ControllerConfig, SAIRConfig, three_stage_scenario

STAGES = ["preprocessing", "inference", "postprocessing"]


@pytest.fixture(scope="module")
def result():
    scenario = three_stage_scenario(
        rounds=4,
        seed=2,
        gpu_rate_ratio=0.5,
        controller=ControllerConfig(sair=SAIRConfig(store_all=True)),
    )
    return run_experiment(scenario)


class TestWritable:
    """Output directory checks."""

    def test_creates_directory(self, tmp_path):
        """Missing directories are created."""
        target = tmp_path / "a" / "b"
        assert ensure_writable(target) == target
        assert target.is_dir()
        assert list(target.iterdir()) == []

    def test_unwritable_location(self, tmp_path):
        """A path below a regular file raises ExportError."""
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        with pytest.raises(ExportError, match="not writable"):
            ensure_writable(blocker / "out")


class TestCsv:
    """Per-round CSV."""

    def test_columns_per_stage(self):
        """Every stage contributes its delta and allocation columns."""
        columns = csv_columns(STAGES)
        assert columns[0] == "round"
        for name in STAGES:
            assert f"{name}_dn" in columns
            assert f"{name}_rho" in columns
        for component in RewardBreakdown.COMPONENTS:
            assert component in columns

    def test_empty_log_has_header(self, tmp_path):
        """An empty run still writes the full header."""
        frame = rounds_frame(EpisodeLog(), STAGES)
        assert frame.empty
        assert list(frame.columns) == csv_columns(STAGES)

    def test_csv_parses_back(self, result, tmp_path):
        """rounds.csv re-reads with one row per round."""
        export_run(result, tmp_path, plots=False)
        frame = pd.read_csv(tmp_path / "rounds.csv")
        assert len(frame) == 4
        assert list(frame["round"]) == [0, 1, 2, 3]
        assert frame["reward_total"].tolist() == pytest.approx(
            [r.reward.total for r in result.log]
        )
        assert frame["inference_replicas"].min() >= 1


class TestJson:
    """Summary document and episode log."""

    def test_summary_document(self, result):
        """The summary follows the schema envelope with all reward components."""
        doc = summary_document(result)
        assert doc["schema"] == SUMMARY_SCHEMA
        assert doc["meta"]["timestamp"] is None
        assert doc["params"]["name"] == result.scenario.name
        reward = doc["summary"]["reward"]
        for component in RewardBreakdown.COMPONENTS:
            assert component in reward
        assert "total" in reward

    def test_non_finite_written_as_null(self, tmp_path):
        """NaN and infinity become null."""
        path = write_json({"a": math.nan, "b": [math.inf, 1.0]}, tmp_path / "x.json")
        assert json.loads(path.read_text()) == {"a": None, "b": [None, 1.0]}

    def test_log_round_trip(self, result, tmp_path):
        """An episode log re-reads into identical records."""
        path = write_log(result.log.records, tmp_path / "episode.jsonl")
        assert read_log(path) == result.log.records

    def test_malformed_log_line(self, result, tmp_path):
        """A corrupt line is reported with its line number."""
        path = write_log(result.log.records[:1], tmp_path / "episode.jsonl")
        with path.open("a") as f:
            f.write("{not json\n")
        with pytest.raises(ValueError, match=":2:"):
            read_log(path)


class TestArtifacts:
    """The complete artifact set of a run."""

    def test_export_run(self, result, tmp_path):
        """All files are written, plots included."""
        written = export_run(result, tmp_path)
        for key in ("rounds_csv", "summary_json", "episode_log", "experiences"):
            assert written[key].exists()
        for key in ("trajectory_plot", "latency_cost_plot", "reward_components_plot"):
            assert written[key].suffix == ".png"
            assert written[key].stat().st_size > 0

    def test_no_plots(self, result, tmp_path):
        """plots=False skips the figures."""
        written = export_run(result, tmp_path, plots=False)
        assert not any(p.suffix == ".png" for p in written.values())
        assert not list(tmp_path.glob("*.png"))

    def test_identical_runs_identical_summary(self, result, tmp_path):
        """Summary files of identical runs are byte-identical."""
        again = run_experiment(result.scenario)
        a = export_run(result, tmp_path / "a", plots=False)["summary_json"]
        b = export_run(again, tmp_path / "b", plots=False)["summary_json"]
        assert a.read_bytes() == b.read_bytes()

    def test_latency_cost_plot(self, tmp_path):
        """The comparison plot renders for several controllers."""
        rows = {
            name: {"p99_ms": p, "billable_cost_per_1k": 0.2, "effective_cost_per_1k": 0.1}
            for name, p in (("static", 300.0), ("vpa", 250.0))
        }
        path = plot_latency_cost(rows, tmp_path / "lc.png")
        assert path.exists()
