"""
Run artifacts: per-round CSV, summary JSON, JSONL episode log and plots.

All JSON documents follow the same envelope:

    {"schema": "pipescale.<kind>.v1", "params": {...}, ..., "meta": {...}}

with meta.timestamp left null so that identical runs produce identical
files. Non-finite floats are written as null.
"""

from __future__ import annotations

import json
import logging
import math
import tempfile
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .experience import persist  # noqa: E402
from .harness import EpisodeLog, ExperimentResult, RoundRecord  # noqa: E402
from .reward import RewardBreakdown  # noqa: E402

logger = logging.getLogger(__name__)

SUMMARY_SCHEMA = "pipescale.summary.v1"

_BASE_COLUMNS = (
    "round",
    "t",
    "source",
    "epsilon",
    "p99_ms",
    "mean_latency_ms",
    "throughput_rps",
    "billable_cost",
    "effective_cost",
    *RewardBreakdown.COMPONENTS,
    "reward_total",
    "reward_clipped",
    "stored",
    "retrieved",
    "error",
    "oracle_reward",
    "xi",
    "eta",
    "regret",
)
_STAGE_FIELDS = ("dn", "dc", "dm", "drho", "replicas", "cpu_millicores", "memory_mb", "rho")


class ExportError(OSError):
    """Raised when an output location cannot be written."""


def ensure_writable(directory: str | Path) -> Path:
    """
    Create directory if needed and check that files can be written in it.

    Raises:
        ExportError: If the directory cannot be created or written to
    """
    path = Path(directory)
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path, prefix=".probe-"):
            pass
    except OSError as exc:
        raise ExportError(f"output directory {str(path)!r} is not writable: {exc}") from exc
    return path


def csv_columns(stage_names: Sequence[str]) -> list[str]:
    columns = list(_BASE_COLUMNS)
    for name in stage_names:
        columns.extend(f"{name}_{f}" for f in _STAGE_FIELDS)
    return columns


def _row(record: RoundRecord) -> dict[str, Any]:
    row: dict[str, Any] = {
        "round": record.round,
        "t": record.t,
        "source": record.source,
        "epsilon": record.epsilon,
        "p99_ms": record.p99_ms,
        "mean_latency_ms": record.mean_latency_ms,
        "throughput_rps": record.throughput_rps,
        "billable_cost": record.billable_cost,
        "effective_cost": record.effective_cost,
        "reward_total": record.reward.total,
        "reward_clipped": record.reward.clipped,
        "stored": record.stored,
        "retrieved": record.retrieved,
        "error": record.error,
        "oracle_reward": record.oracle_reward,
        "xi": record.xi,
        "eta": record.eta,
        "regret": record.regret,
    }
    for name in RewardBreakdown.COMPONENTS:
        row[name] = getattr(record.reward, name)
    for delta, cfg in zip(record.action.stages, record.configs):
        row[f"{delta.name}_dn"] = delta.dn
        row[f"{delta.name}_dc"] = delta.dc
        row[f"{delta.name}_dm"] = delta.dm
        row[f"{delta.name}_drho"] = delta.drho
        row[f"{delta.name}_replicas"] = cfg.replicas
        row[f"{delta.name}_cpu_millicores"] = cfg.cpu_millicores
        row[f"{delta.name}_memory_mb"] = cfg.memory_mb
        row[f"{delta.name}_rho"] = cfg.gpu_rate_ratio
    return row


def rounds_frame(log: EpisodeLog, stage_names: Sequence[str]) -> pd.DataFrame:
    """One row per round; an empty log gives an empty frame with all columns."""
    return pd.DataFrame([_row(r) for r in log.records], columns=csv_columns(stage_names))


def write_rounds_csv(log: EpisodeLog, path: str | Path, stage_names: Sequence[str]) -> Path:
    path = Path(path)
    rounds_frame(log, stage_names).to_csv(path, index=False)
    return path


def _json_safe(value: Any) -> Any:
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, Mapping):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def summary_document(result: ExperimentResult) -> dict[str, Any]:
    """Summary JSON document for one run."""
    from . import __version__

    return _json_safe(
        {
            "schema": SUMMARY_SCHEMA,
            "params": result.scenario.to_dict(),
            "summary": result.summary,
            "meta": {"library": "pipescale", "version": __version__, "timestamp": None},
        }
    )


def write_json(document: Mapping[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_json_safe(document), indent=2, sort_keys=True) + "\n")
    return path


def write_log(records: Iterable[RoundRecord], path: str | Path) -> Path:
    """Episode log as JSON lines, one round per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(_json_safe(record.to_dict()), sort_keys=True) + "\n")
    return path


def read_log(path: str | Path) -> list[RoundRecord]:
    """
    Load an episode log written by write_log.

    Raises:
        ValueError: On a malformed line, naming its line number
    """
    records = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(RoundRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed episode record: {exc}") from exc
    return records


# ----------------------------------------------------------------------
# Plots
# ----------------------------------------------------------------------


def _save(fig: Any, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logger.debug("figure saved to %s", path)
    return path


def plot_latency_cost(summaries: Mapping[str, Mapping[str, Any]], path: str | Path) -> Path:
    """Side-by-side bars of P99 latency and cost per 1K requests per controller."""
    labels = list(summaries)
    x = np.arange(len(labels))
    fig, (ax_lat, ax_cost) = plt.subplots(1, 2, figsize=(10, 4))

    ax_lat.bar(x, [summaries[k]["p99_ms"] for k in labels], color="0.5")
    ax_lat.set_ylabel("P99 latency (ms)")
    ax_lat.set_xticks(x)
    ax_lat.set_xticklabels(labels, rotation=20)

    width = 0.35
    ax_cost.bar(
        x - width / 2,
        [summaries[k]["billable_cost_per_1k"] for k in labels],
        width,
        color="w",
        edgecolor="k",
        label="billable",
    )
    ax_cost.bar(
        x + width / 2,
        [summaries[k]["effective_cost_per_1k"] for k in labels],
        width,
        color="0.5",
        label="effective",
    )
    ax_cost.set_ylabel("Cost per 1K requests ($)")
    ax_cost.set_xticks(x)
    ax_cost.set_xticklabels(labels, rotation=20)
    ax_cost.legend(loc="upper left")
    return _save(fig, path)


def plot_trajectories(logs: Mapping[str, EpisodeLog], path: str | Path) -> Path:
    """Cumulative reward and per-round throughput over rounds."""
    fig, (ax_reward, ax_tput) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for label, log in logs.items():
        rounds = [r.round for r in log.records]
        ax_reward.plot(rounds, np.cumsum([r.reward.total for r in log.records]), label=label)
        ax_tput.plot(rounds, [r.throughput_rps for r in log.records], label=label)
    ax_reward.set_ylabel("Cumulative reward")
    ax_tput.set_ylabel("Throughput (req/s)")
    ax_tput.set_xlabel("Round")
    ax_reward.legend(loc="best")
    return _save(fig, path)


def plot_reward_sensitivity(
    totals: Mapping[str, Mapping[str, float]], path: str | Path
) -> Path:
    """Grouped bars of summed reward components per configuration."""
    labels = list(totals)
    components = RewardBreakdown.COMPONENTS
    x = np.arange(len(components))
    width = 0.8 / max(len(labels), 1)
    fig, ax = plt.subplots(figsize=(10, 4))
    for i, label in enumerate(labels):
        ax.bar(
            x + (i - (len(labels) - 1) / 2) * width,
            [totals[label].get(c, 0.0) for c in components],
            width,
            label=label,
        )
    ax.axhline(0.0, color="k", linewidth=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(components)
    ax.set_ylabel("Summed reward")
    ax.legend(loc="best")
    return _save(fig, path)


def export_run(
    result: ExperimentResult, out_dir: str | Path, *, plots: bool = True
) -> dict[str, Path]:
    """
    Write all artifacts of one run into out_dir.

    Returns:
        Mapping of artifact name to written path
    """
    out = ensure_writable(out_dir)
    stage_names = [s.name for s in result.scenario.stages]
    written = {
        "rounds_csv": write_rounds_csv(result.log, out / "rounds.csv", stage_names),
        "summary_json": write_json(summary_document(result), out / "summary.json"),
        "episode_log": write_log(result.log.records, out / "episode.jsonl"),
    }
    if len(result.buffer):
        written["experiences"] = persist(result.buffer, out / "experiences.jsonl")
    if plots and len(result.log):
        label = result.summary["controller"]
        written["trajectory_plot"] = plot_trajectories(
            {label: result.log}, out / "trajectory.png"
        )
        written["latency_cost_plot"] = plot_latency_cost(
            {label: result.summary}, out / "latency_cost.png"
        )
        written["reward_components_plot"] = plot_reward_sensitivity(
            {label: result.summary["reward"]}, out / "reward_components.png"
        )
    return written
