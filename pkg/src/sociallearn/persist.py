"""Result persistence: trajectory CSV, bound and summary JSON, manifest.

Files are written to a temporary name and renamed into place, so readers
never observe partial output.  Floats are serialized with shortest
round-trip precision, which keeps re-runs of the same seed byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bounds import BoundReport
from .simulate import ExperimentConfig, TrajectoryLog, ValidationSummary

TOOL_VERSION = "0.1.0"

TRAJECTORY_COLUMNS = ("replicate", "k", "agent", "hypothesis", "belief", "log_belief")
PLOT_COLUMNS = ("agent", "hypothesis", "k", "log_belief", "log_bound")


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as tmp:
            tmp.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _json_ready(value):
    """Replace non-finite floats so the output stays standard JSON."""
    if isinstance(value, dict):
        return {key: _json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def dump_json(payload: dict) -> str:
    return json.dumps(_json_ready(payload), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class ResultBundle:
    """Paths of the files one invocation produced."""

    directory: Path
    trajectory_path: Path | None = None
    bounds_path: Path | None = None
    summary_path: Path | None = None
    manifest_path: Path | None = None


def trajectory_rows(logs: Sequence[TrajectoryLog]) -> Iterable[tuple]:
    """Long-format rows: one per replicate, logged step, agent and hypothesis."""
    for replicate, log in enumerate(logs):
        steps = log.step_indices
        for t in range(steps.size):
            block = log.log_beliefs[t]
            for agent in range(block.shape[0]):
                for hyp in range(block.shape[1]):
                    lb = float(block[agent, hyp])
                    yield (replicate, int(steps[t]), agent, hyp, math.exp(lb), lb)


def write_results(
    out_dir,
    config: ExperimentConfig,
    logs: Sequence[TrajectoryLog],
    report: BoundReport | None = None,
    summary: ValidationSummary | None = None,
) -> ResultBundle:
    """Write trajectory CSV, optional bound/summary JSON and the manifest."""
    directory = Path(out_dir)
    trajectory_path = None
    if logs:
        lines = [",".join(TRAJECTORY_COLUMNS)]
        for row in trajectory_rows(logs):
            replicate, k, agent, hyp, belief, log_belief = row
            lines.append(f"{replicate},{k},{agent},{hyp},{belief!r},{log_belief!r}")
        trajectory_path = directory / "trajectory.csv"
        _atomic_write_text(trajectory_path, "\n".join(lines) + "\n")
    bounds_path = None
    if report is not None:
        bounds_path = directory / "bounds.json"
        _atomic_write_text(bounds_path, dump_json(report.to_json_dict()))
    summary_path = None
    if summary is not None:
        summary_path = directory / "summary.json"
        _atomic_write_text(summary_path, dump_json(summary.to_json_dict()))
    manifest_path = directory / "manifest.json"
    manifest = {
        "tool": "sociallearn",
        "version": TOOL_VERSION,
        "config_sha256": config.source_sha256,
        "seed": config.seed,
        "rng": logs[0].rng_name if logs else "pcg64",
        "rule": config.rule,
        "horizon": config.horizon,
        "replicates": config.replicates,
        "stride": config.stride,
        "waived_validation": config.waive,
        "agents": config.model.n,
        "hypotheses": list(config.model.hypotheses.labels),
        "files": {
            "trajectory": trajectory_path.name if trajectory_path else None,
            "bounds": bounds_path.name if bounds_path else None,
            "summary": summary_path.name if summary_path else None,
        },
    }
    _atomic_write_text(manifest_path, dump_json(manifest))
    return ResultBundle(directory, trajectory_path, bounds_path, summary_path, manifest_path)


def log_belief_bound(report: BoundReport, k: int, agent: int) -> float:
    """Log of belief_bound for the same constants; safe for deep exponents."""
    delta = float(report.extras.get("delta", 1.0))
    offset = report.gamma1[agent]
    if report.rule.startswith("theorem-3"):
        offset = offset / delta
    return min(0.0, -0.5 * k * report.gamma2 + offset)


def emit_plot_data(log: TrajectoryLog, report: BoundReport) -> list[tuple]:
    """Per agent and non-optimal hypothesis: logged step, log-belief, log-bound."""
    rejected = [t for t in range(log.log_beliefs.shape[2]) if t not in report.optimal]
    rows = []
    for agent in range(log.log_beliefs.shape[1]):
        for hyp in rejected:
            for t in range(log.step_indices.size):
                k = int(log.step_indices[t])
                rows.append(
                    (
                        agent,
                        hyp,
                        k,
                        float(log.log_beliefs[t, agent, hyp]),
                        log_belief_bound(report, k, agent),
                    )
                )
    return rows


def write_plot_data(path, rows: Sequence[tuple]) -> Path:
    target = Path(path)
    lines = [",".join(PLOT_COLUMNS)]
    for agent, hyp, k, log_belief, log_bound in rows:
        lines.append(f"{agent},{hyp},{k},{log_belief!r},{log_bound!r}")
    _atomic_write_text(target, "\n".join(lines) + "\n")
    return target


def read_trajectory(path) -> list[dict]:
    """Parse a trajectory CSV back into python values."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        rows = []
        for record in reader:
            rows.append(
                {
                    "replicate": int(record["replicate"]),
                    "k": int(record["k"]),
                    "agent": int(record["agent"]),
                    "hypothesis": int(record["hypothesis"]),
                    "belief": float(record["belief"]),
                    "log_belief": float(record["log_belief"]),
                }
            )
    return rows


def trajectory_log_from_rows(rows: Sequence[dict], replicate: int = 0) -> TrajectoryLog:
    """Rebuild the logged belief array of one replicate from CSV rows.

    Signals are not persisted in the CSV, so the rebuilt log carries an
    empty signal table; it is sufficient for plot-data generation.
    """
    mine = [row for row in rows if row["replicate"] == replicate]
    if not mine:
        raise ValueError(f"no rows for replicate {replicate}")
    steps = sorted({row["k"] for row in mine})
    agents = 1 + max(row["agent"] for row in mine)
    hyps = 1 + max(row["hypothesis"] for row in mine)
    index = {k: t for t, k in enumerate(steps)}
    beliefs = np.full((len(steps), agents, hyps), np.nan)
    for row in mine:
        beliefs[index[row["k"]], row["agent"], row["hypothesis"]] = row["log_belief"]
    if np.isnan(beliefs).any():
        raise ValueError("trajectory rows do not cover the full grid")
    stride = steps[1] - steps[0] if len(steps) > 1 else 1
    return TrajectoryLog(
        rule="unknown",
        seed=-1,
        rng_name="pcg64",
        stride=stride,
        step_indices=np.array(steps, dtype=int),
        log_beliefs=beliefs,
        signals=np.empty((0, agents), dtype=int),
    )
