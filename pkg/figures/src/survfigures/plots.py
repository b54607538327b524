"""The three validation figures: survival curve, duration histogram, feature
trajectories. Display only; every number shown was computed by the engine."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FORMATS = ("png", "svg")


def read_curve_csv(path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Load a curve CSV into column arrays; missing columns are an error."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise ValueError(f"{Path(path).name}: required column {column!r} is absent")
        rows = list(reader)
    return {column: np.array([float(row[column]) for row in rows])
            for column in header if column}


def read_npy(path) -> np.ndarray:
    return np.load(path)


def _save(fig, out_base: Path, formats=FORMATS) -> list[Path]:
    out_base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        target = out_base.with_suffix(f".{fmt}")
        fig.savefig(target, format=fmt, bbox_inches="tight")
        written.append(target)
    plt.close(fig)
    return written


def plot_survival(curve_csv, out_base, formats=FORMATS) -> list[Path]:
    """Step survival curve with shaded 95% band; a competing-risks file
    (cif_k columns present) is drawn as a per-cause incidence overlay."""
    columns = read_curve_csv(curve_csv, ("times", "survival"))
    causes = sorted(c for c in columns if c.startswith("cif_"))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    times = columns["times"]
    if causes:
        for name in causes:
            ax.step(times, columns[name], where="post",
                    label=f"cause {name.split('_', 1)[1]}")
        ax.step(times, columns["survival"], where="post", color="black",
                linestyle="--", label="event-free survival")
        ax.set_ylabel("cumulative incidence / survival probability")
        ax.legend(loc="center right", fontsize=8)
    else:
        for column in ("ci_lower", "ci_upper"):
            if column not in columns:
                raise ValueError(f"{Path(curve_csv).name}: required column {column!r} is absent")
        ax.step(times, columns["survival"], where="post", color="tab:blue")
        ax.fill_between(times, columns["ci_lower"], columns["ci_upper"],
                        step="post", alpha=0.25, color="tab:blue", linewidth=0)
        ax.set_ylabel("survival probability")
    ax.set_xlabel("hours since admission")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    return _save(fig, Path(out_base), formats)


def plot_duration_histogram(stats_json, durations_files, events_files, out_base,
                            bins: int = 48, formats=FORMATS):
    """Stacked censored-vs-event histogram of durations over [0, H]."""
    with open(stats_json, encoding="utf-8") as fh:
        stats = json.load(fh)
    horizon = float(stats["horizon_hours"])
    durations = np.concatenate([read_npy(p).astype(np.float64) for p in durations_files])
    events = np.concatenate([read_npy(p).astype(np.int64) for p in events_files])

    edges = np.linspace(0.0, horizon, bins + 1)
    censored_counts, _ = np.histogram(durations[events == 0], bins=edges)
    event_counts, _ = np.histogram(durations[events > 0], bins=edges)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = edges[1] - edges[0]
    ax.bar(edges[:-1], censored_counts, width=width, align="edge",
           label="censored", color="tab:blue")
    ax.bar(edges[:-1], event_counts, width=width, align="edge",
           bottom=censored_counts, label="event", color="tab:orange")
    ax.set_xlabel("hours since admission")
    ax.set_ylabel("stays")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    paths = _save(fig, Path(out_base), formats)
    return paths, edges, censored_counts, event_counts


def plot_trajectories(stats_json, out_base, formats=FORMATS) -> list[Path]:
    """Mean +- SD bands per engine-selected feature across the W windows."""
    with open(stats_json, encoding="utf-8") as fh:
        stats = json.load(fh)
    trajectories = stats["trajectories"]["features"]
    n_windows = int(stats["trajectories"]["windows"])
    xs = np.arange(n_windows)

    fig, ax = plt.subplots(figsize=(8, 5))
    for name, series in sorted(trajectories.items()):
        mean = np.array([np.nan if m is None else m for m in series["mean"]])
        sd = np.array([np.nan if s is None else s for s in series["sd"]])
        line, = ax.plot(xs, mean, marker="o", markersize=3, label=name)
        ax.fill_between(xs, mean - sd, mean + sd, alpha=0.15,
                        color=line.get_color(), linewidth=0)
    ax.set_xlabel("time window")
    ax.set_ylabel("scaled value (z-score)")
    ax.set_xticks(xs)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, ncols=2)
    return _save(fig, Path(out_base), formats)
