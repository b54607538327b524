"""figures <out_dir>: render validation figures from an engine output tree."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .plots import plot_duration_histogram, plot_survival, plot_trajectories

WHICH = ("all", "survival", "histogram", "trajectories")


def _dataset_of(out_dir: Path) -> str:
    matches = sorted(out_dir.glob("stats_*.json"))
    if not matches:
        raise click.ClickException(f"no stats_*.json under {out_dir}")
    return matches[0].stem.split("_", 1)[1]


@click.command()
@click.argument("out_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--which", type=click.Choice(WHICH), default="all", show_default=True)
@click.option("--bins", type=int, default=48, show_default=True,
              help="Histogram bin count over [0, H].")
@click.option("--figures-subdir", default="figures", show_default=True)
def main(out_dir: Path, which: str, bins: int, figures_subdir: str) -> None:
    """Render survival curve, duration histogram, and feature trajectories
    (PNG + SVG) from the files a preprocessing run emitted into OUT_DIR."""
    dataset = _dataset_of(out_dir)
    target = out_dir / figures_subdir
    with open(out_dir / f"stats_{dataset}.json", encoding="utf-8") as fh:
        num_risks = int(json.load(fh)["num_risks"])

    written: list[Path] = []
    try:
        if which in ("all", "survival"):
            written += plot_survival(out_dir / "figures_data" / f"{dataset}_km.csv",
                                     target / f"{dataset}_survival_curve")
            if num_risks > 1:
                written += plot_survival(out_dir / "figures_data" / f"{dataset}_cif.csv",
                                         target / f"{dataset}_cif")
        if which in ("all", "histogram"):
            splits = ("train", "val", "test")
            paths, *_ = plot_duration_histogram(
                out_dir / f"stats_{dataset}.json",
                [out_dir / f"durations_{s}_{dataset}.npy" for s in splits],
                [out_dir / f"events_{s}_{dataset}.npy" for s in splits],
                target / f"{dataset}_duration_histogram", bins=bins)
            written += paths
        if which in ("all", "trajectories"):
            written += plot_trajectories(out_dir / f"stats_{dataset}.json",
                                         target / f"{dataset}_feature_trajectories")
    except (ValueError, OSError, KeyError) as exc:
        raise click.ClickException(str(exc))

    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
