"""Command-line interface: preprocess / synth / validate / stats."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .artifacts import validate_outputs
from .config import load_config
from .errors import PipelineError
from .pipeline import run_preprocess
from .synthgen import emit_radiology_embeddings, generate, load_spec


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s %(message)s",
    )


@click.group()
@click.option("--verbose/--quiet", default=True, help="Stage logs to stderr.")
def main(verbose: bool) -> None:
    """Preprocess raw EHR CSV exports into survival-analysis tensors."""
    _setup_logging(verbose)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Run configuration YAML.")
@click.option("--chunk-rows", type=int, default=None, help="Streaming chunk size override.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory override.")
@click.option("--seed", type=int, default=None, help="Split seed override.")
@click.option("--workers", type=int, default=1, show_default=True,
              help="Ingest worker count (outputs are identical for any value).")
def preprocess(config_path, chunk_rows, out_dir, seed, workers) -> None:
    """Run all stages end-to-end, then validate the outputs."""
    try:
        cfg = load_config(config_path)
        cfg = cfg.with_overrides(output_dir=out_dir, seed=seed, chunk_rows=chunk_rows)
        result = run_preprocess(cfg, workers=workers)
    except PipelineError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        raise SystemExit(1)
    for check in result.report.checks:
        click.echo(f"check {check.name}: {'pass' if check.passed else 'FAIL'} ({check.details})")
    if not result.report.passed:
        click.echo("validation FAILED", err=True)
        raise SystemExit(1)
    click.echo(f"wrote {len(result.manifest['files']) + 1} files to {result.out_dir} "
               f"(run {result.manifest['run_id']})")


@main.command()
@click.option("--spec", "spec_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Synthetic spec YAML.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--radiology-dim", type=int, default=None,
              help="Also emit a synthetic radiology embeddings matrix of this width.")
def synth(spec_path, out_dir, radiology_dim) -> None:
    """Generate a deterministic synthetic raw CSV tree plus ground truth."""
    try:
        spec = load_spec(spec_path)
        manifest = generate(spec, out_dir)
        if radiology_dim is not None:
            emit_radiology_embeddings(spec, radiology_dim,
                                      Path(out_dir) / "radiology_embeddings.npy")
    except PipelineError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        raise SystemExit(1)
    eligible = sum(1 for stay in manifest["stays"] if stay["eligible"])
    click.echo(f"generated {manifest['n_stays']} stays ({eligible} cohort-eligible) "
               f"for {manifest['dataset']} in {out_dir}")


@main.command()
@click.option("--dir", "out_dir", required=True, type=click.Path(exists=True, file_okay=False))
def validate(out_dir) -> None:
    """Re-run the data-quality checks against an output directory."""
    try:
        report = validate_outputs(out_dir)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot read manifest: {exc}", err=True)
        raise SystemExit(1)
    for check in report.checks:
        click.echo(f"check {check.name}: {'pass' if check.passed else 'FAIL'} ({check.details})")
    raise SystemExit(0 if report.passed else 1)


@main.command()
@click.option("--dir", "out_dir", required=True, type=click.Path(exists=True, file_okay=False))
def stats(out_dir) -> None:
    """Print the label statistics table for a processed output directory."""
    matches = sorted(Path(out_dir).glob("stats_*.json"))
    if not matches:
        click.echo(f"error: no stats_*.json under {out_dir}", err=True)
        raise SystemExit(1)
    with open(matches[0], "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    click.echo(f"dataset: {payload['dataset']}  horizon: {payload['horizon_hours']}h  "
               f"risks: {payload['num_risks']}")
    header = f"{'split':<8}{'n':>8}{'censor':>10}{'event':>10}{'mean_T':>10}{'median_T':>10}"
    click.echo(header)
    for split in ("train", "val", "test", "overall"):
        block = payload["splits"].get(split) if split != "overall" else payload["overall"]
        if block is None:
            continue
        click.echo(f"{split:<8}{block['n']:>8}{block['censor_rate']:>10.4f}"
                   f"{block['event_rate_overall']:>10.4f}{block['duration_mean']:>10.2f}"
                   f"{block['duration_median']:>10.2f}")
    per_code = payload["overall"]["event_rate"]
    if len(per_code) > 1:
        click.echo("per-event rates (overall): "
                   + ", ".join(f"{code}: {rate:.4f}" for code, rate in sorted(per_code.items())))


if __name__ == "__main__":
    main()
