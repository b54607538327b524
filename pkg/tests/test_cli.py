import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from survtensor.cli import main
from survtensor.npyio import read_npy, write_npy


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    """synth + preprocess once; the CLI surface tests share the result."""
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.yaml").write_text(
        "dataset_name: mcmed\nn_patients: 50\nseed: 21\n", encoding="utf-8")
    (root / "run.yaml").write_text(
        f"dataset_name: mcmed\nbase_dir: {root / 'raw'}\noutput_dir: {root / 'out'}\n"
        "seed: 3\n", encoding="utf-8")
    runner = CliRunner()
    synth = runner.invoke(main, ["synth", "--spec", str(root / "spec.yaml"),
                                 "--out", str(root / "raw"), "--radiology-dim", "6"])
    pre = runner.invoke(main, ["preprocess", "--config", str(root / "run.yaml")])
    return root, runner, synth, pre


def test_synth_exit_and_outputs(cli_run):
    root, runner, synth, pre = cli_run
    assert synth.exit_code == 0, synth.output
    assert (root / "raw" / "visits.csv").is_file()
    assert (root / "raw" / "ground_truth.json").is_file()
    assert (root / "raw" / "radiology_embeddings.npy").is_file()


def test_preprocess_exit_and_manifest(cli_run):
    root, runner, synth, pre = cli_run
    assert pre.exit_code == 0, pre.output
    assert (root / "out" / "manifest.json").is_file()
    assert "check mask_binary: pass" in pre.output


def test_validate_passes_on_clean_run(cli_run):
    root, runner, synth, pre = cli_run
    result = runner.invoke(main, ["validate", "--dir", str(root / "out")])
    assert result.exit_code == 0, result.output


def test_validate_fails_on_tampered_output(cli_run, tmp_path):
    import shutil
    root, runner, synth, pre = cli_run
    out = tmp_path / "tampered"
    shutil.copytree(root / "out", out)
    mask = read_npy(out / "x_train_mcmed_mask.npy")
    mask[0, 0, 0] = 2
    write_npy(mask, "u8", out / "x_train_mcmed_mask.npy")
    result = runner.invoke(main, ["validate", "--dir", str(out)])
    assert result.exit_code == 1
    assert "mask_binary: FAIL" in result.output


def test_stats_prints_table(cli_run):
    root, runner, synth, pre = cli_run
    result = runner.invoke(main, ["stats", "--dir", str(root / "out")])
    assert result.exit_code == 0, result.output
    assert "train" in result.output and "censor" in result.output
    assert "per-event rates" in result.output  # competing risks task


def test_preprocess_invalid_config_exits_nonzero(tmp_path):
    (tmp_path / "bad.yaml").write_text(
        f"dataset_name: eicu\nbase_dir: {tmp_path}\noutput_dir: {tmp_path / 'o'}\n"
        "max_hours: 24\nnum_windows: 7\nwindow_size_hours: 4\n", encoding="utf-8")
    runner = CliRunner()
    result = runner.invoke(main, ["preprocess", "--config", str(tmp_path / "bad.yaml")])
    assert result.exit_code == 1
    assert "ConfigInvalid" in result.output


def test_radiology_modality_round_trip(cli_run):
    root, runner, synth, pre = cli_run
    (root / "run_rad.yaml").write_text(
        f"dataset_name: mcmed\nbase_dir: {root / 'raw'}\noutput_dir: {root / 'out_rad'}\n"
        "modalities: {radiology: true}\n", encoding="utf-8")
    result = runner.invoke(main, ["preprocess", "--config", str(root / "run_rad.yaml")])
    assert result.exit_code == 0, result.output
    rad = read_npy(root / "out_rad" / "x_train_mcmed_rad.npy")
    with open(root / "out_rad" / "splits_mcmed.json") as fh:
        counts = json.load(fh)["counts"]
    assert rad.shape == (counts["train"]["stays"], 6)
