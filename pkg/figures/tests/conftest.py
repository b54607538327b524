import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def mcmed_out(tmp_path_factory):
    """Synthetic competing-risks run produced through the engine's CLI only."""
    root = tmp_path_factory.mktemp("engine")
    (root / "spec.yaml").write_text(
        "dataset_name: mcmed\nn_patients: 80\nseed: 31\n", encoding="utf-8")
    (root / "run.yaml").write_text(
        f"dataset_name: mcmed\nbase_dir: {root / 'raw'}\noutput_dir: {root / 'out'}\n"
        "seed: 8\n", encoding="utf-8")
    for args in (["synth", "--spec", str(root / "spec.yaml"), "--out", str(root / "raw")],
                 ["preprocess", "--config", str(root / "run.yaml")]):
        proc = subprocess.run([sys.executable, "-m", "survtensor", *args],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr + proc.stdout
    return root / "out"
