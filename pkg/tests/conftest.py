import pytest

from survtensor.config import config_from_dict
from survtensor.synthgen import SyntheticSpec, generate


def make_config(dataset, base_dir, output_dir, **overrides):
    raw = {"dataset_name": dataset, "base_dir": str(base_dir), "output_dir": str(output_dir)}
    raw.update(overrides)
    return config_from_dict(raw)


@pytest.fixture(scope="session")
def eicu_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("eicu_tree")
    spec = SyntheticSpec(dataset_name="eicu", n_patients=60, seed=101)
    manifest = generate(spec, root / "raw")
    return spec, root, manifest


@pytest.fixture(scope="session")
def mimiciv_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("mimiciv_tree")
    spec = SyntheticSpec(dataset_name="mimiciv", n_patients=60, seed=202)
    manifest = generate(spec, root / "raw")
    return spec, root, manifest


@pytest.fixture(scope="session")
def mcmed_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("mcmed_tree")
    spec = SyntheticSpec(dataset_name="mcmed", n_patients=80, seed=303)
    manifest = generate(spec, root / "raw")
    return spec, root, manifest
