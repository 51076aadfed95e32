import warnings
from pathlib import Path

import numpy as np
import pytest

from conceptfind import activation, cli, config, corpus
from conceptfind.service import load_bundle

warnings.filterwarnings("ignore", category=DeprecationWarning)

REPO = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG = REPO / "configs" / "default.yaml"


@pytest.fixture(scope="session")
def default_cfg():
    return config.load_config(DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def default_spec(default_cfg):
    return config.build_concept_specs(default_cfg.corpus)


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory):
    """One full run-all over the shipped default config, shared by the suite."""
    artifacts = tmp_path_factory.mktemp("artifacts")
    rc = cli.main(["run-all", "--config", str(DEFAULT_CONFIG),
                   "--artifacts", str(artifacts)])
    assert rc == 0
    return artifacts


@pytest.fixture(scope="session")
def bundle(pipeline_dir):
    return load_bundle(pipeline_dir)


@pytest.fixture(scope="session")
def dataset(bundle):
    return bundle.dataset


def tiny_spec(height=4, width=4):
    """Two concepts over a 4x4 grid, 6 channels; fast unit-test corpus."""
    top = np.zeros((height, width), dtype=bool)
    top[:2] = True
    bottom = ~top
    return [
        corpus.ConceptSpec(name="shade", attributes=("dark", "light", "mid"),
                           spatial_mask=top, semantic_slot=0),
        corpus.ConceptSpec(name="trim", attributes=("fringe", "plain"),
                           spatial_mask=bottom, semantic_slot=1,
                           optional=True),
    ]


@pytest.fixture()
def tiny_dataset():
    return corpus.generate_synthetic(tiny_spec(), n_items=60, noise_sigma=0.0,
                                     seed=5, dims=(4, 4, 6))


@pytest.fixture(scope="session")
def gap_features(dataset):
    return activation.gap_matrix(dataset)
