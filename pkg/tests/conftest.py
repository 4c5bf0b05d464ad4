import os

import pytest

from betagraph import graphs
from betagraph.training import TrainConfig

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOY3_DIR = os.path.join(REPO_ROOT, "data", "toy3")


@pytest.fixture(scope="session")
def toy3_dir():
    return TOY3_DIR


@pytest.fixture(scope="session")
def small_ppm():
    """4 blocks x 40 nodes, one block held out; quick to train on."""
    g = graphs.gen_planted_partition(4, 40, 0.15, 0.01, 8, 3.0, seed=11)
    return graphs.zscore_features(g)


@pytest.fixture(scope="session")
def small_split(small_ppm):
    return graphs.make_split(small_ppm, ood_classes=(3,), seed=2)


def quick_config(**overrides):
    base = dict(seed=0, ood_classes=(3,), epochs_p1=25, epochs_p2=25,
                rounds=2, gamma=15.0, hidden_dim=16, embed_dim=8,
                reasoning_dim=16)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def tiny_graph():
    """30-node random graph for gradient checks."""
    return graphs.gen_planted_partition(3, 10, 0.3, 0.05, 4, 2.0, seed=7)
