import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gclbench.graph import make_graph
from gclbench.sessions import plan_ncil
from gclbench.synth import SynthConfig, synth_tag

TESTKIT_CFG = SynthConfig(num_classes=6, nodes_per_class=50, feature_dim=16,
                          class_sep=3.0, intra_p=0.2, inter_p=0.02, seed=1)


@pytest.fixture(scope="session")
def testkit_graph():
    """Separable 6-class graph used across the suite (3 sessions x 2 classes)."""
    return synth_tag(TESTKIT_CFG)


@pytest.fixture(scope="session")
def testkit_plan(testkit_graph):
    return plan_ncil(testkit_graph, classes_per_session=2, num_sessions=3,
                     shots=30, test_cap=500, seed=7)


@pytest.fixture()
def path_graph():
    """0 - 1 - 2 path with distinct features."""
    feats = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=np.float32)
    return make_graph(feats, ["a", "b", "c"], np.array([0, 1, 0]),
                      ["left", "right"], np.array([[0, 1], [1, 2]]))


@pytest.fixture()
def two_node_graph():
    feats = np.array([[1.0], [0.0]], dtype=np.float32)
    return make_graph(feats, ["x", "y"], np.array([0, 1]),
                      ["c0", "c1"], np.array([[0, 1]]))


@pytest.fixture()
def isolated_node_graph():
    feats = np.array([[2.0, 3.0]], dtype=np.float32)
    return make_graph(feats, ["solo"], np.array([0]), ["only"], np.zeros((0, 2), np.int64))
