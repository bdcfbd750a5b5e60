import os

import numpy as np
import pytest

from rvbprep.geometry import build_cluster, constraint_graph
from rvbprep.hilbert import enumerate_basis, enumerate_maximal_covers, rvb_state

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "goldens")


def golden_path(*parts):
    path = os.path.join(GOLDEN_DIR, *parts)
    if not os.path.exists(path):
        pytest.fail("golden artifact %s is missing; regenerate the "
                    "production runs first" % os.path.join(*parts))
    return path


def read_csv(path):
    """Columns of a numeric CSV as {name: ndarray}; strings stay strings."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


@pytest.fixture(scope="session")
def cluster12():
    return build_cluster(2, 1)


@pytest.fixture(scope="session")
def basis12(cluster12):
    return enumerate_basis(constraint_graph(cluster12, 2.0))


@pytest.fixture(scope="session")
def covers12(cluster12):
    return enumerate_maximal_covers(cluster12)


@pytest.fixture(scope="session")
def rvb12(covers12, basis12):
    return rvb_state(covers12, basis12)


@pytest.fixture(scope="session")
def cluster24():
    return build_cluster(2, 2)


@pytest.fixture(scope="session")
def basis24(cluster24):
    return enumerate_basis(constraint_graph(cluster24, 2.0))


@pytest.fixture(scope="session")
def covers24(cluster24):
    return enumerate_maximal_covers(cluster24)
