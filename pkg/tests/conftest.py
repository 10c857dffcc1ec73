from pathlib import Path

import numpy as np
import pytest

from feminpaint.mesh import VertexSet, delaunay

DATA = Path(__file__).parent / "data"


def random_vertices(rng, width, height, n_mask, n_unknown=0):
    """Corners as unknown vertices plus random distinct mask/unknown pixels."""
    npix = width * height
    corners = np.unique([0, width - 1, npix - width, npix - 1])
    rest = np.setdiff1d(np.arange(npix), corners)
    pick = rng.choice(rest, n_mask + n_unknown, replace=False)
    return VertexSet.from_pixels(pick[:n_mask], np.concatenate([corners, pick[n_mask:]]), width)


def random_mesh(rng, width, height, n_mask, n_unknown=0):
    return delaunay(random_vertices(rng, width, height, n_mask, n_unknown))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
