import numpy as np
import pytest

from pvem.geometry import generate_hexagonal_mesh, generate_square_mesh, generate_voronoi_lloyd_mesh

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def meshes():
    return {
        "square": generate_square_mesh(3),
        "voronoi": generate_voronoi_lloyd_mesh(12, 30, 1),
        "hex": generate_hexagonal_mesh(3),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
