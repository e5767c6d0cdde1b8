import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pabeam.core import build_grid, build_linear_array  # noqa: E402


@pytest.fixture(scope="session")
def default_array():
    return build_linear_array(128, 20e-3 / 128, 0.0)


@pytest.fixture(scope="session")
def default_grid():
    return build_grid(-10e-3, 10e-3, 0.0, 60e-3, 0.1e-3, 0.1e-3)


from pabeam.cli import ANALYSIS_DYNAMIC_RANGE_DB as ANALYSIS_DR  # noqa: E402


class Reconstructions:
    """Lazily reconstructed dB images of one noisy preset dataset, cached per method."""

    def __init__(self, preset, snr_db, geometry, grid, seed=1):
        from pabeam.forward import NoiseSpec, add_gaussian_noise, preset_phantom, simulate_frame

        self.phantom = preset_phantom(preset)
        self.geometry, self.grid = geometry, grid
        self.clean = simulate_frame(self.phantom, geometry)
        self.frame = add_gaussian_noise(self.clean, NoiseSpec(snr_db, seed))
        self._images = {}

    def __getitem__(self, method):
        from pabeam.beamform import reconstruct

        if method not in self._images:
            self._images[method] = reconstruct(self.frame, self.geometry, self.grid, method, ANALYSIS_DR)
        return self._images[method]


@pytest.fixture(scope="session")
def fig1(default_array, default_grid):
    return Reconstructions("fig1", 50.0, default_array, default_grid)


@pytest.fixture(scope="session")
def fig3(default_array, default_grid):
    return Reconstructions("fig3", 10.0, default_array, default_grid)


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(label, ok, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
