import sys

import numpy as np
import pytest

from spikedecon.model import GroundTruth, Psf, SamplingGrid, add_noise, synthesize
from spikedecon.metrics import min_separation


def draw_truth(rng, r=3, L=5, T=1.0, delta=0.15):
    while True:
        tau = rng.uniform(0, T, r)
        if min_separation(tau, T) >= delta:
            break
    A = np.exp(2j * np.pi * rng.random((r, L)))
    return GroundTruth(tau, A, T)


def make_instance(rng, psf, n=15, r=3, L=5, T=1.0, delta=0.15, snr=None):
    grid = SamplingGrid(n, T)
    truth = draw_truth(rng, r, L, T, delta)
    clean = synthesize(truth, psf, grid)
    if snr is None:
        return truth, grid, clean.Y, np.zeros_like(clean.Y)
    Y, Z = add_noise(clean.Y, snr, int(rng.integers(2**32)))
    return truth, grid, Y, Z


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def grid():
    return SamplingGrid(15, 1.0)


@pytest.fixture(params=["dirac", "gaussian"])
def psf(request):
    return Psf.dirac() if request.param == "dirac" else Psf.gaussian(0.1)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
