from __future__ import annotations

import numpy as np
import pytest

from spectra.model import (
    PopulationModel,
    SpikeSet,
    attach_spikes,
    build_bulk_from_atoms,
    build_bulk_from_eigenvalues,
    spikes_from_sigma_g,
)
from spectra.stieltjes import FFunction, find_bulk_structure


def two_bulk_model(M: int = 400, N: int = 800) -> PopulationModel:
    """Two atoms (18 and 1) of equal weight with spikes pushing one of each to 35 and 4."""
    half = M // 2
    bulk = build_bulk_from_atoms([(18.0, half), (1.0, M - half)])
    spikes = spikes_from_sigma_g(bulk, [(0, 35.0), (half, 4.0)])
    return PopulationModel(bulk, spikes, N)


def null_model(M: int, N: int, ds=()) -> PopulationModel:
    """Identity population with spikes ``1 + d`` on the leading coordinates."""
    bulk = build_bulk_from_atoms([(1.0, M)])
    return PopulationModel(bulk, attach_spikes(bulk, [(k, d) for k, d in enumerate(ds)]), N)


def uniform_grid_model(M: int = 800, N: int = 1600, spike: float | None = 8.0) -> PopulationModel:
    """Midpoint discretization of the uniform law on [1, 3]."""
    values = 1.0 + 2.0 * (np.arange(1, M + 1) - 0.5) / M
    bulk = build_bulk_from_eigenvalues(values)
    spikes = spikes_from_sigma_g(bulk, [(0, spike)]) if spike else SpikeSet()
    return PopulationModel(bulk, spikes, N)


def bbp_location(d: float, c: float) -> float:
    return 1.0 + d + (1.0 + 1.0 / d) / c


def bbp_overlap(d: float, c: float) -> float:
    return (1.0 - 1.0 / (c * d * d)) / (1.0 + 1.0 / (c * d))


@pytest.fixture(scope="session")
def two_bulk():
    model = two_bulk_model()
    F = FFunction(model.bulk, model.c_N)
    return model, F, find_bulk_structure(F, model.N)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", {})
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
