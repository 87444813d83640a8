"""Shared session fixtures for the expensive simulation runs."""

import numpy as np
import pytest

from fblab import counterexamples as cx
from fblab import estimates, pme
from fblab.grid import Grid, ScalarField
from fblab.reaction import constant, tumor


def tumor_cap_run(cells: int):
    """Growth-law run used by the preservation, estimate and decay criteria:
    quadratic-cap pressure, P_M = 1 tumor law, m = 2, horizon 0.5."""
    grid = Grid(2, 2.4, cells)
    X, Y = grid.meshgrid()
    P0 = ScalarField(grid, np.maximum(0.5 * (1.0 - X**2 - Y**2), 0.0))
    G = tumor(P_M=1.0, p_cap=4.0)
    m = 2.0
    cfg = estimates.config_from_initial(P0, G, m)
    traj = pme.simulate(pme.density_of_pressure(P0, m), m, G, T=0.5,
                        cfl=0.45, snapshot_dt=0.05, p_cap_check=4.0)
    return dict(grid=grid, P0=P0, G=G, m=m, cfg=cfg, traj=traj)


@pytest.fixture(scope="session")
def tumor_run():
    return tumor_cap_run(257)


@pytest.fixture(scope="session")
def tumor_run_fine():
    return tumor_cap_run(513)


@pytest.fixture(scope="session")
def cex_runs():
    """Counterexample runs for the four lost indices plus the preserved-index
    control, all through the same pipeline.

    The loss is a transient whose width varies by family (the log case peaks
    near t ~ 1e-4 before the field re-concavifies), so the snapshot cadence
    is chosen per family to resolve it.
    """
    G = constant(1.0)
    schedule = {0.0: (0.01, 400), 0.25: (0.05, 20), 0.75: (0.05, 100), 1.0: (0.05, 100)}
    out = {}
    for alpha, (T, snaps) in schedule.items():
        params = cx.choose_params(alpha, 2.0, G)
        out[alpha] = (params, cx.run_counterexample(params, G, T=T, cells=257,
                                                    snapshots=snaps))
    out["control"] = (None, cx.control_run(2.0, G, T=0.05, cells=257, snapshots=100))
    return out
