"""Explicit time integration of the density-form equation  u_t = lap(u^m) + u G(P).

The scheme is forward Euler on the divergence-form update (discretely mass
conservative for G = 0), with a homogeneous Dirichlet frame and an abort if the
support ever touches that frame.  Pressure fields are derived on demand via
P = m/(m-1) u^(m-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import SupportHitBoundary, UnstableStep
from .grid import Grid, ScalarField
from .reaction import ReactionTerm, eval_g

CFL_EPS = 1e-300  # guards the vacuum state in the dt formula


@dataclass
class PmeState:
    """Density field, diffusion exponent and current time."""

    u: ScalarField
    m: float
    t: float = 0.0

    def __post_init__(self):
        if self.m <= 1:
            raise ValueError("slow diffusion requires m > 1")
        if np.any(self.u.values < 0):
            raise ValueError("density must be nonnegative")

    @property
    def r(self) -> float:
        return self.m - 1.0

    def mass(self) -> float:
        return float(self.u.values.sum()) * self.u.grid.h ** self.u.grid.dim


@dataclass
class Trajectory:
    """Snapshots of the derived pressure along a run."""

    snapshots: list[tuple[float, ScalarField]] = field(default_factory=list)
    dt_history: list[float] = field(default_factory=list)
    clipped_mass_history: list[float] = field(default_factory=list)

    def times(self) -> list[float]:
        return [t for t, _ in self.snapshots]

    def final(self) -> tuple[float, ScalarField]:
        return self.snapshots[-1]


def pressure_of(state: PmeState) -> ScalarField:
    """P = m/(m-1) u^(m-1), inheriting the support threshold scale."""
    P = state.m / state.r * state.u.values**state.r
    return ScalarField(state.u.grid, P)


def density_of_pressure(P: ScalarField, m: float) -> ScalarField:
    """Invert the pressure relation: u = ((m-1)/m P)^(1/(m-1))."""
    u = ((m - 1.0) / m * np.maximum(P.values, 0.0)) ** (1.0 / (m - 1.0))
    return ScalarField(P.grid, u)


def stable_dt(state: PmeState, G: ReactionTerm, cfl: float) -> float:
    """dt = cfl h^2 / (2N m max(u^(m-1)) + h^2 max|G| + eps)."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError("cfl must lie in (0, 1]")
    g = state.u.grid
    diff = 2.0 * g.dim * state.m * float(np.max(state.u.values**state.r))
    P = pressure_of(state).values
    gmax = float(np.max(np.abs(eval_g(G, np.clip(P, 0.0, G.p_cap), 0))))
    return cfl * g.h**2 / (diff + g.h**2 * gmax + CFL_EPS)


def _frame_touched(u: np.ndarray, threshold: float) -> bool:
    if u.ndim == 1:
        edge = max(u[0], u[-1], u[1], u[-2])
    else:
        edge = max(u[:2, :].max(), u[-2:, :].max(), u[:, :2].max(), u[:, -2:].max())
    return edge > threshold


def step(state: PmeState, G: ReactionTerm, dt: float) -> PmeState:
    """One forward-Euler update with positivity clipping and frame guards."""
    if dt > stable_dt(state, G, 1.0) * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability limit")
    if _frame_touched(state.u.values, state.u.support_threshold):
        raise SupportHitBoundary("support reached the outer grid frame")
    un, _clipped = _kernels.numpy_step(state.u.values, state.m, dt, state.u.grid.h, G)
    if not np.all(np.isfinite(un)):
        raise UnstableStep("non-finite values after step")
    return PmeState(state.u.with_values(un), state.m, state.t + dt)


def simulate(u0: ScalarField, m: float, G: ReactionTerm, T: float,
             cfl: float = 0.45, snapshot_dt: float | None = None,
             p_cap_check: float | None = None) -> Trajectory:
    """Run to time T, storing pressure snapshots every snapshot_dt.

    Steps are executed in fixed-dt chunks between snapshot times through the
    fast kernel; the first step of every chunk is replayed in numpy to log the
    clipped-mass budget.  Raises SupportHitBoundary / UnstableStep as in step().
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if np.any(u0.values < 0):
        raise ValueError("u0 must be nonnegative")
    if _frame_touched(u0.values, u0.support_threshold):
        raise SupportHitBoundary("initial support touches the outer grid frame")
    if snapshot_dt is None:
        snapshot_dt = T / 10.0

    state = PmeState(u0.copy(), m, 0.0)
    traj = Trajectory()
    traj.snapshots.append((0.0, pressure_of(state)))
    h = u0.grid.h
    next_snap = snapshot_dt
    while state.t < T - 1e-14:
        target = min(next_snap, T)
        dt_lim = stable_dt(state, G, cfl)
        nsteps = max(1, int(np.ceil((target - state.t) / dt_lim)))
        dt = (target - state.t) / nsteps
        # chunk the kernel between frame checks; the front moves well under one
        # cell per step so 64-step chunks stay safely behind the guard ring
        done = 0
        while done < nsteps:
            chunk = min(64, nsteps - done)
            _, clipped = _kernels.numpy_step(state.u.values, m, dt, h, G)
            traj.clipped_mass_history.append(clipped)
            un = _kernels.run_steps(state.u.values, m, dt, h, chunk, G)
            if not np.all(np.isfinite(un)):
                raise UnstableStep(f"non-finite values near t={state.t}")
            if _frame_touched(un, u0.support_threshold):
                raise SupportHitBoundary(f"support reached the grid frame near t={state.t}")
            state = PmeState(state.u.with_values(un), m, state.t + chunk * dt)
            done += chunk
        traj.dt_history.append(dt)
        if state.t >= next_snap - 1e-12:
            _store_snapshot(traj, state, p_cap_check)
            next_snap += snapshot_dt
    if traj.snapshots[-1][0] < T - 1e-12:
        _store_snapshot(traj, state, p_cap_check)
    return traj


def _store_snapshot(traj: Trajectory, state: PmeState, p_cap_check: float | None) -> None:
    P = pressure_of(state)
    if p_cap_check is not None:
        overshoot = P.values.max() - p_cap_check
        if overshoot > 1e-6 * p_cap_check:
            raise UnstableStep(f"pressure exceeded its cap by {overshoot:.3e} at t={state.t}")
    traj.snapshots.append((state.t, P))
