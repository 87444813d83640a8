"""Stiff-pressure free-boundary problem: nonlinear elliptic solves on a
level-set domain, front motion at normal speed |grad P|, and the cone-domain
sharpness probe.

The elliptic problem -lap(P) = G(P) in {phi < 0}, P = 0 on the boundary, is
discretized with a cut-cell 5-point stencil (Shortley-Weller: first-order
Dirichlet interpolation along cut links) and solved by Picard iteration from
P = 0; G non-increasing with G(0) > 0 makes the iteration monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import EmptyDomain, FrontCfl, NoConvergence, PointOutsideDomain, SupportHitBoundary
from .grid import Grid, ScalarField
from .reaction import ReactionTerm, eval_g

PICARD_CAP = 500
THETA_FLOOR = 1e-6


@dataclass
class HsDomain:
    """Level-set description of the wetted region: phi < 0 inside."""

    phi: ScalarField
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    def inside(self) -> np.ndarray:
        return self.phi.values < 0.0

    def assert_valid(self) -> None:
        mask = self.inside()
        if not mask.any():
            raise EmptyDomain("level set has no interior cells")
        edge = np.zeros_like(mask)
        edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
        if (mask & edge).any():
            raise SupportHitBoundary("domain touches the grid frame")


@dataclass
class HsSolution:
    domain: HsDomain
    P: ScalarField
    picard_iters: int
    residual: float
    residual_history: list[float] = field(default_factory=list)


def disk_domain(grid: Grid, radius: float, center=(0.0, 0.0)) -> HsDomain:
    X, Y = grid.meshgrid()
    phi = np.hypot(X - center[0], Y - center[1]) - radius
    return HsDomain(ScalarField(grid, phi, 0.0))


def ellipse_domain(grid: Grid, rx: float, ry: float) -> HsDomain:
    X, Y = grid.meshgrid()
    # scaled implicit function redistanced to an approximate SDF
    phi = np.sqrt((X / rx) ** 2 + (Y / ry) ** 2) - 1.0
    dom = HsDomain(ScalarField(grid, phi * min(rx, ry), 0.0))
    return reinitialize(dom)


def _assemble(phi: np.ndarray, h: float, inside: np.ndarray):
    """Cut-cell 5-point operator rows for -lap with Dirichlet 0 on {phi = 0}."""
    n_in = int(inside.sum())
    index = -np.ones(phi.shape, dtype=np.int64)
    index[inside] = np.arange(n_in)
    rows, cols, vals = [], [], []
    cells = np.argwhere(inside)
    uncut = np.ones(n_in, dtype=bool)
    for k, (i, j) in enumerate(cells):
        diag = 0.0
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = i + di, j + dj
            if inside[ni, nj]:
                rows.append(k)
                cols.append(index[ni, nj])
                vals.append(-1.0 / h**2)
                diag += 1.0 / h**2
            else:
                # boundary crosses this link at fraction theta from (i, j)
                theta = max(phi[i, j] / (phi[i, j] - phi[ni, nj]), THETA_FLOOR)
                diag += 1.0 / (theta * h**2)
                uncut[k] = False
        rows.append(k)
        cols.append(k)
        vals.append(diag)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n_in, n_in))
    return A, index, cells, uncut


def solve_pressure(domain: HsDomain, G: ReactionTerm, tol: float = 1e-10,
                   max_iter: int = PICARD_CAP) -> HsSolution:
    """Picard iteration -lap P_{k+1} = G(P_k) from P_0 = 0 on {phi < 0}."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if G.g0() <= 0:
        raise ValueError("stiff-pressure solve needs G(0) > 0")
    probe = np.linspace(0.0, G.p_cap, 9)
    if np.any(np.diff(eval_g(G, probe, 0)) > 1e-12):
        raise ValueError("stiff-pressure solve needs a non-increasing G")
    domain.assert_valid()
    phi, h = domain.phi.values, domain.grid.h
    inside = domain.inside()
    A, index, cells, uncut = _assemble(phi, h, inside)
    solve = spla.factorized(A.tocsc())

    p = np.zeros(int(inside.sum()))
    history = []
    iters = 0
    for iters in range(1, max_iter + 1):
        rhs = eval_g(G, np.clip(p, 0.0, G.p_cap), 0)
        p_new = solve(rhs)
        delta = float(np.max(np.abs(p_new - p)))
        history.append(delta)
        p = p_new
        if delta < tol:
            break
    else:
        raise NoConvergence(max_iter, history[-1])

    P = np.zeros_like(phi)
    P[inside] = p
    # residual on cells whose full 5-point stencil is interior (uncut)
    res = A @ p - eval_g(G, np.clip(p, 0.0, G.p_cap), 0)
    residual = float(np.max(np.abs(res[uncut]))) if uncut.any() else float(np.max(np.abs(res)))
    return HsSolution(domain, ScalarField(domain.grid, P), iters, residual, history)


def _interior_speed(sol: HsSolution) -> np.ndarray:
    """Normal speed |grad P| seen from the interior side.

    The steepest one-sided difference per cell reproduces the interior slope
    both at front cells and at their first exterior neighbors (P = 0 outside
    makes the one-sided quotient the meaningful gradient), and is exactly
    symmetric under grid reflections.  Cells further outside get 0, which is
    enough because the front CFL limits motion to one cell per step and the
    band refreshes after every solve.
    """
    P, h = sol.P.values, sol.domain.grid.h
    inside = sol.domain.inside()
    v = np.zeros_like(P)
    v[:-1, :] = np.maximum(v[:-1, :], (P[1:, :] - P[:-1, :]) / h)
    v[1:, :] = np.maximum(v[1:, :], (P[:-1, :] - P[1:, :]) / h)
    v[:, :-1] = np.maximum(v[:, :-1], (P[:, 1:] - P[:, :-1]) / h)
    v[:, 1:] = np.maximum(v[:, 1:], (P[:, :-1] - P[:, 1:]) / h)
    # exterior front cells only see a cut link; push the interior value
    # outward by symmetric max-dilations.  Two cells suffice: the front CFL
    # bounds the crossing motion by one cell per step.
    ext = np.where(inside, v, 0.0)
    for _ in range(2):
        d = ext.copy()
        d[:-1, :] = np.maximum(d[:-1, :], ext[1:, :])
        d[1:, :] = np.maximum(d[1:, :], ext[:-1, :])
        d[:, :-1] = np.maximum(d[:, :-1], ext[:, 1:])
        d[:, 1:] = np.maximum(d[:, 1:], ext[:, :-1])
        ext = np.where(inside, ext, d)
    return ext


def advance_front(sol: HsSolution, dt: float) -> HsDomain:
    """One upwind advection step of phi at normal speed V = |grad P| >= 0."""
    grid = sol.domain.grid
    h = grid.h
    V = _interior_speed(sol)
    if dt * float(V.max()) > h * (1 + 1e-12):
        raise FrontCfl(f"dt*max|grad P| = {dt * V.max():.3e} exceeds h = {h:.3e}")
    phi = sol.domain.phi.values
    # Godunov upwind gradient magnitude for outward motion (V >= 0)
    dmx = np.zeros_like(phi)
    dpx = np.zeros_like(phi)
    dmy = np.zeros_like(phi)
    dpy = np.zeros_like(phi)
    dmx[1:, :] = (phi[1:, :] - phi[:-1, :]) / h
    dpx[:-1, :] = (phi[1:, :] - phi[:-1, :]) / h
    dmy[:, 1:] = (phi[:, 1:] - phi[:, :-1]) / h
    dpy[:, :-1] = (phi[:, 1:] - phi[:, :-1]) / h
    grad = np.sqrt(np.maximum(dmx, 0.0) ** 2 + np.minimum(dpx, 0.0) ** 2
                   + np.maximum(dmy, 0.0) ** 2 + np.minimum(dpy, 0.0) ** 2)
    new = HsDomain(ScalarField(grid, phi - dt * V * grad, 0.0), sol.domain.t + dt)
    new.assert_valid()
    return new


def reinitialize(domain: HsDomain) -> HsDomain:
    """Redistance phi to an approximate signed distance without moving the
    cell mask: signed Euclidean cell distances, corrected near the interface
    by linear sub-cell interpolation of the original phi."""
    phi = domain.phi.values
    h = domain.grid.h
    inside = phi < 0.0
    if not inside.any() or inside.all():
        raise EmptyDomain("cannot redistance a signless level set")
    d_out = ndimage.distance_transform_edt(~inside) * h
    d_in = ndimage.distance_transform_edt(inside) * h
    new = np.where(inside, -(d_in - 0.5 * h), d_out - 0.5 * h)
    # sub-cell correction on the band: phi / |grad phi| approximates distance
    px, py = np.gradient(phi, h)
    norm = np.maximum(np.hypot(px, py), 1e-12)
    band = np.abs(new) <= 1.5 * h
    new[band] = (phi / norm)[band]
    # keep the sign convention and the exact cell mask
    new[inside & (new >= 0)] = -0.25 * h
    new[~inside & (new <= 0)] = 0.25 * h
    return HsDomain(ScalarField(domain.grid, new, 0.0), domain.t)


@dataclass
class HsEvolution:
    """Front-tracking run: solved snapshots plus the exterior density record."""

    snapshots: list[tuple[float, HsSolution]]
    u_exterior: ScalarField


def evolve(domain: HsDomain, G: ReactionTerm, T: float, cfl: float = 0.9,
           snapshot_dt: float | None = None, reinit_every: int = 5,
           tol: float = 1e-10, u0: ScalarField | None = None) -> HsEvolution:
    """Alternate pressure solves and front advection steps up to time T.

    Outside the wetted region the density obeys u(t) = e^{G(0)(t-s)} u(s);
    cells swallowed by the front are set to 1.
    """
    grid = domain.grid
    if u0 is None:
        u0 = ScalarField(grid, np.where(domain.inside(), 1.0, 0.0), 0.0)
    u = u0.values.copy()
    if snapshot_dt is None:
        snapshot_dt = T / 6.0
    snaps = []
    t = 0.0
    sol = solve_pressure(domain, G, tol)
    snaps.append((0.0, sol))
    next_snap = snapshot_dt
    steps = 0
    g0 = G.g0()
    while t < T - 1e-12:
        vmax = float(_interior_speed(sol).max())
        dt = cfl * grid.h / max(vmax, 1e-12)
        dt = min(dt, T - t, next_snap - t if next_snap > t else dt)
        domain = advance_front(sol, dt)
        steps += 1
        if steps % reinit_every == 0:
            domain = reinitialize(domain)
        t += dt
        inside = domain.inside()
        u = np.where(inside, 1.0, u * math.exp(g0 * dt))
        sol = solve_pressure(domain, G, tol)
        sol = HsSolution(HsDomain(domain.phi, t), sol.P, sol.picard_iters,
                         sol.residual, sol.residual_history)
        if t >= next_snap - 1e-12:
            snaps.append((t, sol))
            next_snap += snapshot_dt
    if snaps[-1][0] < T - 1e-12:
        snaps.append((t, sol))
    return HsEvolution(snaps, ScalarField(grid, u, 0.0))


# ---------------------------------------------------------------------------
# cone-ball domains and the sharp-index probe

def cone_domain(grid: Grid, k: int, a: float) -> HsDomain:
    """Smooth convex domain between the cone-ball intersection and B_1.

    The sector {x2 > a |x1|} cap B_1 is approximated from outside by rounding
    the vertex: the two signed line distances are blended by a scaled
    log-sum-exp whose zero set passes through the origin with curvature radius
    1/k.  Larger k gives smaller domains (nested) converging to the sector.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if a <= 0:
        raise ValueError("cone slope a must be positive")
    X, Y = grid.meshgrid()
    s = math.sqrt(1.0 + a * a)
    lp = (a * X - Y) / s
    lm = (-a * X - Y) / s
    eps = a * a / (k * s)  # vertex rounding radius exactly 1/k
    mx = np.maximum(lp, lm)
    cone = mx + eps * np.log(0.5 * (np.exp((lp - mx) / eps) + np.exp((lm - mx) / eps)))
    phi = np.maximum(cone, np.hypot(X, Y) - 1.0)
    return HsDomain(ScalarField(grid, phi, 0.0))


def interpolate(P: ScalarField, x: float, y: float) -> float:
    """Bilinear interpolation at a physical point."""
    g = P.grid
    fi = (x + g.extent) / g.h - 0.5
    fj = (y + g.extent) / g.h - 0.5
    i0, j0 = int(np.floor(fi)), int(np.floor(fj))
    if not (0 <= i0 < g.cells - 1 and 0 <= j0 < g.cells - 1):
        raise PointOutsideDomain(f"point ({x}, {y}) outside the grid")
    si, sj = fi - i0, fj - j0
    v = P.values
    return float((1 - si) * (1 - sj) * v[i0, j0] + si * (1 - sj) * v[i0 + 1, j0]
                 + (1 - si) * sj * v[i0, j0 + 1] + si * sj * v[i0 + 1, j0 + 1])


@dataclass
class ProbeRow:
    alpha: float
    k: int
    t: float
    lhs: float
    rhs: float
    violated: bool

    def to_csv_row(self) -> str:
        return (f"{self.alpha:.17g},{self.k},{self.t:.17g},{self.lhs:.17g},"
                f"{self.rhs:.17g},{int(self.violated)}")


@dataclass
class ProbeResult:
    rows: list[ProbeRow]
    barrier_excess: float          # max of P - (x2^2 - a^2 x1^2) over sector cells
    solution: HsSolution

    def any_violation(self) -> bool:
        return any(r.violated for r in self.rows)


def sharp_index_probe(G: ReactionTerm, a: float, k: int, alpha: float,
                      ts, grid: Grid, tol: float = 1e-6) -> ProbeResult:
    """Ray-inequality test P^alpha(t z) >= t P^alpha(z) at z = e_2/2.

    Failure of the inequality for small t is the sharpness mechanism for
    indices above 1/2 near the cone vertex.  Also reports the worst excess of
    P over the vertex barrier x2^2 - a^2 x1^2 on the sector cells.
    """
    g0 = G.g0()
    needed = math.sqrt((2.0 + g0) / (2.0 * grid.dim))
    if a < needed - 1e-12:
        raise ValueError(f"barrier condition needs a >= {needed:.6f}, got {a}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    dom = cone_domain(grid, k, a)
    sol = solve_pressure(dom, G)
    z = (0.0, 0.5)
    if interpolate(ScalarField(grid, (dom.phi.values < 0).astype(float)), *z) < 0.5:
        raise PointOutsideDomain("probe anchor z = e2/2 is not inside the domain")
    Pz = max(interpolate(sol.P, *z), 0.0)
    rows = []
    for t in ts:
        if not 0.0 < t <= 1.0:
            raise ValueError("ray parameters must lie in (0, 1]")
        lhs = max(interpolate(sol.P, z[0] * t, z[1] * t), 0.0) ** alpha
        rhs = t * Pz**alpha
        rows.append(ProbeRow(alpha, k, t, lhs, rhs, lhs < rhs - tol))
    X, Y = grid.meshgrid()
    sector = (Y > a * np.abs(X)) & (np.hypot(X, Y) < 1.0)
    barrier = Y**2 - a**2 * X**2
    excess = float((sol.P.values - barrier)[sector].max()) if sector.any() else float("nan")
    return ProbeResult(rows, excess, sol)
