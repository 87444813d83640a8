"""Time-step kernels for the density-form reaction-diffusion update.

The numba kernels handle the built-in growth laws; custom laws fall back to a
vectorized numpy step.  Set FBLAB_NO_NUMBA=1 to force the numpy path; both
paths evaluate the same closed forms (they can drift by an ULP per step where
numpy's SIMD pow and libm pow disagree, but each path is deterministic).
"""

from __future__ import annotations

import os

import numpy as np

from .reaction import KIND_CONSTANT, KIND_FISHER, KIND_TUMOR, ReactionTerm, eval_g

_USE_NUMBA = os.environ.get("FBLAB_NO_NUMBA", "") != "1"

if _USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        _USE_NUMBA = False


def _rate(G: ReactionTerm, u: np.ndarray, P: np.ndarray) -> np.ndarray:
    # built-ins use the closed form directly (stepping may transiently
    # overshoot P_H; the cap invariant is checked at the simulate level)
    if G.kind == KIND_CONSTANT:
        return np.full_like(u, G.p1)
    if G.kind == KIND_TUMOR:
        return G.p1 - P
    if G.kind == KIND_FISHER:
        return G.p1 - u
    return eval_g(G, np.clip(P, 0.0, G.p_cap), 0)


def numpy_step(u: np.ndarray, m: float, dt: float, h: float, G: ReactionTerm):
    """One forward-Euler step; returns (u_new, clipped_mass)."""
    r = m - 1.0
    w = u**m
    lap = np.zeros_like(u)
    if u.ndim == 1:
        lap[1:-1] = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / h**2
    else:
        lap[1:-1, 1:-1] = (
            w[2:, 1:-1] + w[:-2, 1:-1] + w[1:-1, 2:] + w[1:-1, :-2] - 4.0 * w[1:-1, 1:-1]
        ) / h**2
    P = m / r * u**r
    un = u + dt * (lap + u * _rate(G, u, P))
    if u.ndim == 1:
        un[0] = un[-1] = 0.0
    else:
        un[0, :] = un[-1, :] = un[:, 0] = un[:, -1] = 0.0
    clipped = float(-un[un < 0].sum())
    np.maximum(un, 0.0, out=un)
    return un, clipped


if _USE_NUMBA:

    @numba.njit(cache=True)
    def _steps_2d(u, m, dt, h, nsteps, kind, p1):  # pragma: no cover - jit
        n1, n2 = u.shape
        r = m - 1.0
        w = np.empty_like(u)
        un = np.empty_like(u)
        for _ in range(nsteps):
            for i in range(n1):
                for j in range(n2):
                    w[i, j] = u[i, j] ** m
                    un[i, j] = 0.0
            for i in range(1, n1 - 1):
                for j in range(1, n2 - 1):
                    lap = (w[i + 1, j] + w[i - 1, j] + w[i, j + 1] + w[i, j - 1]
                           - 4.0 * w[i, j]) / (h * h)
                    if kind == 0:
                        g = p1
                    elif kind == 1:
                        g = p1 - m / r * u[i, j] ** r
                    else:
                        g = p1 - u[i, j]
                    val = u[i, j] + dt * (lap + u[i, j] * g)
                    if val < 0.0:
                        val = 0.0
                    un[i, j] = val
            u, un = un, u
        return u

    @numba.njit(cache=True)
    def _steps_1d(u, m, dt, h, nsteps, kind, p1):  # pragma: no cover - jit
        n = u.size
        r = m - 1.0
        w = np.empty_like(u)
        un = np.empty_like(u)
        for _ in range(nsteps):
            for i in range(n):
                w[i] = u[i] ** m
                un[i] = 0.0
            for i in range(1, n - 1):
                lap = (w[i + 1] + w[i - 1] - 2.0 * w[i]) / (h * h)
                if kind == 0:
                    g = p1
                elif kind == 1:
                    g = p1 - m / r * u[i] ** r
                else:
                    g = p1 - u[i]
                val = u[i] + dt * (lap + u[i] * g)
                if val < 0.0:
                    val = 0.0
                un[i] = val
            u, un = un, u
        return u


def run_steps(u: np.ndarray, m: float, dt: float, h: float, nsteps: int,
              G: ReactionTerm) -> np.ndarray:
    """Advance nsteps forward-Euler steps with a fixed dt (no checks)."""
    fast = _USE_NUMBA and G.kind in (KIND_CONSTANT, KIND_TUMOR, KIND_FISHER)
    if fast:
        fn = _steps_1d if u.ndim == 1 else _steps_2d
        return fn(u.copy(), m, dt, h, nsteps, G.kind, G.p1)
    for _ in range(nsteps):
        u, _ = numpy_step(u, m, dt, h, G)
    return u
