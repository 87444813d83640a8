"""Runtime margins for the quantitative pressure estimates.

Each margin is (attained value) - (required bound), signed so that >= 0 means
the estimate holds.  Minima are taken over the eroded resolved support for the
semi-superharmonicity and non-degeneracy bounds; the gradient bound maxes over
all cells with one-sided differences toward the support edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySupport
from .grid import (ScalarField, gradient_norm_sq, laplacian,
                   max_gradient_magnitude, resolved_support_mask)
from .reaction import ReactionTerm, eval_g


@dataclass
class EstimateConfig:
    """Constants attached to the initial data and growth law.

    K bounds lap(P0) + G(P0) from below, L > K dominates K + sup(-P G'),
    c_lower bounds P0 + |grad P0|^2 on the support, C_upper bounds |grad P0|,
    r = m - 1.
    """

    K: float
    L: float
    c_lower: float
    C_upper: float
    r: float

    def __post_init__(self):
        if not (self.L > self.K > 0):
            raise ValueError("need L > K > 0")
        if self.c_lower <= 0 or self.C_upper <= 0 or self.r <= 0:
            raise ValueError("c_lower, C_upper and r must be positive")

    @property
    def alpha_weight(self) -> float:
        """Time offset 2/(K r + 2) entering the non-degeneracy bound."""
        return 2.0 / (self.K * self.r + 2.0)


@dataclass
class EstimateReport:
    t: float
    ab_margin: float
    grad_margin: float
    nondeg_margin: float

    def to_csv_row(self) -> str:
        return (f"{self.t:.17g},{self.ab_margin:.17g},"
                f"{self.grad_margin:.17g},{self.nondeg_margin:.17g}")


def config_from_initial(P0: ScalarField, G: ReactionTerm, m: float,
                        safety: float = 1.01) -> EstimateConfig:
    """Read K, L, c, C off the initial pressure (the constants are inputs in
    principle; this derives the tightest admissible ones from the data)."""
    r = m - 1.0
    mask = resolved_support_mask(P0, erode=1)
    if not mask.any():
        raise EmptySupport("initial pressure has no eroded support")
    lapG = laplacian(P0).values + eval_g(G, np.clip(P0.values, 0, G.p_cap), 0)
    K = max(1e-6, -float(lapG[mask].min())) * safety
    drift = _drift_sup(G)
    L = K + drift + 1e-6
    gg = gradient_norm_sq(P0)
    c = float((P0.values + gg)[resolved_support_mask(P0, erode=0)].min()) / safety
    C = max_gradient_magnitude(P0) * safety
    return EstimateConfig(K=K, L=L, c_lower=max(c, 1e-12), C_upper=C, r=r)


def _drift_sup(G: ReactionTerm, samples: int = 512) -> float:
    P = np.linspace(G.p_cap * 1e-6, G.p_cap, samples)
    return float(np.max(-P * eval_g(G, P, 1)))


def validate_config(cfg: EstimateConfig, P0: ScalarField, G: ReactionTerm,
                    tol: float = 1e-9) -> None:
    """The estimates are conditional on the initial hypotheses; running them on
    non-conforming data is a configuration error."""
    mask = resolved_support_mask(P0, erode=1)
    lapG = laplacian(P0).values + eval_g(G, np.clip(P0.values, 0, G.p_cap), 0)
    if float(lapG[mask].min()) < -cfg.K - tol:
        raise ValueError("initial data violates lap(P0)+G(P0) >= -K")
    gg = gradient_norm_sq(P0)
    if float((P0.values + gg)[resolved_support_mask(P0)].min()) < cfg.c_lower - tol:
        raise ValueError("initial data violates P0+|grad P0|^2 >= c on the support")
    if max_gradient_magnitude(P0) > cfg.C_upper + tol:
        raise ValueError("initial data violates |grad P0| <= C")
    if _drift_sup(G) > cfg.L - cfg.K + tol:
        raise ValueError("sup of -P G' exceeds L - K")


def ab_required_bound(cfg: EstimateConfig, t: float) -> float:
    """Lower bound -K/(1+rKt) required of lap(P)+G(P) at time t."""
    return -cfg.K / (1.0 + cfg.r * cfg.K * t)


def aronson_benilan_margin(P: ScalarField, G: ReactionTerm, cfg: EstimateConfig,
                           t: float, erode: int = 2) -> float:
    """min over the eroded support of lap(P) + G(P) + K/(1+rKt).

    Two erosions keep the Laplacian stencil a full cell behind the resolved
    edge; at depth one the stencil straddles the front corner and the margin
    degrades under refinement instead of stabilizing.
    """
    mask = resolved_support_mask(P, erode=erode)
    if not mask.any():
        raise EmptySupport("no eroded support cells")
    lap = laplacian(P).values
    g = eval_g(G, np.clip(P.values, 0, G.p_cap), 0)
    return float((lap + g - ab_required_bound(cfg, t))[mask].min())


def gradient_bound_margin(P: ScalarField, cfg: EstimateConfig, G0: float,
                          t: float) -> float:
    """C e^(r G(0) t) minus the largest one-sided gradient magnitude."""
    return cfg.C_upper * math.exp(cfg.r * G0 * t) - max_gradient_magnitude(P)


def nondegeneracy_margin(P: ScalarField, G: ReactionTerm, cfg: EstimateConfig,
                         t: float, erode: int = 2) -> float:
    """min over the eroded support of LHS - RHS for the lower bound

        [1 + (t+a) r G(P)] P + (t+a)(1+r/2) |grad P|^2 >= c/(Kr+2) e^(-rLt),

    with a = 2/(Kr+2) (erosion depth as in the semi-superharmonic margin)."""
    mask = resolved_support_mask(P, erode=erode)
    if not mask.any():
        raise EmptySupport("no eroded support cells")
    a = cfg.alpha_weight
    g = eval_g(G, np.clip(P.values, 0, G.p_cap), 0)
    lhs = (1.0 + (t + a) * cfg.r * g) * P.values + (t + a) * (1.0 + cfg.r / 2.0) * gradient_norm_sq(P)
    rhs = cfg.c_lower / (cfg.K * cfg.r + 2.0) * math.exp(-cfg.r * cfg.L * t)
    return float((lhs - rhs)[mask].min())


def report(P: ScalarField, G: ReactionTerm, cfg: EstimateConfig, t: float) -> EstimateReport:
    return EstimateReport(
        t=t,
        ab_margin=aronson_benilan_margin(P, G, cfg, t),
        grad_margin=gradient_bound_margin(P, cfg, G.g0(), t),
        nondeg_margin=nondegeneracy_margin(P, G, cfg, t),
    )


def boundary_decay_exponent(P: ScalarField, n_rays: int = 8, n_cells: int = 8) -> float:
    """Median fitted exponent of P against distance to the support edge.

    Along rays from the support centroid, take the last n_cells resolved cells,
    estimate the edge by linear extrapolation of the outermost pair, and fit
    log P against log(distance).  Linear boundary degeneracy gives ~1.
    """
    if P.grid.dim != 2:
        raise ValueError("ray fitting is 2-D only")
    mask = resolved_support_mask(P)
    if not mask.any():
        raise EmptySupport("empty support")
    h = P.grid.h
    ci, cj = (np.argwhere(mask).mean(axis=0)).round().astype(int)
    exps = []
    for k in range(n_rays):
        th = 2.0 * math.pi * k / n_rays
        di, dj = math.cos(th), math.sin(th)
        samples = []
        for s in range(1, max(P.grid.shape)):
            i, j = int(round(ci + s * di)), int(round(cj + s * dj))
            if not (0 <= i < mask.shape[0] and 0 <= j < mask.shape[1]) or not mask[i, j]:
                break
            samples.append((s * h, P.values[i, j]))
        if len(samples) < n_cells + 1:
            continue
        arc = np.array(samples[-(n_cells + 1):])
        slope = max((arc[-2, 1] - arc[-1, 1]) / (arc[-1, 0] - arc[-2, 0]), 1e-300)
        edge = arc[-1, 0] + arc[-1, 1] / slope
        d = edge - arc[:, 0]
        vals = arc[:, 1]
        good = (d > 0) & (vals > 0)
        if good.sum() < 4:
            continue
        lx, ly = np.log(d[good]), np.log(vals[good])
        lx = lx - lx.mean()
        spread = float(lx @ lx)
        if spread < 1e-20:  # degenerate ray: all fitted distances collapse
            continue
        exps.append(float(lx @ (ly - ly.mean()) / spread))
    if not exps:
        raise EmptySupport("no usable rays for the decay fit")
    return float(np.median(exps))
