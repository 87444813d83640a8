"""Power transforms and concavity verdicts for nonnegative fields.

A field P is alpha-concave when P^alpha is concave on its support (log P for
alpha = 0).  Two detectors must agree for a verdict:

* Hessian route.  For alpha > 0, D^2(P^alpha) = alpha P^(alpha-1) M with
  M := D^2 P - (1-alpha) (grad P)(grad P)^T / P, and for alpha = 0 the log
  Hessian is M/P with the same M at alpha = 0.  M has the sign structure of
  the transformed Hessian but differentiates P itself, which stays Lipschitz
  at the free boundary where P^alpha does not; all eigenvalue thresholds are
  applied to M.  (At alpha = 1/2 this is the classic P_ij - P_i P_j / (2P)
  form.)
* Midpoint route.  Random support pairs with exact cell midpoints, tested in
  pressure units: P(mid) >= T^-1((T(x)+T(y))/2) - tol with T the transform.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptySupport, NotConcaveAtLo
from .grid import (ScalarField, hessian_at, max_gradient_magnitude,
                   resolved_support_mask, second_difference_fields, support_mask)


class Verdict(enum.Enum):
    CONCAVE = "Concave"
    NOT_CONCAVE = "NotConcave"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ConcavityReport:
    alpha: float
    lambda1_max: float              # largest eigenvalue of the M form on the eroded support
    argmax_cell: tuple
    midpoint_violations: int
    pair_samples: int
    verdict: Verdict
    tol_used: float
    worst_midpoint_deficit: float = 0.0

    def to_csv_row(self) -> str:
        i = self.argmax_cell
        j = i[1] if len(i) > 1 else 0
        return (f"{self.alpha:.17g},{self.lambda1_max:.17g},{i[0]},{j},"
                f"{self.midpoint_violations},{self.verdict.value},{self.tol_used:.17g}")


def power_transform(P: ScalarField, alpha: float) -> ScalarField:
    """Cellwise P^alpha on the support (log P for alpha = 0, with a -inf
    sentinel off-support that downstream ops must mask)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if np.any(P.values < 0):
        raise ValueError("power transform needs a nonnegative field")
    on = P.values > P.support_threshold
    if alpha == 0.0:
        out = np.full_like(P.values, -np.inf)
        out[on] = np.log(P.values[on])
    else:
        out = np.zeros_like(P.values)
        out[on] = P.values[on] ** alpha
    return ScalarField(P.grid, out, support_threshold=P.support_threshold if alpha > 0 else 0.0)


def concavity_form(P: ScalarField, alpha: float):
    """Largest-eigenvalue field of M = D^2 P - (1-alpha) grad P grad P^T / P.

    Frame cells are NaN.  In 1-D the form is the scalar second difference
    minus the weighted squared slope.
    """
    h = P.grid.h
    # off-support cells produce inf/NaN garbage here; callers mask them, the
    # errstate guard just keeps the warnings out
    safe = np.maximum(P.values, 1e-300)
    w = (1.0 - alpha) if alpha > 0 else 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        if P.grid.dim == 1:
            v = P.values
            d11 = np.full_like(v, np.nan)
            d11[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
            px = np.gradient(v, h)
            return d11 - w * px * px / safe
        d11, d12, d22 = second_difference_fields(P)
        px, py = np.gradient(P.values, h)
        m11 = d11 - w * px * px / safe
        m12 = d12 - w * px * py / safe
        m22 = d22 - w * py * py / safe
        return 0.5 * (m11 + m22) + np.sqrt(0.25 * (m11 - m22) ** 2 + m12**2)


def hessian_route_lambda1(P: ScalarField, alpha: float, cell: tuple) -> float:
    """Direct discrete Hessian of the transformed field at one cell (reference
    route; noisy near degenerate edges, used for interior cross-checks)."""
    return hessian_at(power_transform(P, alpha), cell).lambda_max


def _midpoint_pairs(mask: np.ndarray, pair_samples: int, rng: np.random.Generator):
    """Index pairs with equal parity per axis (exact cell midpoints), with the
    midpoint also on the mask."""
    idx = np.argwhere(mask)
    if len(idx) < 2:
        return np.empty((0, mask.ndim), int), np.empty((0, mask.ndim), int), np.empty((0, mask.ndim), int)
    picks_a, picks_b, picks_m = [], [], []
    need = pair_samples
    for _ in range(40):
        k = max(64, 2 * need)
        a = idx[rng.integers(0, len(idx), size=k)]
        b = idx[rng.integers(0, len(idx), size=k)]
        ok = ((a - b) % 2 == 0).all(axis=1) & (a != b).any(axis=1)
        a, b = a[ok], b[ok]
        mid = (a + b) // 2
        on = mask[tuple(mid.T)]
        a, b, mid = a[on], b[on], mid[on]
        take = min(need, len(a))
        picks_a.append(a[:take]); picks_b.append(b[:take]); picks_m.append(mid[:take])
        need -= take
        if need <= 0:
            break
    return (np.concatenate(picks_a), np.concatenate(picks_b), np.concatenate(picks_m))


def _midpoint_required(alpha: float, va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    """Pressure value the midpoint must reach: T^-1((T(a)+T(b))/2)."""
    if alpha == 0.0:
        return np.sqrt(va * vb)
    return (0.5 * (va**alpha + vb**alpha)) ** (1.0 / alpha)


def assess(P: ScalarField, alpha: float, pair_samples: int = 400,
           c_tol: float = 10.0, seed: int = 0) -> ConcavityReport:
    """Two-detector concavity verdict for P^alpha on the eroded support.

    tol_used = c_tol * h * max|grad P|; Concave needs the M-form eigenvalues
    under tol and zero midpoint violations, NotConcave needs an eigenvalue
    above 3 tol or a midpoint violation, anything else is Inconclusive.
    """
    if pair_samples < 100:
        raise ValueError("pair_samples must be at least 100")
    eroded = resolved_support_mask(P, erode=1)
    if not eroded.any():
        raise EmptySupport("no cells survive erosion of the resolved support")
    h = P.grid.h
    tol = c_tol * h * max_gradient_magnitude(P)

    lam = concavity_form(P, alpha)
    lam_masked = np.where(eroded, lam, -np.inf)
    argmax = np.unravel_index(int(np.nanargmax(lam_masked)), lam.shape)
    lam1 = float(lam_masked[argmax])

    rng = np.random.default_rng(seed)
    full = resolved_support_mask(P, erode=0)
    a, b, mid = _midpoint_pairs(full, pair_samples, rng)
    if len(a):
        va = P.values[tuple(a.T)]
        vb = P.values[tuple(b.T)]
        vm = P.values[tuple(mid.T)]
        deficit = _midpoint_required(alpha, va, vb) - vm
        violations = int(np.count_nonzero(deficit > tol))
        worst = float(deficit.max())
    else:
        violations, worst = 0, 0.0

    if lam1 <= tol and violations == 0:
        verdict = Verdict.CONCAVE
    elif lam1 > 3.0 * tol or violations > 0:
        verdict = Verdict.NOT_CONCAVE
    else:
        verdict = Verdict.INCONCLUSIVE
    return ConcavityReport(alpha, lam1, tuple(int(k) for k in argmax),
                           violations, len(a), verdict, tol, worst)


def sharp_index(P: ScalarField, lo: float = 0.0, hi: float = 1.0, iters: int = 6,
                pair_samples: int = 400, c_tol: float = 10.0, seed: int = 0) -> float:
    """Bisect for the largest alpha with a Concave verdict.

    Relies on index monotonicity (alpha-concave implies beta-concave for
    beta < alpha); only a Concave verdict moves the lower bracket.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("need 0 <= lo < hi <= 1")
    if assess(P, lo, pair_samples, c_tol, seed).verdict is not Verdict.CONCAVE:
        raise NotConcaveAtLo(f"verdict at alpha={lo} is not Concave")
    if assess(P, hi, pair_samples, c_tol, seed).verdict is Verdict.CONCAVE:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if assess(P, mid, pair_samples, c_tol, seed).verdict is Verdict.CONCAVE:
            lo = mid
        else:
            hi = mid
    return lo
