"""Growth laws G(P) and machine verification of the hypotheses placed on them.

Built-in kinds:
  tumor      G(P) = P_M - P
  fisher_kpp G(P) = u_M - ((m-1)/m)^(1/(m-1)) P^(1/(m-1))   (equals u_M - u)
  constant   G(P) = g0 > 0
  custom     tabulated callables for G, G', G''
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SingularDerivative

KIND_CONSTANT = 0
KIND_TUMOR = 1
KIND_FISHER = 2
KIND_CUSTOM = 3

_KIND_NAMES = {KIND_CONSTANT: "constant", KIND_TUMOR: "tumor",
               KIND_FISHER: "fisher_kpp", KIND_CUSTOM: "custom"}


@dataclass(frozen=True)
class ReactionTerm:
    """Immutable evaluator bundle for a growth law, capped at P_H."""

    kind: int
    p_cap: float
    p1: float = 0.0          # P_M (tumor), u_M (fisher), g0 (constant)
    p2: float = 0.0          # m (fisher only)
    fns: tuple = ()          # (g, gp, gpp) callables for custom

    def __post_init__(self):
        if self.p_cap <= 0:
            raise ValueError("evaluation cap P_H must be positive")

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES[self.kind]

    def g0(self) -> float:
        """G(0); the Hele-Shaw problems require it positive."""
        return eval_g(self, 0.0, 0)

    def __call__(self, P, order: int = 0):
        return eval_g(self, P, order)


def tumor(P_M: float, p_cap: float | None = None) -> ReactionTerm:
    return ReactionTerm(KIND_TUMOR, p_cap if p_cap is not None else P_M, P_M)


def constant(g0: float, p_cap: float = 1.0) -> ReactionTerm:
    if g0 <= 0:
        raise ValueError("constant growth rate must be positive")
    return ReactionTerm(KIND_CONSTANT, p_cap, g0)


def fisher_kpp(u_M: float, m: float, p_cap: float | None = None) -> ReactionTerm:
    if m <= 1:
        raise ValueError("fisher_kpp needs m > 1")
    if p_cap is None:
        # pressure at which growth stops: the pressure of density u_M
        p_cap = m / (m - 1.0) * u_M ** (m - 1.0)
    return ReactionTerm(KIND_FISHER, p_cap, u_M, m)


def custom(g, gp, gpp, p_cap: float) -> ReactionTerm:
    return ReactionTerm(KIND_CUSTOM, p_cap, fns=(g, gp, gpp))


def eval_g(G: ReactionTerm, P, order: int = 0):
    """G(P), G'(P) or G''(P).  Scalar or ndarray P in [0, P_H]."""
    arr = np.asarray(P, dtype=float)
    scalar = arr.ndim == 0
    if np.any(arr < 0) or np.any(arr > G.p_cap * (1 + 1e-12)):
        raise DomainError(f"P outside [0, {G.p_cap}]")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")

    if G.kind == KIND_CONSTANT:
        out = np.full_like(arr, G.p1 if order == 0 else 0.0)
    elif G.kind == KIND_TUMOR:
        if order == 0:
            out = G.p1 - arr
        elif order == 1:
            out = np.full_like(arr, -1.0)
        else:
            out = np.zeros_like(arr)
    elif G.kind == KIND_FISHER:
        m = G.p2
        e = 1.0 / (m - 1.0)
        coef = ((m - 1.0) / m) ** e
        if order == 0:
            out = G.p1 - coef * arr**e
        else:
            if e - order < 0 and np.any(arr == 0):
                raise SingularDerivative(
                    f"fisher_kpp derivative of order {order} is singular at P=0 for m={m}")
            if order == 1:
                out = -coef * e * arr ** (e - 1.0)
            else:
                out = -coef * e * (e - 1.0) * arr ** (e - 2.0)
    else:
        out = np.asarray(G.fns[order](arr), dtype=float)
    return float(out) if scalar else out


@dataclass
class ConditionCheck:
    name: str
    satisfied: bool
    worst_margin: float      # attained sup (for <=-type) or inf (for >=-type)
    worst_P: float


@dataclass
class ConditionReport:
    checks: list[ConditionCheck] = field(default_factory=list)
    sample_count: int = 0
    fitted_A: float = float("nan")
    fitted_gamma: float = float("nan")
    skipped_samples: int = 0

    def __getitem__(self, name: str) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def pme_side_satisfied(self) -> bool:
        """The four conditions backing the parabolic estimates; hs_monotone is
        only needed for the stiff-limit problem (fisher laws with m > 2 have
        G'' > 0 and legitimately fail it)."""
        names = ("slope_combo", "power_envelope", "mass_coupling", "drift_cap")
        return all(self[n].satisfied for n in names)

    def to_csv_rows(self) -> list[str]:
        rows = ["condition,satisfied,worst_margin,worst_P"]
        rows += [f"{c.name},{int(c.satisfied)},{c.worst_margin:.17g},{c.worst_P:.17g}"
                 for c in self.checks]
        return rows


TOL = 1e-12


def _samples(G: ReactionTerm, n: int) -> np.ndarray:
    # log-uniform on (0, P_H] plus endpoint refinement near both ends
    lo = G.p_cap * 1e-8
    pts = np.geomspace(lo, G.p_cap, n)
    pts = np.concatenate([pts, G.p_cap * np.array([1 - 1e-6, 1 - 1e-3]), [G.p_cap]])
    return np.unique(pts)


def check_conditions(G: ReactionTerm, samples: int = 256) -> ConditionReport:
    """Sampled verification of the structural inequalities the estimates rely on.

    Checked over a log-uniform sample of (0, P_H]:
      slope_combo      sup 3 G' + 2 P G''            <= 0
      power_envelope   |G'| + |P G''| <= A P^(gamma-1) for fitted A, gamma > 0
      mass_coupling    inf G - P G'                  >= 0
      drift_cap        sup -P G'   (reported; caller picks L > K above it)
      hs_monotone      G' <= 0 and G'' <= 0,  G(0) > 0
    """
    if samples < 64:
        raise ValueError("need at least 64 samples")
    P = _samples(G, samples)
    report = ConditionReport(sample_count=P.size)
    skipped = 0
    try:
        g = eval_g(G, P, 0)
        gp = eval_g(G, P, 1)
        gpp = eval_g(G, P, 2)
    except SingularDerivative:
        # drop P -> 0 samples that blow up (fisher with m > 2); count them
        keep = P > G.p_cap * 1e-4
        skipped = int((~keep).sum())
        P = P[keep]
        g, gp, gpp = (eval_g(G, P, k) for k in (0, 1, 2))
    report.skipped_samples = skipped

    combo = 3.0 * gp + 2.0 * P * gpp
    i = int(np.argmax(combo))
    report.checks.append(ConditionCheck("slope_combo", combo[i] <= TOL, float(combo[i]), float(P[i])))

    env = np.abs(gp) + np.abs(P * gpp)
    if env.max() <= 1e-15:
        A_fit, gamma_fit = 1e-15, 1.0
        margin, wp = float((A_fit * P ** (gamma_fit - 1) - env).min()), float(P[0])
        ok = True
    else:
        pos = env > 1e-300
        coeffs = np.polyfit(np.log(P[pos]), np.log(env[pos]), 1)
        gamma_fit = float(coeffs[0] + 1.0)
        # lift A until the envelope covers every sample
        resid = np.log(env[pos]) - np.polyval(coeffs, np.log(P[pos]))
        A_fit = float(np.exp(coeffs[1] + resid.max()) * (1 + 1e-9))
        bound = A_fit * P ** (gamma_fit - 1.0)
        margin = float((bound - env).min())
        wp = float(P[int(np.argmin(bound - env))])
        ok = gamma_fit > 0 and margin >= -TOL * max(1.0, env.max())
    report.fitted_A, report.fitted_gamma = A_fit, gamma_fit
    report.checks.append(ConditionCheck("power_envelope", ok, margin, wp))

    coupling = g - P * gp
    i = int(np.argmin(coupling))
    report.checks.append(ConditionCheck("mass_coupling", coupling[i] >= -TOL, float(coupling[i]), float(P[i])))

    drift = -P * gp
    i = int(np.argmax(drift))
    report.checks.append(ConditionCheck("drift_cap", np.isfinite(drift[i]), float(drift[i]), float(P[i])))

    hs_worst = max(float(gp.max()), float(gpp.max()))
    i = int(np.argmax(gp)) if gp.max() >= gpp.max() else int(np.argmax(gpp))
    hs_ok = hs_worst <= TOL and G.g0() > 0
    report.checks.append(ConditionCheck("hs_monotone", hs_ok, hs_worst, float(P[i])))
    return report


def check_appendix_g(G: ReactionTerm, p: float, samples: int = 256) -> ConditionCheck:
    """Concavity of the index-p transform of the growth law.

    For p != 0 the transform is g(t) = t^(3-1/p) G(t^(1/p)) on (0, P_H^p];
    for p = 0 it is g(t) = e^(-t) G(e^t) on (-inf, log P_H].  Concavity is
    checked by dense second differences; worst_margin is the largest second
    difference quotient (<= 0 means concave).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if samples < 64:
        raise ValueError("need at least 64 samples")
    if p == 0.0:
        t = np.linspace(math.log(G.p_cap) - 12.0, math.log(G.p_cap), samples)
        vals = np.exp(-t) * eval_g(G, np.exp(t), 0)
    else:
        t_hi = G.p_cap**p
        t = np.linspace(t_hi * 1e-4, t_hi, samples)
        vals = t ** (3.0 - 1.0 / p) * eval_g(G, t ** (1.0 / p), 0)
    ht = t[1] - t[0]
    second = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / ht**2
    scale = max(np.abs(second).max(), np.abs(vals).max(), 1.0)
    i = int(np.argmax(second))
    return ConditionCheck(f"g_concavity_p={p:g}", second[i] <= 1e-7 * scale,
                          float(second[i]), float(t[i + 1]))
