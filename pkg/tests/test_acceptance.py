"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Two criteria are implemented exactly as stated but are expected to fail, with
the blocking analysis recorded in the project notes: the disk solution is
alpha-concave for every alpha in [0, 1] (its sharp index is 1, not 1/2), and
the k = 64 cone approximant has a smooth vertex whose Hopf gradient keeps the
ray inequality satisfied for every t (the violation needs k ~ 256).  Both are
marked xfail(strict=True) so a change in behavior is flagged.
"""

import time

import numpy as np
import pytest

from fblab import concavity, counterexamples as cx, estimates, heleshaw as hs, pme
from fblab.concavity import Verdict
from fblab.grid import Grid, ScalarField
from fblab.reaction import (check_appendix_g, check_conditions, constant,
                            fisher_kpp, tumor)


def report(criterion: str, ok: bool, detail: str) -> bool:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def disk_exact(grid, g0=1.0):
    X, Y = grid.meshgrid()
    return np.maximum(1.0 - X**2 - Y**2, 0.0) * g0 / (2.0 * grid.dim)


def test_criterion_1_ball_solution_exactness():
    start = time.monotonic()
    errs = {}
    for cells in (129, 257):
        grid = Grid(2, 1.15, cells)
        sol = hs.solve_pressure(hs.disk_domain(grid, 1.0), constant(1.0))
        errs[cells] = float(np.abs(sol.P.values - disk_exact(grid))[sol.domain.inside()].max())
    elapsed = time.monotonic() - start
    ok = errs[129] <= 5e-4 and errs[129] / errs[257] >= 3.0 and elapsed < 10.0
    assert report("1 (ball solution)", ok,
                  f"err129={errs[129]:.2e} ratio={errs[129]/errs[257]:.2f} "
                  f"time={elapsed:.1f}s")


def test_criterion_2_barenblatt_convergence():
    def closed_form(x, t, C=0.25):
        return np.maximum(C - x**2 * t ** (-2.0 / 3.0) / 12.0, 0.0) * t ** (-1.0 / 3.0)

    start = time.monotonic()
    errs = {}
    for cells in (1280, 2560):  # h = 1/256 and 1/512 over extent 2.5
        grid = Grid(1, 2.5, cells)
        x = grid.axis()
        traj = pme.simulate(ScalarField(grid, closed_form(x, 1.0)), 2.0,
                            constant(1e-12, p_cap=1.0), T=1.0, snapshot_dt=1.0)
        u = pme.density_of_pressure(traj.final()[1], 2.0)
        errs[cells] = float(np.abs(u.values - closed_form(x, 2.0)).sum() * grid.h)
    elapsed = time.monotonic() - start
    order = np.log2(errs[1280] / errs[2560])
    ok = errs[1280] <= 2e-3 and order >= 1.0 and elapsed < 30.0
    assert report("2 (Barenblatt)", ok,
                  f"L1={errs[1280]:.2e} order={order:.2f} time={elapsed:.1f}s")


def test_criterion_3_preservation_of_half_concavity(tumor_run):
    worst = None
    ok = True
    for t, P in tumor_run["traj"].snapshots:
        rep = concavity.assess(P, 0.5)
        ok &= rep.verdict is Verdict.CONCAVE and rep.lambda1_max <= rep.tol_used
        rel = rep.lambda1_max / rep.tol_used
        if worst is None or rel > worst:
            worst = rel
    assert report("3 (preservation at 1/2)", ok,
                  f"{len(tumor_run['traj'].snapshots)} snapshots, "
                  f"worst lambda1/tol={worst:.2f}")


def test_criterion_4_instant_loss_for_other_indices(cex_runs):
    start = time.monotonic()
    details = []
    ok = True
    for alpha in (0.0, 0.25, 0.75, 1.0):
        _, verdict = cex_runs[alpha]
        ok &= verdict.first_positive_t is not None and verdict.first_positive_t <= 0.05
        details.append(f"a={alpha}: t*={verdict.first_positive_t}")
    _, control = cex_runs["control"]
    ok &= control.first_positive_t is None
    details.append(f"control: t*={control.first_positive_t}")
    assert report("4 (loss off 1/2)", ok, "; ".join(details))


def _margins(run):
    rows = []
    for t, P in run["traj"].snapshots:
        rows.append((t, estimates.report(P, run["G"], run["cfg"], t)))
    return rows


def test_criterion_5_estimate_margins(tumor_run, tumor_run_fine):
    h = tumor_run["grid"].h
    hf = tumor_run_fine["grid"].h
    base = _margins(tumor_run)
    fine = _margins(tumor_run_fine)
    ok = True
    worst = {"ab": 1e9, "grad": 1e9, "nondeg": 1e9}
    for t, r in base:
        ok &= min(r.ab_margin, r.grad_margin, r.nondeg_margin) >= -20.0 * h
        worst["ab"] = min(worst["ab"], r.ab_margin)
        worst["grad"] = min(worst["grad"], r.grad_margin)
        worst["nondeg"] = min(worst["nondeg"], r.nondeg_margin)
    for (tb, rb), (tf, rf) in zip(base, fine):
        ok &= min(rf.ab_margin, rf.grad_margin, rf.nondeg_margin) >= -20.0 * hf
        # no degradation under refinement, up to the coarse-grid noise scale
        slack = 10.0 * h
        ok &= rf.ab_margin >= rb.ab_margin - slack
        ok &= rf.grad_margin >= rb.grad_margin - slack
        ok &= rf.nondeg_margin >= rb.nondeg_margin - slack
    assert report("5 (estimate margins)", ok,
                  f"worst margins {worst['ab']:.3f}/{worst['grad']:.3f}/"
                  f"{worst['nondeg']:.3f} vs -20h={-20*h:.3f}")


def test_criterion_6_linear_boundary_degeneracy(tumor_run):
    for t, P in tumor_run["traj"].snapshots:
        if abs(t - 0.3) < 1e-9:
            e = estimates.boundary_decay_exponent(P)
            ok = 0.8 <= e <= 1.2
            assert report("6 (linear degeneracy)", ok, f"exponent at t=0.3: {e:.3f}")
            return
    pytest.fail("no snapshot at t = 0.3")


@pytest.mark.xfail(strict=True, reason="the disk solution is alpha-concave for "
                   "every alpha <= 1 (radial and tangential curvatures of "
                   "(1-r^2)^alpha are negative); its sharp index is 1, not 0.5")
def test_criterion_7a_disk_sharp_index_as_stated():
    grid = Grid(2, 1.15, 129)
    sol = hs.solve_pressure(hs.disk_domain(grid, 1.0), constant(1.0))
    idx = concavity.sharp_index(sol.P, 0.0, 1.0, iters=6)
    ok = abs(idx - 0.5) <= 0.02
    assert report("7a (disk sharp index = 0.5 +/- 0.02)", ok, f"sharp index {idx:.3f}")


def test_criterion_7a_companion_disk_index_is_one():
    grid = Grid(2, 1.15, 129)
    sol = hs.solve_pressure(hs.disk_domain(grid, 1.0), constant(1.0))
    idx = concavity.sharp_index(sol.P, 0.0, 1.0, iters=6)
    assert report("7a' (honest disk sharp index)", idx >= 0.98, f"sharp index {idx:.3f}")


@pytest.mark.xfail(strict=True, reason="the k = 64 approximant has a smooth "
                   "vertex with Hopf gradient ~0.04; P(tz) ~ 0.04 t/2 dominates "
                   "t P(z)^0.75 for every t, so no ray violation exists at k=64 "
                   "(grid-converged check); the mechanism appears from k ~ 256")
def test_criterion_7b_ray_violation_at_k64_as_stated():
    grid = Grid(2, 1.05, 513)
    res = hs.sharp_index_probe(constant(1.0), a=1.0, k=64, alpha=0.75,
                               ts=[0.0125, 0.025, 0.05, 0.075, 0.1], grid=grid)
    ok = res.any_violation()
    assert report("7b (ray violation at k=64, t<=0.1)", ok,
                  "; ".join(f"t={r.t}: {r.lhs:.4f}<{r.rhs:.4f}?{int(r.violated)}"
                            for r in res.rows))


def test_criterion_7b_companion_ray_violation_at_tight_vertex():
    grid = Grid(2, 1.05, 513)
    res = hs.sharp_index_probe(constant(1.0), a=1.0, k=256, alpha=0.75,
                               ts=[0.0125, 0.025, 0.05, 0.075, 0.1], grid=grid)
    ok = res.any_violation() and min(r.t for r in res.rows if r.violated) <= 0.05
    assert report("7b' (ray violation once the vertex is tight, k=256)", ok,
                  "; ".join(f"t={r.t}:{int(r.violated)}" for r in res.rows))


def test_criterion_7c_domain_monotonicity():
    grid = Grid(2, 1.1, 257)
    G = constant(1.0)
    sols = {k: hs.solve_pressure(hs.cone_domain(grid, k, 1.0), G) for k in (4, 16, 64)}
    ok = True
    ok &= bool(np.all(sols[16].P.values <= sols[4].P.values + 1e-6))
    ok &= bool(np.all(sols[64].P.values <= sols[16].P.values + 1e-6))
    gaps = (float(np.max(sols[4].P.values - sols[64].P.values)))
    assert report("7c (domain monotonicity)", ok, f"max P4-P64 gap {gaps:.2e}")


def test_criterion_8_hele_shaw_evolution():
    grid = Grid(2, 1.7, 129)
    dom = hs.ellipse_domain(grid, 0.8, 0.6)
    G = tumor(P_M=1.0)
    evo = hs.evolve(dom, G, T=0.3, snapshot_dt=0.05)
    rng = np.random.default_rng(0)
    from fblab.cli import convexity_defect
    ok = True
    worst_defect = 0.0
    for t, sol in evo.snapshots:
        for alpha in (0.0, 0.25, 0.5):
            rep = concavity.assess(sol.P, alpha)
            ok &= rep.verdict is Verdict.CONCAVE
        worst_defect = max(worst_defect, convexity_defect(sol.domain.inside(), rng))
    ok &= worst_defect <= 1e-3
    assert report("8 (stiff-limit evolution)", ok,
                  f"{len(evo.snapshots)} snapshots concave at 0/0.25/0.5, "
                  f"defect={worst_defect:.2e}")


def test_criterion_9_incompressible_limit():
    # the CLI scenario owns the measurement protocol: stiff reference on a
    # refined grid, gap over the interior of the initial wetted region (the
    # level-set front position carries O(h) error that does not shrink in m)
    from fblab.cli import run_incompressible_limit, ArtifactWriter
    import tempfile
    from pathlib import Path
    cfg = {"G": {"kind": "constant", "g0": 1.0, "P_H": 2.0},
           "limit": {"m_list": [10.0, 40.0, 160.0], "T": 0.05}}
    with tempfile.TemporaryDirectory() as d:
        code, info = run_incompressible_limit(cfg, ArtifactWriter(Path(d)), 0)
    gaps = info["gaps"]
    ok = code == 0 and gaps[0] > gaps[1] > gaps[2]
    assert report("9 (incompressible limit)", ok,
                  "interior gaps " + ", ".join(f"{g:.5f}" for g in gaps))


def test_criterion_10_conditions_suite():
    ok = True
    details = []
    for name, G in [("tumor", tumor(1.0))] + [
            (f"fisher m={m}", fisher_kpp(1.0, m)) for m in (1.5, 2.0, 3.0, 10.0)]:
        rep = check_conditions(G)
        ok &= rep.pme_side_satisfied()
        details.append(f"{name}:{'ok' if rep.pme_side_satisfied() else 'FAIL'}")
    # appendix transform at p = 1/2 for every built-in with G', G'' <= 0
    for name, G in [("tumor", tumor(1.0)), ("constant", constant(1.0)),
                    ("fisher m=2", fisher_kpp(1.0, 2.0))]:
        chk = check_appendix_g(G, 0.5)
        ok &= chk.satisfied
        details.append(f"g({name}):{'ok' if chk.satisfied else 'FAIL'}")
    assert report("10 (conditions suite)", ok, " ".join(details))
