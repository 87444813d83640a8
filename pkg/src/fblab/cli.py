"""Batch experiment runner: one TOML config per run, tidy CSV artifacts plus a
checksum manifest.  No interactive mode; plots are out of scope by design.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 acceptance
violation when invoked with --assert.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import tomli

from . import __version__, concavity, counterexamples as cex, estimates, heleshaw, pme, reaction
from .errors import ConfigError, FblabError, NoConvergence, ParamsInconsistent, UnstableStep
from .grid import Grid, ScalarField, write_field_csv

SCENARIOS = ("conditions_check", "pme_preserve", "pme_counterexample",
             "hs_initial_sharpness", "hs_evolve", "estimates_suite",
             "incompressible_limit")


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config does not parse: {e}") from e


def reaction_from_config(cfg: dict) -> reaction.ReactionTerm:
    g = cfg.get("G")
    if not isinstance(g, dict) or "kind" not in g:
        raise ConfigError("config needs a [G] table with a 'kind' key")
    kind = g["kind"]
    try:
        if kind == "tumor":
            return reaction.tumor(g["P_M"], g.get("P_H"))
        if kind == "constant":
            return reaction.constant(g["g0"], g.get("P_H", 1.0))
        if kind == "fisher_kpp":
            return reaction.fisher_kpp(g["u_M"], g["m"], g.get("P_H"))
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad G table: {e}") from e
    raise ConfigError(f"unknown G kind {kind!r}")


def grid_from_config(cfg: dict, default_extent=1.5, default_cells=129) -> Grid:
    g = cfg.get("grid", {})
    try:
        return Grid(2, float(g.get("extent", default_extent)), int(g.get("cells", default_cells)))
    except ValueError as e:
        raise ConfigError(str(e)) from e


def initial_pressure_from_config(cfg: dict, grid: Grid) -> ScalarField:
    ini = cfg.get("initial", {"kind": "quadratic_cap"})
    kind = ini.get("kind", "quadratic_cap")
    if kind == "quadratic_cap":
        A = float(ini.get("amplitude", 0.5))
        R = float(ini.get("radius", 1.0))
        X, Y = grid.meshgrid()
        return ScalarField(grid, np.maximum(A * (1.0 - (X**2 + Y**2) / R**2), 0.0))
    raise ConfigError(f"unknown initial kind {kind!r}")


class ArtifactWriter:
    """Serialized file writes under one run directory, with checksums."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}
        out_dir.mkdir(parents=True, exist_ok=True)

    def write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def write_rows(self, name: str, header: str, rows) -> Path:
        return self.write_text(name, "\n".join([header, *rows]) + "\n")

    def write_field(self, name: str, field: ScalarField) -> Path:
        import io
        buf = io.StringIO()
        write_field_csv(field, buf)
        return self.write_text(name, buf.getvalue())


def emit_manifest(writer: ArtifactWriter, config: dict, wall_time: float) -> Path:
    manifest = {
        "version": f"fblab-{__version__}",
        "config": config,
        "files": dict(sorted(writer.files.items())),
        "wall_time_s": wall_time,
    }
    path = writer.out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# scenarios

def run_conditions_check(cfg, writer, seed):
    G = reaction_from_config(cfg)
    samples = int(cfg.get("conditions", {}).get("samples", 256))
    rep = reaction.check_conditions(G, samples)
    rows = rep.to_csv_rows()
    for p in cfg.get("conditions", {}).get("appendix_p", [0.5]):
        chk = reaction.check_appendix_g(G, float(p), samples)
        rows.append(f"{chk.name},{int(chk.satisfied)},{chk.worst_margin:.17g},{chk.worst_P:.17g}")
    writer.write_text("conditions.csv", "\n".join(rows) + "\n")
    ok = rep.all_satisfied()
    return 0 if ok else 4, {"all_satisfied": ok}


def run_pme_preserve(cfg, writer, seed):
    G = reaction_from_config(cfg)
    grid = grid_from_config(cfg, default_extent=2.4, default_cells=257)
    P0 = initial_pressure_from_config(cfg, grid)
    p = cfg.get("pme", {})
    m = float(p.get("m", 2.0))
    T = float(p.get("T", 0.5))
    traj = pme.simulate(pme.density_of_pressure(P0, m), m, G, T,
                        cfl=float(p.get("cfl", 0.45)),
                        snapshot_dt=float(p.get("snapshot_dt", T / 10)),
                        p_cap_check=float(p["p_cap"]) if "p_cap" in p else None)
    est_cfg = estimates_config_from(cfg, P0, G, m)
    alpha_list = [float(a) for a in cfg.get("concavity", {}).get("alpha_list", [0.5])]
    pair_samples = int(cfg.get("concavity", {}).get("pair_samples", 400))
    c_tol = float(cfg.get("concavity", {}).get("c_tol", 10.0))
    conc_rows, est_rows, index_rows = [], [], []
    all_concave = True
    for i, (t, P) in enumerate(traj.snapshots):
        name = f"field_{i:03d}.csv"
        writer.write_field(name, P)
        index_rows.append(f"{t:.17g},{name}")
        for alpha in alpha_list:
            rep = concavity.assess(P, alpha, pair_samples, c_tol, seed)
            conc_rows.append(f"{t:.17g},{rep.to_csv_row()}")
            all_concave &= rep.verdict is concavity.Verdict.CONCAVE
        est_rows.append(estimates.report(P, G, est_cfg, t).to_csv_row())
    writer.write_rows("trajectory.csv", "t,path", index_rows)
    writer.write_rows("concavity.csv",
                      "t,alpha,lambda1_max,argmax_i,argmax_j,midpoint_violations,verdict,tol",
                      conc_rows)
    writer.write_rows("estimates.csv", "t,ab_margin,grad_margin,nondeg_margin", est_rows)
    return 0, {"all_concave": all_concave}


def estimates_config_from(cfg, P0, G, m) -> estimates.EstimateConfig:
    e = cfg.get("estimates", {})
    if {"K", "L", "c_lower", "C_upper"} <= set(e):
        ecfg = estimates.EstimateConfig(float(e["K"]), float(e["L"]),
                                        float(e["c_lower"]), float(e["C_upper"]), m - 1.0)
        estimates.validate_config(ecfg, P0, G, tol=float(e.get("tol", 1e-9)))
        return ecfg
    return estimates.config_from_initial(P0, G, m)


def run_estimates_suite(cfg, writer, seed):
    code, info = run_pme_preserve(cfg, writer, seed)
    return code, info


def run_pme_counterexample(cfg, writer, seed):
    c = cfg.get("counterexample", {})
    alpha = float(c.get("alpha", 0.25))
    m = float(c.get("m", 2.0))
    G = reaction_from_config(cfg)
    try:
        params = cex.choose_params(alpha, m, G)
    except ParamsInconsistent as e:
        raise ConfigError(str(e)) from e
    verdict = cex.run_counterexample(params, G, T=float(c.get("T", 0.05)),
                                     cells=int(c.get("cells", 257)))
    a_or_b = params.b if params.case is cex.CexCase.MID_ALPHA else params.a
    rows = [f"{alpha:.17g},{params.case.value},{a_or_b:.17g},{params.c:.17g},"
            f"{params.A_ext:.17g},{t:.17g},{lam:.17g}" for t, lam in verdict.lambda1_series]
    writer.write_rows("counterexample.csv", "alpha,case,a_or_b,c,A_ext,t,lambda1", rows)
    found = verdict.first_positive_t is not None
    writer.write_text("verdict.txt",
                      f"first_positive_t={verdict.first_positive_t}\ntol={verdict.tol:.17g}\n")
    return (0 if found else 4), {"first_positive_t": verdict.first_positive_t}


def run_hs_initial_sharpness(cfg, writer, seed):
    G = reaction_from_config(cfg)
    hs = cfg.get("hs", {})
    grid = grid_from_config(cfg, default_extent=1.1, default_cells=257)
    a = float(hs.get("a", 1.0))
    ts = [float(t) for t in hs.get("t_list", [0.025, 0.05, 0.075, 0.1])]
    rows = []
    violated = False
    for k in hs.get("k_list", [64]):
        for alpha in hs.get("alpha_list", [0.75]):
            res = heleshaw.sharp_index_probe(G, a, int(k), float(alpha), ts, grid,
                                             tol=float(hs.get("tol", 1e-6)))
            rows.extend(r.to_csv_row() for r in res.rows)
            violated |= res.any_violation()
    writer.write_rows("probe.csv", "alpha,k,t,lhs,rhs,violated", rows)
    # sharp index of the disk solution
    dom = heleshaw.disk_domain(grid, float(hs.get("radius", 1.0)))
    sol = heleshaw.solve_pressure(dom, G)
    idx = concavity.sharp_index(sol.P, float(hs.get("sharp_lo", 0.0)),
                                float(hs.get("sharp_hi", 1.0)),
                                iters=int(hs.get("iters", 6)), seed=seed)
    writer.write_text("sharp_index.txt", f"{idx:.17g}\n")
    return 0, {"violated": violated, "sharp_index": idx}


def run_hs_evolve(cfg, writer, seed):
    G = reaction_from_config(cfg)
    hs = cfg.get("hs", {})
    grid = grid_from_config(cfg, default_extent=1.6, default_cells=129)
    rx = float(hs.get("rx", 0.8))
    ry = float(hs.get("ry", 0.6))
    dom = heleshaw.ellipse_domain(grid, rx, ry)
    evo = heleshaw.evolve(dom, G, T=float(hs.get("T", 0.3)),
                          reinit_every=int(hs.get("reinit_every", 5)),
                          tol=float(hs.get("tol", 1e-10)))
    alpha_list = [float(a) for a in hs.get("alpha_list", [0.0, 0.25, 0.5])]
    rows = []
    all_concave = True
    worst_defect = 0.0
    rng = np.random.default_rng(seed)
    for t, sol in evo.snapshots:
        for alpha in alpha_list:
            rep = concavity.assess(sol.P, alpha, seed=seed)
            rows.append(f"{t:.17g},{rep.to_csv_row()}")
            all_concave &= rep.verdict is concavity.Verdict.CONCAVE
        worst_defect = max(worst_defect, convexity_defect(sol.domain.inside(), rng))
    writer.write_rows("hs_concavity.csv",
                      "t,alpha,lambda1_max,argmax_i,argmax_j,midpoint_violations,verdict,tol",
                      rows)
    writer.write_text("convexity_defect.txt", f"{worst_defect:.17g}\n")
    return 0, {"all_concave": all_concave, "worst_defect": worst_defect}


def convexity_defect(mask: np.ndarray, rng, samples: int = 4000) -> float:
    """Fraction of interior point pairs whose cell midpoint leaves the mask."""
    idx = np.argwhere(mask)
    if len(idx) < 2:
        return 0.0
    a = idx[rng.integers(0, len(idx), samples)]
    b = idx[rng.integers(0, len(idx), samples)]
    ok = ((a - b) % 2 == 0).all(axis=1)
    a, b = a[ok], b[ok]
    if not len(a):
        return 0.0
    mid = (a + b) // 2
    return float(np.mean(~mask[tuple(mid.T)]))


def run_incompressible_limit(cfg, writer, seed):
    G = reaction_from_config(cfg)
    lim = cfg.get("limit", {})
    grid = grid_from_config(cfg, default_extent=1.6, default_cells=129)
    R = float(lim.get("radius", 1.0))
    T = float(lim.get("T", 0.05))
    m_list = [float(m) for m in lim.get("m_list", [10.0, 40.0, 160.0])]
    # the limit is an interior statement and the level-set front position
    # carries O(h) error, so the stiff reference is solved on a refined grid
    # and the gap is measured inside the initial wetted region
    refine = int(lim.get("hs_refine", 3))
    ref_grid = Grid(2, grid.extent, refine * grid.cells - refine + 1)
    hs_evo = heleshaw.evolve(heleshaw.disk_domain(ref_grid, R), G, T, snapshot_dt=T)
    P_fine = hs_evo.snapshots[-1][1].P
    X, Y = grid.meshgrid()
    P_hs = np.array([[heleshaw.interpolate(P_fine, X[i, j], Y[i, j])
                      for j in range(grid.cells)] for i in range(grid.cells)])
    inner = np.hypot(X, Y) < 0.8 * R
    P0 = heleshaw.solve_pressure(heleshaw.disk_domain(grid, R), G).P
    rows = []
    gaps = []
    for m in m_list:
        u0 = pme.density_of_pressure(P0, m)
        traj = pme.simulate(u0, m, G, T, snapshot_dt=T)
        Pm = traj.snapshots[-1][1]
        gap = float(np.max(np.abs(Pm.values - P_hs)[inner]))
        gaps.append(gap)
        rows.append(f"{m:.17g},{gap:.17g}")
    writer.write_rows("limit_gaps.csv", "m,gap", rows)
    decreasing = all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    return (0 if decreasing else 4), {"gaps": gaps, "decreasing": decreasing}


_RUNNERS = {
    "conditions_check": run_conditions_check,
    "pme_preserve": run_pme_preserve,
    "pme_counterexample": run_pme_counterexample,
    "hs_initial_sharpness": run_hs_initial_sharpness,
    "hs_evolve": run_hs_evolve,
    "estimates_suite": run_estimates_suite,
    "incompressible_limit": run_incompressible_limit,
}


def run(scenario: str, config: dict, out_dir: Path, seed: int,
        assert_mode: bool = False) -> int:
    if scenario not in _RUNNERS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    start = time.monotonic()
    writer = ArtifactWriter(out_dir)
    code, info = _RUNNERS[scenario](config, writer, seed)
    emit_manifest(writer, {"scenario": scenario, "seed": seed, **config},
                  time.monotonic() - start)
    if not assert_mode and code == 4:
        code = 0
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fblab", description=__doc__)
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--alpha-list", default=None,
                        help="comma-separated indices, overrides the config lists")
    parser.add_argument("--sharp-index", default=None, metavar="LO:HI:ITERS",
                        help="bisection bracket for the sharp-index search")
    parser.add_argument("--assert", dest="assert_mode", action="store_true",
                        help="exit 4 when the scenario's acceptance check fails")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.alpha_list is not None:
            alphas = [float(a) for a in args.alpha_list.split(",") if a]
            config.setdefault("concavity", {})["alpha_list"] = alphas
            config.setdefault("hs", {})["alpha_list"] = alphas
        if args.sharp_index is not None:
            try:
                lo, hi, iters = args.sharp_index.split(":")
                config.setdefault("hs", {}).update(
                    sharp_lo=float(lo), sharp_hi=float(hi), iters=int(iters))
            except ValueError as e:
                raise ConfigError(f"--sharp-index expects LO:HI:ITERS, got {args.sharp_index}") from e
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        out_dir = Path(args.out or config.get("output_dir", "fblab_out"))
        return run(args.scenario, config, out_dir, seed, args.assert_mode)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (UnstableStep, NoConvergence) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except FblabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
