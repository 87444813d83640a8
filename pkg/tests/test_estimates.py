"""Margin computations for the semi-superharmonicity, gradient and
non-degeneracy bounds."""

import numpy as np
import pytest

from fblab import estimates, pme
from fblab.estimates import (EstimateConfig, ab_required_bound,
                             aronson_benilan_margin, boundary_decay_exponent,
                             config_from_initial, gradient_bound_margin,
                             nondegeneracy_margin, validate_config)
from fblab.grid import Grid, ScalarField
from fblab.reaction import constant, tumor


def cap_field(grid, A=0.5, R=1.0):
    X, Y = grid.meshgrid()
    return ScalarField(grid, np.maximum(A * (1.0 - (X**2 + Y**2) / R**2), 0.0))


def test_config_validation():
    with pytest.raises(ValueError):
        EstimateConfig(K=1.0, L=0.5, c_lower=0.1, C_upper=1.0, r=1.0)
    with pytest.raises(ValueError):
        EstimateConfig(K=1.0, L=2.0, c_lower=-0.1, C_upper=1.0, r=1.0)
    cfg = EstimateConfig(K=1.0, L=2.0, c_lower=0.1, C_upper=1.0, r=1.0)
    assert cfg.alpha_weight == pytest.approx(2.0 / 3.0)


def test_ab_required_bound_closed_form():
    cfg = EstimateConfig(K=1.0, L=2.5, c_lower=0.1, C_upper=1.0, r=1.0)
    # f(t) = K/(1+rKt) solves f' = -r f^2 with f(0) = K; at t=1 the bound is -1/2
    assert ab_required_bound(cfg, 1.0) == pytest.approx(-0.5, abs=1e-15)
    for t in (0.0, 0.3, 2.0):
        assert ab_required_bound(cfg, t) == pytest.approx(-1.0 / (1.0 + t), abs=1e-12)
    ts = np.linspace(0, 3, 50)
    vals = [-ab_required_bound(cfg, t) for t in ts]
    assert all(v2 < v1 for v1, v2 in zip(vals, vals[1:]))  # requirement relaxes in time


def test_ab_margin_equality_case_at_t0():
    # lap P0 + G = -4A + g0 exactly for a cap with constant growth
    g = Grid(2, 1.6, 129)
    A = 0.5
    P0 = cap_field(g, A)
    G = constant(1.0, p_cap=3.0)
    K = 4.0 * A - 1.0  # makes lap P0 + G == -K on the bulk
    cfg = EstimateConfig(K=K, L=K + 1.0, c_lower=0.3, C_upper=1.1, r=1.0)
    margin = aronson_benilan_margin(P0, G, cfg, 0.0)
    assert margin == pytest.approx(0.0, abs=1e-8)


def test_gradient_margin_equality_at_t0():
    g = Grid(2, 1.6, 129)
    P0 = cap_field(g, 0.5)
    from fblab.grid import max_gradient_magnitude
    C = max_gradient_magnitude(P0)
    cfg = EstimateConfig(K=2.1, L=3.2, c_lower=0.3, C_upper=C, r=1.0)
    assert gradient_bound_margin(P0, cfg, G0=1.0, t=0.0) == pytest.approx(0.0, abs=1e-14)
    # G(0) = 0 degenerates to the time-independent classical bound
    assert gradient_bound_margin(P0, cfg, G0=0.0, t=5.0) == pytest.approx(0.0, abs=1e-12)


def test_nondeg_margin_constant_plateau():
    # flat positive state: the gradient term drops and the bound decays in t
    g = Grid(2, 1.6, 65)
    v = np.zeros(g.shape)
    v[8:-8, 8:-8] = 0.6
    P = ScalarField(g, v)
    G = tumor(P_M=1.0, p_cap=2.0)
    cfg = EstimateConfig(K=1.0, L=2.0, c_lower=0.5, C_upper=8.0, r=1.0)
    for t in (0.0, 0.2, 1.0):
        assert nondegeneracy_margin(P, G, cfg, t) > 0.0


def test_nondeg_t0_direct_evaluation():
    g = Grid(2, 1.6, 129)
    P0 = cap_field(g, 0.5)
    G = tumor(1.0, p_cap=2.0)
    cfg = config_from_initial(P0, G, m=2.0)
    got = nondegeneracy_margin(P0, G, cfg, 0.0)
    # independent direct evaluation of the t=0 inequality
    from fblab.grid import gradient_norm_sq, resolved_support_mask
    a = cfg.alpha_weight
    from fblab.reaction import eval_g
    lhs = (1 + a * cfg.r * eval_g(G, np.clip(P0.values, 0, 2.0), 0)) * P0.values \
        + a * (1 + cfg.r / 2) * gradient_norm_sq(P0)
    rhs = cfg.c_lower / (cfg.K * cfg.r + 2)
    mask = resolved_support_mask(P0, erode=1)
    assert got == pytest.approx(float((lhs - rhs)[mask].min()), rel=1e-12)
    assert got >= -1e-9


def test_validate_config_rejects_nonconforming():
    g = Grid(2, 1.6, 129)
    P0 = cap_field(g, 0.5)
    G = tumor(1.0, p_cap=2.0)
    good = config_from_initial(P0, G, 2.0)
    validate_config(good, P0, G)
    bad = EstimateConfig(K=good.K / 100, L=good.L, c_lower=good.c_lower,
                         C_upper=good.C_upper, r=good.r)
    with pytest.raises(ValueError):
        validate_config(bad, P0, G)
    bad2 = EstimateConfig(K=good.K, L=good.L, c_lower=good.c_lower,
                          C_upper=good.C_upper / 100, r=good.r)
    with pytest.raises(ValueError):
        validate_config(bad2, P0, G)


def test_margins_invariant_under_translation():
    g = Grid(2, 2.0, 96)
    X, Y = g.meshgrid()
    P = ScalarField(g, np.maximum(0.4 * (1 - ((X - 0.0) ** 2 + Y**2) / 0.49), 0.0))
    rolled = ScalarField(g, np.roll(P.values, (7, -5), axis=(0, 1)))
    G = tumor(1.0, p_cap=2.0)
    cfg = EstimateConfig(K=2.0, L=3.5, c_lower=0.3, C_upper=1.5, r=1.0)
    for t in (0.0, 0.4):
        assert aronson_benilan_margin(P, G, cfg, t) == pytest.approx(
            aronson_benilan_margin(rolled, G, cfg, t), abs=1e-10)
        assert gradient_bound_margin(P, cfg, 1.0, t) == pytest.approx(
            gradient_bound_margin(rolled, cfg, 1.0, t), abs=1e-10)
        assert nondegeneracy_margin(P, G, cfg, t) == pytest.approx(
            nondegeneracy_margin(rolled, G, cfg, t), abs=1e-10)


def test_decay_exponent_on_linear_cone():
    g = Grid(2, 1.5, 129)
    X, Y = g.meshgrid()
    P = ScalarField(g, np.maximum(1.0 - np.hypot(X, Y), 0.0))
    assert boundary_decay_exponent(P) == pytest.approx(1.0, abs=0.1)


def test_decay_exponent_flags_quadratic_edge():
    # the edge extrapolation is calibrated for near-linear profiles; a
    # quadratic edge must land outside the linear acceptance band [0.8, 1.2]
    g = Grid(2, 1.5, 129)
    X, Y = g.meshgrid()
    P = ScalarField(g, np.maximum(1.0 - np.hypot(X, Y), 0.0) ** 2)
    e = boundary_decay_exponent(P)
    assert not 0.8 <= e <= 1.2
