"""Growth-law evaluators and the structural condition checks."""

import numpy as np
import pytest

from fblab import reaction
from fblab.errors import DomainError, SingularDerivative
from fblab.reaction import (check_appendix_g, check_conditions, constant,
                            custom, eval_g, fisher_kpp, tumor)


class TestEval:
    def test_tumor_vanishes_at_cap(self):
        G = tumor(P_M=1.0)
        assert eval_g(G, 1.0, 0) == 0.0
        assert eval_g(G, 0.25, 0) == 0.75
        assert eval_g(G, 0.5, 1) == -1.0
        assert eval_g(G, 0.5, 2) == 0.0

    def test_constant_derivatives_vanish(self):
        G = constant(2.0, p_cap=3.0)
        assert eval_g(G, 1.7, 0) == 2.0
        assert eval_g(G, 1.7, 1) == 0.0
        assert eval_g(G, 1.7, 2) == 0.0

    def test_fisher_value(self):
        # u_M - ((m-1)/m)^(1/(m-1)) P^(1/(m-1)) at m=2, P=0.25: 1 - 0.5*0.25
        G = fisher_kpp(u_M=1.0, m=2.0)
        assert eval_g(G, 0.25, 0) == pytest.approx(0.875, abs=1e-15)

    def test_fisher_cap_is_zero_growth_pressure(self):
        for m in (1.5, 2.0, 3.0):
            G = fisher_kpp(1.0, m)
            assert eval_g(G, G.p_cap, 0) == pytest.approx(0.0, abs=1e-12)

    def test_domain_error(self):
        G = tumor(1.0)
        with pytest.raises(DomainError):
            eval_g(G, -0.1, 0)
        with pytest.raises(DomainError):
            eval_g(G, 1.5, 0)

    def test_fisher_singular_derivative_at_zero(self):
        G = fisher_kpp(1.0, m=3.0)  # exponent 1/(m-1)-1 < 0
        with pytest.raises(SingularDerivative):
            eval_g(G, 0.0, 1)
        # m = 2 has a linear law; derivative at 0 is finite
        assert eval_g(fisher_kpp(1.0, 2.0), 0.0, 1) == pytest.approx(-0.5)

    @pytest.mark.parametrize("G", [tumor(1.0), constant(1.5, 2.0),
                                   fisher_kpp(1.0, 2.0), fisher_kpp(2.0, 3.0)])
    def test_derivative_matches_finite_difference(self, G):
        rng = np.random.default_rng(0)
        P = rng.uniform(0.01 * G.p_cap, 0.99 * G.p_cap, 100)
        h = 1e-6 * G.p_cap
        fd = (eval_g(G, P + h, 0) - eval_g(G, P - h, 0)) / (2 * h)
        np.testing.assert_allclose(eval_g(G, P, 1), fd, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("G", [tumor(1.0), constant(1.0), fisher_kpp(1.0, 1.5),
                                   fisher_kpp(1.0, 2.0), fisher_kpp(1.0, 3.0)])
    def test_monotone_nonincreasing(self, G):
        P = np.linspace(1e-6 * G.p_cap, G.p_cap, 200)
        vals = eval_g(G, P, 0)
        assert np.all(np.diff(vals) <= 1e-12)


class TestConditions:
    def test_tumor_slope_combo_margin(self):
        # 3G' + 2PG'' = -3 identically
        rep = check_conditions(tumor(1.0))
        chk = rep["slope_combo"]
        assert chk.satisfied
        assert chk.worst_margin == pytest.approx(-3.0, abs=1e-12)

    def test_constant_all_satisfied_with_clean_margins(self):
        rep = check_conditions(constant(1.0))
        assert rep.all_satisfied()
        assert rep["slope_combo"].worst_margin == pytest.approx(0.0, abs=1e-12)
        assert rep["mass_coupling"].worst_margin == pytest.approx(1.0, abs=1e-12)
        assert rep["drift_cap"].worst_margin == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("m", [1.5, 2.0, 3.0, 10.0])
    def test_fisher_family_passes(self, m):
        rep = check_conditions(fisher_kpp(1.0, m))
        assert rep.pme_side_satisfied(), [c for c in rep.checks if not c.satisfied]

    @pytest.mark.parametrize("m", [3.0, 10.0])
    def test_fisher_steep_laws_fail_hs_monotonicity(self, m):
        # G'' > 0 for m > 2: the stiff-limit hypothesis genuinely fails
        rep = check_conditions(fisher_kpp(1.0, m))
        assert not rep["hs_monotone"].satisfied

    def test_tumor_passes_and_envelope_fit(self):
        rep = check_conditions(tumor(1.0))
        assert rep.all_satisfied()
        # |G'| + |P G''| = 1: a flat envelope, gamma ~ 1
        assert rep.fitted_gamma == pytest.approx(1.0, abs=1e-6)
        assert rep.fitted_A == pytest.approx(1.0, rel=1e-6)

    def test_fisher_envelope_exponent(self):
        # |G'| + |P G''| proportional to P^(1/(m-1)-1): gamma = 1/(m-1)
        for m in (1.5, 3.0):
            rep = check_conditions(fisher_kpp(1.0, m))
            assert rep.fitted_gamma == pytest.approx(1.0 / (m - 1.0), rel=1e-4)

    def test_drift_cap_reports_sup(self):
        # tumor: -P G' = P, sup over [0, P_H] is P_H
        rep = check_conditions(tumor(1.0))
        assert rep["drift_cap"].worst_margin == pytest.approx(1.0, rel=1e-9)

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            check_conditions(tumor(1.0), samples=32)

    def test_csv_rows(self):
        rows = check_conditions(tumor(1.0)).to_csv_rows()
        assert rows[0] == "condition,satisfied,worst_margin,worst_P"
        assert len(rows) == 6


class TestAppendixG:
    def test_monotone_law_concave_at_half(self):
        # g(t) = t G(t^2) with G', G'' <= 0 is concave
        for G in (tumor(1.0), constant(1.0), fisher_kpp(1.0, 2.0)):
            chk = check_appendix_g(G, 0.5)
            assert chk.satisfied, chk

    def test_constant_law_is_linear_at_half(self):
        # g0 t^(3-2) = g0 t: second differences vanish
        chk = check_appendix_g(constant(2.0), 0.5)
        assert chk.satisfied
        assert chk.worst_margin == pytest.approx(0.0, abs=1e-8)

    def test_tumor_high_index_reports_sampled_sign(self):
        # verdict comes from the sampled second differences, not from theory
        chk = check_appendix_g(tumor(1.0), 0.9)
        g = lambda t: t ** (3 - 1 / 0.9) * (1.0 - t ** (1 / 0.9))
        t = np.linspace(1e-3, 1.0, 2001)
        second = np.diff(g(t), 2)
        assert chk.satisfied == bool(second.max() <= 1e-12)

    def test_log_branch_runs(self):
        chk = check_appendix_g(constant(1.0), 0.0)
        # e^{-t} g0 is convex in t, so the p=0 transform is not concave
        assert not chk.satisfied

    def test_p_range(self):
        with pytest.raises(ValueError):
            check_appendix_g(tumor(1.0), 1.5)


def test_custom_term_round_trip():
    G = custom(lambda P: 2.0 - P**2, lambda P: -2.0 * P, lambda P: -2.0 + 0 * P, p_cap=1.0)
    assert eval_g(G, 0.5, 0) == 1.75
    assert eval_g(G, 0.5, 1) == -1.0
    rep = check_conditions(G)
    assert rep["slope_combo"].satisfied  # 3(-2P) + 2P(-2) = -10P <= 0
