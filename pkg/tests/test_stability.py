import math

import numpy as np
import pytest

from gelshoot import stability as st
from gelshoot.errors import DomainError, OriginOnCurveError
from gelshoot.profiles import make_params

B_STAR_2 = 2.5374403762870340        # frozen high-precision evaluation
B_STAR_LIMIT = 3.0 * math.sqrt(3.0) * math.log(2.0) / math.pi


class TestBStar:
    def test_gamma_two(self):
        assert st.b_star(2.0) == pytest.approx(B_STAR_2, rel=1e-14)

    def test_large_gamma_limit(self):
        assert st.b_star(30.0) == pytest.approx(B_STAR_LIMIT, abs=1e-3)

    @pytest.mark.parametrize("gamma", [1.1, 1.5, 2.0, 3.0, 5.0, 10.0])
    def test_exceeds_b0_everywhere(self, gamma):
        assert st.b_star(gamma) > 2.0 / (gamma - 1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            st.b_star(1.0)


class TestPRatio:
    def test_matches_b_star_over_b0(self):
        rho = 1.0 - 2.0 ** -1.0       # gamma = 2
        assert st.p_ratio(rho) == pytest.approx(st.b_star(2.0) / 2.0,
                                                rel=1e-13)

    def test_tends_to_one_from_above(self):
        assert st.p_ratio(1e-6) == pytest.approx(1.0, abs=1e-3)
        assert st.p_ratio(1e-6) > 1.0

    def test_above_one_on_the_interval(self):
        for rho in np.linspace(0.01, 0.99, 50):
            assert st.p_ratio(float(rho)) > 1.0

    def test_domain(self):
        for rho in (0.0, 1.0, -0.3, 2.0):
            with pytest.raises(DomainError):
                st.p_ratio(rho)


class TestWinding:
    def test_stable_side_no_turns(self):
        p = make_params(2.0, 3.0)
        cp = st.CharProblem.from_params(p)
        assert cp.d_tilde == pytest.approx(4.0 * math.log(2.0) / 3.0,
                                           rel=1e-14)
        assert cp.d_tilde < cp.d_star
        assert st.winding_number(p).winding == 0

    def test_first_unstable_pair(self):
        p = make_params(2.0, 2.3)
        cp = st.CharProblem.from_params(p)
        assert cp.d_tilde == pytest.approx(1.2055, abs=1e-4)
        assert cp.d_tilde > cp.d_star
        w = st.winding_number(p)
        assert w.winding == 1
        assert w.root_count == 2

    def test_turn_count_increases_deep_in_instability(self):
        winds = [st.winding_number(make_params(2.0, b)).winding
                 for b in (2.3, 0.25, 0.1)]
        assert winds == sorted(winds)
        assert winds[-1] > winds[0]

    def test_invariant_under_refinement(self):
        p = make_params(2.0, 2.3)
        w = st.winding_number(p)
        assert st.winding_number(p, R=2.0 * w.R).winding == w.winding
        assert st.winding_number(p, n_samples=40000).winding == w.winding

    def test_sigma_tilde_range(self):
        for gamma in (1.2, 2.0, 6.0):
            cp = st.CharProblem.from_params(make_params(gamma, 3.0))
            assert 0.5 < cp.sigma_tilde < 1.0

    def test_boundary_behaviour(self):
        bs = st.b_star(2.0)
        try:
            st.winding_number(make_params(2.0, bs))
            boundary_resolved = True
        except OriginOnCurveError:
            boundary_resolved = False
        if boundary_resolved:
            # transition must happen within +-1e-4 of the closed form
            assert st.winding_number(make_params(2.0, bs + 1e-4)).winding \
                == 0
            assert st.winding_number(make_params(2.0, bs - 1e-4)).winding \
                == 1

    def test_bisection_matches_closed_form(self):
        assert st.b_star_by_winding(2.0, 1e-4) == pytest.approx(
            st.b_star(2.0), abs=1e-3)


class TestEquivalence:
    @pytest.mark.parametrize("gamma", [1.5, 2.0, 3.0, 5.0])
    def test_winding_iff_below_b_star(self, gamma):
        bs = st.b_star(gamma)
        grid = np.concatenate([
            np.geomspace(bs / 3.0, 0.9 * bs, 4),
            np.geomspace(1.15 * bs, 8.0 * bs, 4)])
        for b in grid:
            w = st.winding_number(make_params(gamma, float(b))).winding
            assert (w == 0) == (b > bs)


class TestEmpiricalStability:
    def test_decay_above_the_boundary(self):
        rep = st.stability_empirical(make_params(2.0, 3.0),
                                     lambda z: 0.05 * math.cos(z))
        assert rep.decayed
        assert rep.final_deviation < 1e-6

    def test_sustained_oscillation_below(self):
        rep = st.stability_empirical(make_params(2.0, 2.3),
                                     lambda z: 0.05 * math.cos(z))
        assert not rep.decayed
        assert rep.final_deviation > 1e-3

    def test_zero_perturbation_is_exactly_stationary(self):
        rep = st.stability_empirical(make_params(2.0, 3.0), lambda z: 0.0)
        assert rep.sup_deviation == 0.0

    def test_large_perturbation_rejected(self):
        with pytest.raises(DomainError):
            st.stability_empirical(make_params(2.0, 3.0),
                                   lambda z: 0.2 * math.cos(z))


class TestScanExport:
    def test_rows_carry_thresholds(self):
        rows = st.stability_scan(2.0, [2.3, 3.0])
        assert rows[0]["winding"] == 1 and rows[1]["winding"] == 0
        for r in rows:
            assert r["d_star"] == pytest.approx(1.0926714764, abs=1e-8)

    def test_curve_samples_shape(self):
        z = st.curve_samples(make_params(2.0, 2.3), n_samples=1000)
        assert z.shape == (1000,)
        assert np.all(np.isfinite(z.view(float)))
