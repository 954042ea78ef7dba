import math

import numpy as np
import pytest

from gelshoot.errors import DomainError
from gelshoot.profiles import (LN2, ModelParams, PowerSeries, ProfileGrid,
                               convert, explicit_solution_residual,
                               local_series, make_params, pantograph_series,
                               series_error_estimate, series_eval,
                               series_eval_many, series_switchover)


class TestMakeParams:
    def test_b_equal_b0_degenerate_point(self):
        p = make_params(2.0, 2.0)
        assert p.b0 == 2.0
        assert p.sigma == 1.0
        assert p.theta == 2.0
        assert p.phi_inf == 1.0

    def test_derived_exponents(self):
        p = make_params(2.0, 4.0)
        assert p.sigma == pytest.approx(math.sqrt(2.0), abs=1e-15)
        assert p.q == pytest.approx(2.0 ** -0.25, abs=1e-15)

    def test_phi_inf_gamma3(self):
        # 1 / (2^2 - 1), independent of b
        for b in (0.7, 1.0, 5.0):
            assert make_params(3.0, b).phi_inf == pytest.approx(1.0 / 3.0)

    def test_a_b_relation(self):
        p = make_params(2.7, 1.9)
        assert 1.0 / (1.0 + p.gamma - p.a) == pytest.approx(p.b, rel=1e-15)

    def test_delay_identity(self):
        for b in (0.3, 1.0, 2.5, 17.0):
            p = make_params(2.0, b)
            assert abs(p.d * p.b - LN2) <= 4.0 * math.ulp(LN2)
            assert 0.0 < p.q < 1.0
            assert p.eps_delay == pytest.approx(1.0 - p.q)

    def test_sigma_ordering(self):
        gamma = 2.5
        b0 = 2.0 / (gamma - 1.0)
        assert make_params(gamma, b0).sigma == pytest.approx(1.0, abs=1e-14)
        assert make_params(gamma, 1.5 * b0).sigma > 1.0
        assert make_params(gamma, 0.8 * b0).sigma < 1.0

    @pytest.mark.parametrize("gamma,b", [(1.0, 1.0), (0.5, 2.0),
                                         (2.0, 0.0), (2.0, -1.0)])
    def test_domain_errors(self, gamma, b):
        with pytest.raises(DomainError):
            make_params(gamma, b)

    def test_json_round_trip(self):
        p = make_params(2.25, 3.5)
        q = ModelParams.from_json(p.to_json())
        assert q == p


class TestLocalSeries:
    def test_collapses_at_b0(self):
        s = local_series(make_params(2.0, 2.0), 10)
        assert s.coefficients[0] == 1.0
        assert np.max(np.abs(s.coefficients[1:])) == 0.0

    def test_hand_evaluated_recursion(self):
        # independent arithmetic: sigma = sqrt2, q = 2^(-1/4)
        sigma = math.sqrt(2.0)
        q = 2.0 ** -0.25
        a1 = 1.0 - sigma
        a2 = 0.5 * (1.0 - sigma * q) * (2.0 * a1)
        s = local_series(make_params(2.0, 4.0), 2)
        assert s.coefficients[1] == pytest.approx(a1, rel=1e-15)
        assert s.coefficients[2] == pytest.approx(a2, rel=1e-15)
        assert s.coefficients[1] == pytest.approx(-0.4142136, abs=1e-7)
        assert s.coefficients[2] == pytest.approx(0.0783722, abs=1e-7)

    @pytest.mark.parametrize("gamma,b", [(2.0, 3.0), (2.0, 10.0),
                                         (3.0, 1.5), (5.0, 0.7)])
    def test_first_coefficient_negative_above_b0(self, gamma, b):
        p = make_params(gamma, b)
        assert b > p.b0
        s = local_series(p, 3)
        assert s.coefficients[1] == pytest.approx(-(p.sigma - 1.0))
        assert s.coefficients[1] < 0.0

    @pytest.mark.parametrize("gamma,b", [(2.0, 4.0), (3.0, 2.0),
                                         (2.0, 2.3), (13.0, 1.0)])
    def test_geometric_coefficient_bound(self, gamma, b):
        p = make_params(gamma, b)
        s = local_series(p, 40)
        c = max(abs(p.sigma - 1.0), 1.0)
        n = np.arange(41)
        assert np.all(np.abs(s.coefficients) <= c ** n * (1.0 + 1e-12))
        assert s.validity_radius_estimate == pytest.approx(1.0 / c)


class TestSeriesEval:
    def test_constant_series(self):
        s = local_series(make_params(2.0, 2.0), 10)
        assert series_eval(s, 0.5) == 1.0

    def test_frozen_quadratic(self):
        s = PowerSeries(np.array([1.0, -0.4142136, 0.0783722]))
        # 1 - 0.04142136 + 0.000783722
        assert series_eval(s, 0.1) == pytest.approx(0.959362362, abs=1e-9)

    def test_at_origin_gives_a0(self):
        s = PowerSeries(np.array([0.73, 4.0, -2.0]))
        assert series_eval(s, 0.0) == 0.73

    def test_vector_eval_matches_scalar(self):
        s = local_series(make_params(2.0, 4.0), 20)
        ys = np.linspace(0.0, 0.4, 7)
        assert series_eval_many(s, ys) == pytest.approx(
            [series_eval(s, y) for y in ys], rel=1e-15)

    def test_error_estimate_is_last_term(self):
        s = PowerSeries(np.array([1.0, -1.0, 0.5]))
        assert series_error_estimate(s, 0.2) == pytest.approx(0.5 * 0.04)

    def test_switchover_respects_tolerance(self):
        s = local_series(make_params(2.0, 4.0), 40)
        y0 = series_switchover(s)
        assert series_error_estimate(s, y0) < 1e-14


class TestPantographSeries:
    def test_exponential_at_critical_parameters(self):
        # p = 1/2, eta = 0 gives the coefficients of e^(-y)
        s = pantograph_series(0.5, 0.0, 12)
        for n in range(13):
            assert s.coefficients[n] == pytest.approx(
                (-1.0) ** n / math.factorial(n), rel=1e-12)


class TestExplicitResiduals:
    GRID = np.geomspace(0.1, 10.0, 300)

    def test_power_law_at_b0(self):
        assert explicit_solution_residual(
            make_params(2.0, 2.0), "Phi0", self.GRID) < 1e-12

    @pytest.mark.parametrize("b", [2.5, 5.0, 10.0])
    @pytest.mark.parametrize("gamma", [1.5, 2.0, 3.0])
    def test_constant_solution_any_b(self, gamma, b):
        assert explicit_solution_residual(
            make_params(gamma, b), "PhiInf", self.GRID) < 1e-12

    def test_h_form_of_the_constant(self):
        assert explicit_solution_residual(
            make_params(2.0, 5.0), "HInf", self.GRID) < 1e-12

    def test_residual_stable_under_grid_refinement(self):
        p = make_params(2.0, 3.0)  # Phi0 is not a solution here
        coarse = explicit_solution_residual(p, "Phi0",
                                            np.geomspace(0.1, 10.0, 100))
        fine = explicit_solution_residual(p, "Phi0",
                                          np.geomspace(0.1, 10.0, 800))
        assert coarse > 1e-3  # genuinely nonzero residual
        assert fine <= 1.2 * coarse + 1e-14

    def test_bad_grid_rejected(self):
        p = make_params(2.0, 3.0)
        with pytest.raises(DomainError):
            explicit_solution_residual(p, "Phi0", np.array([-1.0, 2.0]))
        with pytest.raises(DomainError):
            explicit_solution_residual(p, "Phi0", np.array([2.0, 1.0]))
        with pytest.raises(DomainError):
            explicit_solution_residual(p, "nope", self.GRID)


class TestVariableChanges:
    @pytest.mark.parametrize("gamma,b", [(2.0, 3.0), (2.5, 3.3), (1.5, 4.4)])
    def test_full_round_trip(self, gamma, b):
        p = make_params(gamma, b)
        x = np.geomspace(0.1, 10.0, 64)
        F = np.exp(-x) * (1.0 + x)
        pg = ProfileGrid("F", x, F)
        out = convert(convert(pg, "phi", p), "F", p)
        assert out.values == pytest.approx(F, rel=1e-12)
        assert out.abscissa == pytest.approx(x, rel=1e-12)

    def test_adjacent_definitions(self):
        p = make_params(2.0, 2.0)
        x = np.array([4.0])
        pg = ProfileGrid("Phi", x, np.array([6.0]))
        h = convert(pg, "H", p)
        # y = x^(1/2) = 2, H = Phi / y = 3
        assert h.abscissa == pytest.approx([2.0])
        assert h.values == pytest.approx([3.0])
        ph = convert(h, "phi", p)
        assert ph.abscissa == pytest.approx([math.log(2.0)])
        assert ph.values == pytest.approx([6.0])

    def test_unknown_variant_rejected(self):
        with pytest.raises(DomainError):
            ProfileGrid("G", np.array([1.0]), np.array([1.0]))
