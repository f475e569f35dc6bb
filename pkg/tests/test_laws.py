import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remote_survival.closed_form import closed_form_u, closed_form_v, model_matrix
from remote_survival.cumulant import solve_u
from remote_survival.errors import CriticalModel, UncoveredCase, UndefinedConditioning
from remote_survival.laws import (
    ConditioningSpec,
    LimitLawDescriptor,
    conditioning_density,
    extinction_probability,
    finite_theta_limit_law_monotype,
    gamma_law,
    iterated_limit_t_then_theta,
    iterated_limit_theta_then_t,
    laplace_conditioned,
    laplace_conditioned_numeric,
    laplace_unconditioned,
    longtime_law,
    model_family,
    stable_cumulant,
    stable_limit_laplace,
)
from remote_survival.spectral import perron, validate_model

LN2 = math.log(2.0)
W = ConditioningSpec.whole()
T1 = ConditioningSpec.type_(1)
T2 = ConditioningSpec.type_(2)


class TestConditioningSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ConditioningSpec("type", None)
        with pytest.raises(ValueError):
            ConditioningSpec.whole(horizon=0.0)
        with pytest.raises(ValueError):
            T2.mask(1)

    def test_mask(self):
        np.testing.assert_array_equal(W.mask(2), [True, True])
        np.testing.assert_array_equal(T2.mask(2), [False, True])
        assert W.remote and not ConditioningSpec.whole(5.0).remote


class TestLimitLawDescriptor:
    def test_gamma_laplace(self):
        law = gamma_law(2, 1.0, "test")
        assert law.laplace(1.0) == 0.25

    def test_json_round_trip(self):
        law = LimitLawDescriptor("product_of_exponentials", "test", rates=(1.0, 2.0))
        back = LimitLawDescriptor.from_json(law.to_json())
        assert back == law
        assert law.to_dict()["form"] == "product_of_exponentials"

    def test_invalid(self):
        with pytest.raises(ValueError):
            gamma_law(0, 1.0, "bad")
        with pytest.raises(ValueError):
            LimitLawDescriptor("normal", "bad")


class TestFamilies:
    def test_dispatch(self, mono_sub, irreducible, cpd, cpd_plus_beta_small, cpd_plus_alpha_small):
        assert model_family(mono_sub).name == "monotype"
        assert model_family(irreducible).name == "irreducible"
        assert model_family(cpd).name == "CP-D"
        assert model_family(cpd_plus_beta_small).name == "CP-D+ beta<alpha"
        assert model_family(cpd_plus_alpha_small).name == "CP-D+ alpha<beta"

    def test_uncovered(self):
        with pytest.raises(UncoveredCase):
            model_family(validate_model([[-1.0, 0.5], [0.0, -2.0]], 1.0))

    @pytest.mark.parametrize("name", ["cpd", "cpd_plus_beta_small", "cpd_plus_alpha_small",
                                      "irreducible"])
    def test_densities_are_eigenvectors(self, name, request):
        model = request.getfixturevalue(name)
        for cond in (W, T1, T2):
            v0, rate = conditioning_density(model, [1.0, 1.0], cond)
            np.testing.assert_allclose(model.D @ v0, rate * v0, atol=1e-14)

    def test_undefined(self, cpd, cpd_plus_alpha_small):
        with pytest.raises(UndefinedConditioning):
            conditioning_density(cpd, [0.0, 1.0], T1)
        with pytest.raises(UndefinedConditioning):
            conditioning_density(cpd_plus_alpha_small, [0.0, 1.0], T1)
        with pytest.raises(UndefinedConditioning):
            conditioning_density(cpd, [0.0, 0.0], W)


class TestUnconditioned:
    def test_examples(self, mono_sub, irreducible):
        assert laplace_unconditioned(irreducible, [1.0, 2.0], [0.0, 0.0], 3.0) == 1.0
        assert abs(laplace_unconditioned(mono_sub, [1.0], [1.0], LN2) - math.exp(-1 / 3)) < 1e-10
        assert laplace_unconditioned(irreducible, [0.0, 0.0], [1.0, 1.0], 3.0) == 1.0

    def test_extinction(self, mono_sub, mono_crit):
        for t in (0.5, 2.0):
            ref = math.exp(-math.exp(-t) / (1 - math.exp(-t)))
            assert abs(extinction_probability(mono_sub, [1.0], t) - ref) < 1e-6
        assert extinction_probability(mono_sub, [0.0], 1.0) == 1.0
        assert abs(extinction_probability(mono_crit, [1.0], 1.0) - math.exp(-1)) < 1e-6

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(0, 4), min_size=2, max_size=2), st.floats(0, 3), st.floats(0.1, 5))
    def test_range_and_monotone(self, lam, dl, t):
        model = validate_model([[-1.0, 0.5], [0.5, -1.0]], 1.0)
        a = laplace_unconditioned(model, [1.0, 0.5], lam, t)
        b = laplace_unconditioned(model, [1.0, 0.5], np.add(lam, [dl, 0.0]), t)
        assert 0 < b <= a * (1 + 1e-10) and a <= 1


class TestConditioned:
    @pytest.mark.parametrize("name", ["mono_sub", "irreducible", "cpd", "cpd_plus_beta_small",
                                      "cpd_plus_alpha_small"])
    def test_normalization(self, name, request):
        model = request.getfixturevalue(name)
        x0 = np.ones(model.k)
        assert abs(laplace_conditioned(model, None, x0, np.zeros(model.k), 2.5) - 1) < 1e-9

    def test_monotype_long_time(self, mono_sub):
        assert abs(laplace_conditioned(mono_sub, None, [1.0], [1.0], 40.0) - 0.25) < 1e-9

    def test_cp_d_type1(self, cpd):
        t, x0, lam = 1.7, np.array([1.0, 2.0]), [0.8, 0.0]
        vhat = closed_form_v("CP-D", {"alpha": 1, "c": 2}, lam, "e1", t)
        u = closed_form_u("CP-D", {"alpha": 1, "c": 2}, lam, t)
        ref = math.exp(t) * (x0 @ vhat) / x0[0] * math.exp(-(x0 @ u))
        assert abs(laplace_conditioned(cpd, None, x0, lam, t, T1) - ref) < 1e-9 * ref

    def test_cp_d_whole_equals_type2(self, cpd):
        for lam in ([1.0, 0.0], [0.5, 2.0]):
            a = laplace_conditioned(cpd, None, [1.0, 1.0], lam, 3.0, W)
            b = laplace_conditioned(cpd, None, [1.0, 1.0], lam, 3.0, T2)
            assert a == b

    def test_numeric_route_matches_dispatch(self, cpd, irreducible, cpd_plus_alpha_small):
        cases = [(irreducible, W, [1.0, 0.5]), (cpd, T1, [1.0, 1.0]),
                 (cpd_plus_alpha_small, W, [1.0, 1.0]), (cpd_plus_alpha_small, T2, [1.0, 1.0])]
        for model, cond, x0 in cases:
            a = laplace_conditioned(model, None, x0, [1.0, 0.5], 2.0, cond)
            b = laplace_conditioned_numeric(model, x0, [1.0, 0.5], 2.0, cond)
            assert abs(a - b) < 1e-8

    def test_finite_theta_monotype(self, mono_sub):
        theta, t, lam = LN2, 40.0, 1.0
        law = finite_theta_limit_law_monotype(-1.0, 2.0, theta)
        got = laplace_conditioned(mono_sub, None, [1.0], [lam], t, ConditioningSpec.whole(theta))
        assert abs(got - law.laplace(lam)) < 1e-8

    def test_finite_theta_converges_to_remote(self, irreducible):
        remote = laplace_conditioned(irreducible, None, [1.0, 1.0], [1.0, 1.0], 2.0, W)
        gaps = [abs(laplace_conditioned(irreducible, None, [1.0, 1.0], [1.0, 1.0], 2.0,
                                        ConditioningSpec.whole(th)) - remote) for th in (2, 8, 32)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-6

    def test_undefined(self, cpd_plus_alpha_small):
        with pytest.raises(UndefinedConditioning):
            laplace_conditioned(cpd_plus_alpha_small, None, [0.0, 1.0], [1.0, 1.0], 1.0, T1)


class TestLongtimeLaw:
    def test_monotype(self, mono_sub, mono_crit):
        law = longtime_law(mono_sub)
        assert (law.form, law.shape, law.rate) == ("gamma", 2, 1.0)
        assert longtime_law(mono_crit).form == "explosion"

    def test_cp_d(self, cpd):
        laws = longtime_law(cpd, W)
        assert laws[1].form == "point_mass_zero"
        assert laws[2].form == "explosion"
        assert longtime_law(cpd, T1, 1).rate == 1.0

    def test_cp_d_plus(self, cpd_plus_beta_small, cpd_plus_alpha_small):
        assert longtime_law(cpd_plus_beta_small, W, 2).rate == 0.5
        law = longtime_law(cpd_plus_alpha_small, W, 1)
        assert (law.form, law.rate) == ("gamma", 1.0)
        table = longtime_law(cpd_plus_alpha_small, W, 2, n_points=8).table
        vals = np.asarray(table["values"])
        assert vals[0] == 1.0
        assert np.all(np.diff(vals) < 0)

    def test_irreducible_table(self, irreducible):
        law = longtime_law(irreducible, n_points=6)
        assert law.form == "numeric_laplace"
        assert law.table["horizon"] > 0
        vals = np.asarray(law.table["values"])
        assert vals[0] == 1.0
        for i in range(2):
            ray = np.concatenate([[1.0], vals[1 + 6 * i: 1 + 6 * (i + 1)]])
            assert np.all(np.diff(ray) < 0)

    def test_alpha_equals_beta(self):
        model = validate_model([[-1.0, 1.0], [0.0, -1.0]], 2.0)
        with pytest.raises(UncoveredCase):
            longtime_law(model)


class TestIteratedLimits:
    def test_monotype(self, mono_sub):
        assert abs(iterated_limit_t_then_theta(mono_sub, [1.0]) - 0.25) < 1e-9
        assert abs(iterated_limit_theta_then_t(mono_sub, [1.0]) - 0.25) < 1e-6

    def test_zero(self, irreducible):
        assert abs(iterated_limit_t_then_theta(irreducible, [0.0, 0.0]) - 1) < 1e-12
        assert abs(iterated_limit_theta_then_t(irreducible, [0.0, 0.0]) - 1) < 1e-9

    def test_irreducible(self, irreducible):
        a = iterated_limit_t_then_theta(irreducible, [1.0, 1.0])
        b = iterated_limit_theta_then_t(irreducible, [1.0, 1.0])
        assert abs(a - b) < 1e-3

    def test_critical(self, mono_crit):
        with pytest.raises(CriticalModel):
            iterated_limit_t_then_theta(mono_crit, [1.0])


class TestFiniteThetaLaw:
    def test_rates(self):
        assert finite_theta_limit_law_monotype(-1.0, 2.0, 60.0).rates == pytest.approx((1.0, 1.0))
        # Laplace transform 1/(1+lam) * 1/(1+lam/2): rates 1 and 2
        assert finite_theta_limit_law_monotype(-1.0, 2.0, LN2).rates == pytest.approx((1.0, 2.0))

    def test_small_theta_flagged(self):
        law = finite_theta_limit_law_monotype(-1.0, 2.0, 1e-10)
        assert law.flags and law.rates[1] > 1e9

    def test_converges_to_gamma(self):
        lam = np.linspace(0, 10, 101)
        g = gamma_law(2, 1.0, "limit")
        dist = [max(abs(finite_theta_limit_law_monotype(-1.0, 2.0, th).laplace(x) - g.laplace(x))
                    for x in lam) for th in (1.0, 4.0, 16.0)]
        assert dist[0] > dist[1] > dist[2] and dist[2] < 1e-6

    def test_critical(self):
        with pytest.raises(CriticalModel):
            finite_theta_limit_law_monotype(0.0, 2.0, 1.0)


class TestStable:
    def test_limit_value(self):
        assert stable_limit_laplace(1.0, 1.0, 0.5, 1.0) == 0.125
        assert stable_limit_laplace(-1.0, 1.0, 0.5, 1.0) == 0.125
        assert stable_limit_laplace(-1.0, 1.0, 0.5, 0.0) == 1.0

    def test_cumulant_zero(self):
        assert stable_cumulant(-1.0, 1.0, 0.5, 0.0, 3.0) == 0.0

    def test_near_quadratic(self):
        # beta -> 1 with c replaced by c/2 recovers the quadratic cumulant
        t = 1.3
        ref = closed_form_u("monotype", {"mu": -1.0, "c": 2.0}, 1.0, t)[0]
        gaps = [abs(stable_cumulant(-1.0, 1.0, b, 1.0, t) - ref) for b in (0.9, 0.99, 0.999)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_invalid(self):
        with pytest.raises(ValueError):
            stable_cumulant(-1.0, 1.0, 1.5, 1.0, 1.0)
        with pytest.raises(ValueError):
            stable_cumulant(1.0, 1.0, 0.5, 1.0, 1.0)
