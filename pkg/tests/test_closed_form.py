import math

import numpy as np
import pytest

from remote_survival.closed_form import (
    closed_form_u,
    closed_form_v,
    model_matrix,
    v0_vector,
    z_constant,
)
from remote_survival.cumulant import solve_u, solve_v
from remote_survival.errors import NoClosedForm
from remote_survival.spectral import validate_model

LN2 = math.log(2.0)
FAMILIES = [
    ("monotype", {"mu": -1.0, "c": 2.0}),
    ("monotype", {"mu": 0.0, "c": 2.0}),
    ("CP-D", {"alpha": 1.0, "c": 2.0}),
    ("CP-D+", {"alpha": 1.0, "beta": 0.5, "c": 2.0}),
    ("CP-D+", {"alpha": 1.0, "beta": 2.0, "c": 2.0}),
]


def _model(mid, p):
    return validate_model(model_matrix(mid, p), p["c"])


class TestClosedFormU:
    def test_monotype_ln2(self):
        assert abs(closed_form_u("monotype", {"mu": -1, "c": 2}, 1.0, LN2)[0] - 1 / 3) < 1e-15

    def test_cp_d_plus_second_coordinate(self):
        p = {"alpha": 1.0, "beta": 0.5, "c": 2.0}
        exact = closed_form_u("CP-D+", p, [0.3, 1.0], LN2, component=2)
        ode = solve_u(_model("CP-D+", p), [0.3, 1.0], [LN2], rtol=1e-12).u[-1, 1]
        assert abs(exact - ode) <= 1e-10 * exact
        assert abs(exact - 2**-0.5 / (1 + 2 * (1 - 2**-0.5))) < 1e-15

    @pytest.mark.parametrize("mid,p", FAMILIES)
    def test_initial_condition(self, mid, p):
        lam = [0.7] if mid == "monotype" else [0.7, 0.0]
        np.testing.assert_array_equal(closed_form_u(mid, p, lam, 0.0), lam)

    def test_no_closed_form(self):
        with pytest.raises(NoClosedForm):
            closed_form_u("CP-D", {"alpha": 1, "c": 2}, [1.0, 1.0], 1.0)
        with pytest.raises(NoClosedForm):
            closed_form_u("bogus", {"alpha": 1, "c": 2}, [1.0, 0.0], 1.0)

    def test_infinite_lambda(self):
        t = np.array([0.5, 2.0])
        u = closed_form_u("monotype", {"mu": -1, "c": 2}, math.inf, t)[:, 0]
        np.testing.assert_allclose(u, np.exp(-t) / (1 - np.exp(-t)), rtol=1e-14)

    @pytest.mark.parametrize("mid,p", FAMILIES)
    def test_matches_ode(self, mid, p):
        model = _model(mid, p)
        t = np.linspace(0, 20, 81)
        grid = [[0.5], [3.0]] if model.k == 1 else [[0.5, 0.0], [3.0, 0.0]]
        for lam in grid:
            np.testing.assert_allclose(solve_u(model, lam, t).u, closed_form_u(mid, p, lam, t),
                                       rtol=1e-8, atol=1e-300)


class TestClosedFormV:
    def test_monotype_limit(self):
        p = {"mu": -1.0, "c": 2.0}
        assert abs(closed_form_v("monotype", p, 1.0, "xi", 60.0)[0] * math.exp(60) - 0.25) < 1e-12

    def test_hat_v_cp_d(self):
        t = np.linspace(0, 4, 9)
        v = closed_form_v("CP-D", {"alpha": 1, "c": 2}, [1.0, 0.0], "e1", t)
        np.testing.assert_allclose(v[:, 0], np.exp(-t) / (1 + (1 - np.exp(-t))) ** 2, rtol=1e-14)
        np.testing.assert_array_equal(v[:, 1], 0.0)

    @pytest.mark.parametrize("v0_id", ["xi", "e1", "e2"])
    def test_initial_condition(self, v0_id):
        p = {"alpha": 1.0, "beta": 0.5, "c": 2.0}
        np.testing.assert_allclose(closed_form_v("CP-D+", p, [1.0, 0.0], v0_id, 0.0),
                                   v0_vector("CP-D+", p, v0_id), rtol=1e-15)

    def test_xi_vectors(self):
        np.testing.assert_allclose(v0_vector("CP-D", {"alpha": 1, "c": 2}, "xi"), [0.5, 0.5])
        np.testing.assert_allclose(v0_vector("CP-D+", {"alpha": 1, "beta": 0.5, "c": 2}, "xi"),
                                   [2 / 3, 1 / 3])
        np.testing.assert_allclose(v0_vector("CP-D+", {"alpha": 1, "beta": 2, "c": 2}, "xi"), [1, 0])

    @pytest.mark.parametrize("mid,p", FAMILIES[2:])
    @pytest.mark.parametrize("v0_id", ["xi", "e1", "e2"])
    def test_matches_ode(self, mid, p, v0_id):
        model = _model(mid, p)
        t = np.linspace(0, 20, 81)
        v = solve_v(model, [2.0, 0.0], v0_vector(mid, p, v0_id), t).v
        np.testing.assert_allclose(v, closed_form_v(mid, p, [2.0, 0.0], v0_id, t),
                                   rtol=1e-8, atol=1e-300)

    def test_no_closed_form(self):
        with pytest.raises(NoClosedForm):
            closed_form_v("CP-D", {"alpha": 1, "c": 2}, [1.0, 1.0], "xi", 1.0)


class TestZConstant:
    P = {"alpha": 1.0, "beta": 2.0, "c": 2.0}

    def test_lambda2_zero(self):
        lam1 = 1.0
        z = z_constant(self.P, 0.0, lambda1=lam1)
        assert abs(z - lam1 / (1 + lam1)) < 1e-7

    def test_alpha_equals_beta_slope(self):
        p = {"alpha": 1.0, "beta": 1.0, "c": 2.0}
        for lam2, ref in [(1.0, 0.5), (math.inf, 1.0)]:
            assert abs(z_constant(p, lam2) - ref) < 1e-6 * ref

    def test_band(self):
        vals = [z_constant(self.P, l2) for l2 in (1.0, 10.0, 100.0, math.inf)]
        assert min(vals) > 0
        assert max(vals) / min(vals) < 10
        assert vals == sorted(vals)

    def test_requires_alpha_le_beta(self):
        with pytest.raises(ValueError):
            z_constant({"alpha": 1.0, "beta": 0.5, "c": 2.0}, 1.0)
