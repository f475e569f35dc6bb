import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remote_survival.errors import DegeneratePerron, NonPositiveVariance, NotMetzler, Supercritical
from remote_survival.spectral import (
    is_irreducible,
    matrix_exp,
    matrix_exp_eig,
    perron,
    rank_one_asymptote,
    rank_one_burn_in,
    validate_model,
)

IRR = [[-1.0, 0.5], [0.5, -1.0]]


def _mp_expm(D, t, dps=30):
    with mpmath.workdps(dps):
        E = mpmath.expm(mpmath.matrix(D) * t)
        return np.array([[float(E[i, j]) for j in range(E.cols)] for i in range(E.rows)])


@st.composite
def metzler(draw, max_k=4):
    k = draw(st.integers(1, max_k))
    off = draw(st.lists(st.floats(0, 2), min_size=k * k, max_size=k * k))
    A = np.array(off).reshape(k, k)
    np.fill_diagonal(A, 0.0)
    # shift the diagonal so that the Perron root is nonpositive
    A = A - np.diag(A.sum(axis=1) + draw(st.floats(0, 1)))
    return A


class TestValidateModel:
    def test_decomposable_critical(self):
        m = validate_model([[-1, 1], [0, 0]], 2)
        assert m.k == 2
        assert m.is_critical
        assert m.criticality == "critical"
        assert m.mu == 0.0

    def test_zero_matrix(self):
        m = validate_model([[0]], 1)
        assert m.is_critical

    def test_subcritical_label(self):
        assert validate_model(IRR, 1.0).criticality == "subcritical"

    def test_not_metzler(self):
        with pytest.raises(NotMetzler):
            validate_model([[0, -1], [0, 0]], 1)

    def test_supercritical(self):
        with pytest.raises(Supercritical):
            validate_model([[0.5]], 1)

    @pytest.mark.parametrize("c", [0.0, -1.0, math.nan])
    def test_variance(self, c):
        with pytest.raises(NonPositiveVariance):
            validate_model([[-1.0]], c)

    def test_non_square(self):
        with pytest.raises(ValueError):
            validate_model([[1.0, 2.0]], 1)


class TestIsIrreducible:
    def test_examples(self):
        assert not is_irreducible([[-1, 1], [0, 0]])
        assert is_irreducible(IRR)
        assert is_irreducible([[0]])

    def test_cycle(self):
        D = [[-1, 1, 0], [0, -1, 1], [1, 0, -1]]
        assert is_irreducible(D)
        D[2][0] = 0
        assert not is_irreducible(D)


class TestPerron:
    def test_cp_d(self):
        s = perron(validate_model([[-1, 1], [0, 0]], 2))
        assert s.mu == 0.0
        np.testing.assert_allclose(s.xi, [0.5, 0.5], atol=1e-15)
        np.testing.assert_allclose(s.eta, [0.0, 2.0], atol=1e-15)
        assert not s.irreducible

    def test_cp_d_plus_beta_small(self):
        s = perron(validate_model([[-1, 1], [0, -0.5]], 2))
        assert abs(s.mu + 0.5) < 1e-12
        np.testing.assert_allclose(s.xi, [2 / 3, 1 / 3], atol=1e-12)
        np.testing.assert_allclose(s.eta, [0.0, 3.0], atol=1e-12)

    def test_cp_d_plus_alpha_small(self):
        s = perron(validate_model([[-2, 2], [0, -3]], 2))
        assert abs(s.mu + 2) < 1e-12
        np.testing.assert_allclose(s.xi, [1.0, 0.0], atol=1e-12)
        assert abs(s.xi @ s.eta - 1) < 1e-12

    def test_irreducible_positive(self, irreducible):
        s = perron(irreducible)
        assert s.irreducible
        assert s.xi.min() > 0 and s.eta.min() > 0
        np.testing.assert_allclose(s.xi, [0.5, 0.5], atol=1e-15)
        assert abs(s.mu + 0.5) < 1e-15
        assert abs(s.gamma - 1.0) < 1e-12

    def test_degenerate(self):
        with pytest.raises(DegeneratePerron):
            perron(validate_model([[-1.0, 0.0], [0.0, -1.0]], 1))
        with pytest.raises(DegeneratePerron):
            perron(validate_model([[-1.0, 1.0], [0.0, -1.0]], 1))

    @settings(max_examples=60, deadline=None)
    @given(metzler())
    def test_residuals(self, D):
        try:
            s = perron(validate_model(D, 1.0))
        except DegeneratePerron:
            return
        scale = max(1.0, np.abs(D).max())
        np.testing.assert_allclose(D @ s.xi, s.mu * s.xi, atol=1e-12 * scale * 10)
        np.testing.assert_allclose(s.eta @ D, s.mu * s.eta, atol=1e-12 * scale * 10 * s.eta.max())
        assert abs(s.xi.sum() - 1) < 1e-12
        assert abs(s.xi @ s.eta - 1) < 1e-12
        np.testing.assert_allclose(s.P, np.outer(s.xi, s.eta))


class TestMatrixExp:
    def test_identity_at_zero(self):
        np.testing.assert_array_equal(matrix_exp(IRR, 0.0), np.eye(2))

    @pytest.mark.parametrize("t", [0.1, 1.0, 7.5, 40.0])
    def test_cp_d_closed_form(self, t):
        P = np.array([[0.0, 1.0], [0.0, 1.0]])
        N = np.array([[1.0, -1.0], [0.0, 0.0]])
        np.testing.assert_allclose(matrix_exp([[-1, 1], [0, 0]], t), P + math.exp(-t) * N,
                                   rtol=1e-13, atol=1e-300)

    def test_against_high_precision(self):
        for D in (IRR, [[-2.0, 1.0, 0.5], [0.3, -1.0, 0.2], [1.0, 0.0, -1.5]], [[-1, 1], [0, -3]]):
            for t in (0.3, 1.0, 5.0, 25.0):
                ref = _mp_expm(D, t)
                got = matrix_exp(D, t)
                mask = ref > 0
                np.testing.assert_allclose(got[mask], ref[mask], rtol=1e-12)
                np.testing.assert_array_equal(got[~mask], 0.0)

    def test_eig_cross_check(self):
        np.testing.assert_allclose(matrix_exp(IRR, 2.0), matrix_exp_eig(IRR, 2.0), rtol=1e-12)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            matrix_exp(IRR, -1.0)

    @settings(max_examples=40, deadline=None)
    @given(metzler(), st.floats(0, 5), st.floats(0, 5))
    def test_semigroup_and_sign(self, D, s, t):
        E = matrix_exp(D, s + t)
        assert np.all(E >= 0)
        np.testing.assert_allclose(E, matrix_exp(D, s) @ matrix_exp(D, t), atol=1e-10)

    def test_nonnegative_grid(self):
        for t in np.linspace(0, 50, 26):
            assert np.all(matrix_exp([[-2, 2], [0, -3]], t) >= 0)


class TestRankOne:
    def test_at_zero(self, irreducible):
        s = perron(irreducible)
        np.testing.assert_array_equal(rank_one_asymptote(s, 0.0), s.P)

    def test_cp_d_remainder(self):
        s = perron(validate_model([[-1, 1], [0, 0]], 2))
        N = np.array([[1.0, -1.0], [0.0, 0.0]])
        for t in (1.0, 3.0, 10.0):
            np.testing.assert_allclose(matrix_exp([[-1, 1], [0, 0]], t) - rank_one_asymptote(s, t),
                                       math.exp(-t) * N, atol=1e-13)

    def test_convergence_after_burn_in(self, irreducible):
        s = perron(irreducible)
        T = rank_one_burn_in(s)
        errs = []
        for t in (T, 2 * T, 4 * T):
            R = matrix_exp(irreducible.D, t) * math.exp(-s.mu * t) - s.P
            errs.append(np.abs(R).max())
            assert errs[-1] <= math.exp(-0.5 * s.gamma * t)
        assert errs[0] > errs[1] > errs[2]
