import itertools
from math import factorial

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bhdstab.errors import InvalidOrder, OrderTooHigh, TooFewSamples
from bhdstab.feedback import ClosedLoop, synthesize
from bhdstab.jets import (
    Jet,
    arctan,
    bell_number,
    bell_polynomial,
    central_stencil,
    control_jet,
    faa_di_bruno,
    finite_difference_derivatives,
    g_derivative_coeff,
    inv_sqrt_composite_derivs,
    partitions,
    rsqrt,
    state_jet,
    tanh,
)
from bhdstab.linalg import A0, LinearSystem
from bhdstab.simulate import integrate

SCALAR = LinearSystem([[0.0]], [1.0])
MIXED = LinearSystem(np.block([[A0, np.eye(2)], [np.zeros((2, 2)), A0]]), [0.0, 0.0, 0.0, 1.0])


class TestDk:
    @pytest.mark.parametrize("k,expected", [(0, 1.0), (1, -0.5), (2, 0.75), (3, -1.875)])
    def test_values(self, k, expected):
        assert g_derivative_coeff(k) == expected

    def test_recursion(self):
        for k in range(11):
            assert g_derivative_coeff(k + 1) == -(0.5 + k) * g_derivative_coeff(k)

    def test_against_power_jet(self):
        # derivatives of s^{-1/2} at s = 1 equal d_k
        s = Jet(np.array([1.0, 1.0] + [0.0] * 7))
        assert rsqrt(s).derivatives() == pytest.approx([g_derivative_coeff(k) for k in range(9)],
                                                       rel=1e-14)

    def test_negative(self):
        with pytest.raises(InvalidOrder):
            g_derivative_coeff(-1)


def _brute_partitions(k, a):
    """All delta with sum delta = a and sum l delta_l = k, with c_delta from the formula."""
    L = k - a + 1
    out = {}
    for delta in itertools.product(range(a + 1), repeat=L):
        if sum(delta) == a and sum((l + 1) * d for l, d in enumerate(delta)) == k:
            c = factorial(k)
            for l, d in enumerate(delta):
                c //= factorial(d) * factorial(l + 1) ** d
            out[delta] = c
    return out


class TestBell:
    def test_b33(self):
        assert bell_polynomial(3, 3, [2.0]) == 8.0

    def test_b32(self):
        assert bell_polynomial(3, 2, [2.0, 5.0]) == 30.0

    def test_b42(self):
        x1, x2, x3 = 2.0, 3.0, 5.0
        assert bell_polynomial(4, 2, [x1, x2, x3]) == 4 * x1 * x3 + 3 * x2**2

    @pytest.mark.parametrize("k", range(1, 9))
    def test_partitions_match_enumeration(self, k):
        for a in range(1, k + 1):
            got = {tuple(d): c for d, c in partitions(k, a)}
            assert got == _brute_partitions(k, a)

    @pytest.mark.parametrize("k,b", [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (6, 203)])
    def test_bell_numbers(self, k, b):
        assert bell_number(k) == b
        assert sum(bell_polynomial(k, a, [1.0] * k) for a in range(1, k + 1)) == b

    def test_order_checks(self):
        with pytest.raises(InvalidOrder):
            partitions(2, 3)
        with pytest.raises(InvalidOrder):
            bell_polynomial(4, 1, [1.0, 1.0])


class TestFaaDiBruno:
    def test_identity_outer(self):
        phi = [0.3, -1.2, 4.0, 2.5]
        assert faa_di_bruno([1.0, 0.0, 0.0, 0.0], phi) == pytest.approx(phi)

    def test_square_of_identity(self):
        # rho(s) = s^2 at phi(t) = t, t = 0.7
        out = faa_di_bruno([2 * 0.7, 2.0], [1.0, 0.0])
        assert out == pytest.approx([1.4, 2.0])

    @given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.floats(0.5, 5.0))
    def test_inv_sqrt_matches_jet(self, tail, f0):
        f = [f0] + tail
        jet = rsqrt(Jet.from_derivatives(f)).derivatives()
        got = inv_sqrt_composite_derivs(f)
        assert np.allclose(got, jet, rtol=1e-10, atol=1e-10 * np.max(np.abs(jet)))

    def test_against_jet_pipeline_on_trajectory(self, rng):
        fb = synthesize(MIXED, [0.5, 0.5])
        cl = ClosedLoop(MIXED, fb)
        tr = integrate(cl, np.array([3.0, -2.0, 1.0, 4.0]), 20.0)
        X = tr.states[rng.choice(tr.times.size, 25, replace=False)].T
        U = control_jet(X, cl.field, cl.control, 4).derivatives()
        yd = state_jet(fb.T @ X, fb.law.field, 4).derivatives()
        assert fb.law.derivatives_fdb(list(yd)) == pytest.approx(U, rel=1e-10, abs=1e-14)


class TestJetArithmetic:
    @given(st.lists(st.floats(0.2, 4.0), min_size=1, max_size=1),
           st.lists(st.floats(-2, 2), min_size=6, max_size=6))
    def test_rsqrt_identity(self, head, tail):
        x = Jet(np.array(head + tail))
        one = rsqrt(x) * rsqrt(x) * x
        assert one.c[0] == pytest.approx(1.0, rel=1e-14)
        scale = np.max(np.abs(rsqrt(x).c)) ** 2 * np.max(np.abs(x.c))
        assert np.allclose(one.c[1:], 0.0, atol=1e-13 * scale)

    @given(st.lists(st.floats(-2, 2), min_size=5, max_size=5),
           st.lists(st.floats(-2, 2), min_size=5, max_size=5))
    def test_product_is_polynomial_product(self, a, b):
        got = (Jet(np.array(a)) * Jet(np.array(b))).c
        assert np.allclose(got, np.convolve(a, b)[:5], atol=1e-12)

    def test_division_inverts_product(self):
        a = Jet(np.array([2.0, 0.3, -1.0, 0.5]))
        b = Jet(np.array([1.5, -0.2, 0.1, 0.7]))
        assert np.allclose(((a * b) / b).c, a.c, atol=1e-13)

    def test_tanh_and_arctan_series(self):
        t = Jet(np.array([0.0, 1.0] + [0.0] * 6))
        # Maclaurin coefficients
        assert tanh(t).c == pytest.approx([0, 1, 0, -1 / 3, 0, 2 / 15, 0, -17 / 315], abs=1e-15)
        assert arctan(t).c == pytest.approx([0, 1, 0, -1 / 3, 0, 1 / 5, 0, -1 / 7], abs=1e-15)

    def test_numpy_scalar_left_operand(self):
        x = Jet(np.array([1.0, 2.0]))
        assert isinstance(np.float64(2.0) * x, Jet)
        assert isinstance(1.0 + x, Jet)

    def test_order_limit(self):
        with pytest.raises(OrderTooHigh):
            state_jet(np.zeros(1), lambda x: x, 13)


class TestControlJet:
    def _loop(self, a=1.0):
        return ClosedLoop(SCALAR, synthesize(SCALAR, [a]))

    def test_equilibrium(self):
        cl = self._loop()
        assert np.all(control_jet(np.zeros(1), cl.field, cl.control, 6).c == 0.0)

    def test_hand_chain_rule(self):
        cl = self._loop()
        d = control_jet(np.array([1.0]), cl.field, cl.control, 2).derivatives()
        assert d[0] == pytest.approx(-1 / np.sqrt(2), rel=1e-15)
        assert d[1] == pytest.approx(0.25, rel=1e-14)

    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_taylor_prediction_order(self, K):
        """The order-K jet predicts U(t + h) with error O(h^{K+1})."""
        fb = synthesize(MIXED, [0.5, 0.5])
        cl = ClosedLoop(MIXED, fb)
        x0 = np.array([0.3, 1.2, -0.8, -1.5])  # all low-order coefficients well away from 0
        c = control_jet(x0, cl.field, cl.control, K).c
        hs = np.array([0.2, 0.1, 0.05, 0.025])
        tr = integrate(cl, x0, hs[0], rtol=1e-13, atol=1e-15, t_eval=hs[::-1])
        exact = cl.control(tr.states.T)[::-1]
        pred = np.array([sum(c[j] * h**j for j in range(K + 1)) for h in hs])
        slope = np.polyfit(np.log(hs), np.log(np.abs(pred - exact)), 1)[0]
        assert slope == pytest.approx(K + 1, abs=0.2)


class TestFiniteDifferences:
    def test_quadratic_exact(self):
        h = 0.1
        t = np.arange(7) * h
        est = finite_difference_derivatives(t**2, h, 1)
        assert est == pytest.approx(2 * t[1:-1][: est.size], abs=1e-12)

    def test_sine_second_derivative(self):
        h = 1e-3
        t0 = 0.8
        t = t0 + h * np.arange(-3, 4)
        est = finite_difference_derivatives(np.sin(t), h, 2)
        assert est[est.size // 2] == pytest.approx(-np.sin(t0), abs=1e-6)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_constant(self, k):
        assert np.all(finite_difference_derivatives(np.full(12, 3.5), 0.1, k) == 0.0)

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            finite_difference_derivatives(np.zeros(4), 0.1, 3)

    @pytest.mark.parametrize("acc", [2, 4, 6])
    def test_stencil_accuracy(self, acc):
        offs, w = central_stencil(2, acc)
        # exact on polynomials up to degree k + acc - 1
        for deg in range(2 + acc):
            expected = factorial(2) if deg == 2 else 0.0
            assert np.dot(w, offs.astype(float) ** deg) == pytest.approx(expected, abs=1e-9)
