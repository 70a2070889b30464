import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import solve_continuous_lyapunov

from bhdstab.errors import NonPositiveParameter, PositiveRealPartEigenvalue
from bhdstab.linalg import (
    A0,
    B0,
    damped_oscillator,
    gamma_constant,
    is_controllable,
    p_beta,
    pbh_controllable,
    spectral_profile,
)

OMEGAS = (0.25, 0.5, 1.0, 2.0, 5.0)
BETAS = (0.1, 0.5, 1.0)
MIXED = np.block([[A0, np.eye(2)], [np.zeros((2, 2)), A0]])


def _scrambler(seed, n):
    r = np.random.default_rng(seed)
    while True:
        S = r.normal(size=(n, n))
        if np.linalg.cond(S) < 100:
            return S


class TestSpectralProfile:
    def test_zero_matrix(self):
        prof = spectral_profile(np.zeros((2, 2)))
        assert (prof.s, prof.z, prof.mu) == (0, 2, 2)
        assert list(prof.omegas) == []

    def test_rotation_generator(self):
        prof = spectral_profile(A0)
        assert (prof.s, prof.z, prof.mu) == (1, 0, 1)
        assert prof.omegas == pytest.approx([1.0])

    def test_repeated_rotation(self):
        # characteristic polynomial (l^2 + 1)^2
        assert np.allclose(np.poly(MIXED), [1, 0, 2, 0, 1])
        prof = spectral_profile(MIXED)
        assert (prof.s, prof.z, prof.mu) == (2, 0, 2)
        assert prof.omegas == pytest.approx([1.0, 1.0], abs=1e-6)

    def test_unstable_rejected(self):
        with pytest.raises(PositiveRealPartEigenvalue):
            spectral_profile(np.diag([1.0, 0.0]))

    def test_hurwitz_part_counted(self):
        prof = spectral_profile(np.diag([-1.0, 0.0]))
        assert (prof.s, prof.z, prof.mu) == (0, 1, 1)

    @given(st.integers(0, 2**31 - 1),
           st.sampled_from(["chain4", "mixed", "osc+int", "osc2"]))
    def test_similarity_invariance(self, seed, name):
        A = {"chain4": np.diag(np.ones(3), 1), "mixed": MIXED,
             "osc+int": np.block([[2 * A0, np.zeros((2, 1))], [np.zeros((1, 2)), np.zeros((1, 1))]]),
             "osc2": np.block([[A0, np.zeros((2, 2))], [np.zeros((2, 2)), 3 * A0]])}[name]
        S = _scrambler(seed, A.shape[0])
        ref = spectral_profile(A)
        got = spectral_profile(S @ A @ np.linalg.inv(S))
        assert (got.s, got.z, got.mu) == (ref.s, ref.z, ref.mu)
        assert np.sort(got.omegas) == pytest.approx(np.sort(ref.omegas), abs=1e-4)


class TestControllability:
    def test_double_integrator(self):
        assert is_controllable([[0, 1], [0, 0]], [0, 1])

    def test_identity_single_input(self):
        assert not is_controllable(np.eye(2), [1, 0])

    def test_oscillator(self):
        assert is_controllable(A0, B0)

    @given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.booleans())
    def test_agrees_with_pbh(self, seed, n, degenerate):
        r = np.random.default_rng(seed)
        A = np.round(r.normal(size=(n, n)), 1)
        b = np.round(r.normal(size=n), 1)
        if degenerate and n > 1:
            # decouple the last state from the input
            A[-1, :-1] = 0.0
            b[-1] = 0.0
        assert is_controllable(A, b) == pbh_controllable(A, b)


class TestLyapunovPair:
    def test_closed_form_matrix(self):
        lp = p_beta(1.0, 0.5)
        assert lp.P == pytest.approx(np.array([[2.25, 0.5], [0.5, 2.0]]))

    def test_pb0_norm(self):
        assert p_beta(1.0, 1.0).pb0_norm == pytest.approx(np.sqrt(5) / 2, rel=1e-15)

    def test_hand_product(self):
        lp = p_beta(1.0, 0.5)
        assert lp.P @ lp.A_beta == pytest.approx(np.array([[-0.5, 2.0], [-2.0, -0.5]]))
        assert lp.residual <= 1e-15

    @pytest.mark.parametrize("omega", OMEGAS)
    @pytest.mark.parametrize("beta", BETAS)
    def test_grid_residual_and_eigenvalues(self, omega, beta):
        lp = p_beta(omega, beta)
        assert lp.residual <= 1e-12
        # independent solve of the same equation
        P = solve_continuous_lyapunov(damped_oscillator(omega, beta).T, -np.eye(2))
        assert lp.P == pytest.approx(P, rel=1e-10)
        a, c, d = lp.P[0, 0], lp.P[0, 1], lp.P[1, 1]
        half_tr, disc = (a + d) / 2, np.sqrt(((a - d) / 2) ** 2 + c**2)
        assert 0 < lp.sigma_lo <= lp.sigma_hi
        assert lp.sigma_lo == pytest.approx(half_tr - disc, rel=1e-10)
        assert lp.sigma_hi == pytest.approx(half_tr + disc, rel=1e-10)

    @pytest.mark.parametrize("args", [(0.0, 0.5), (1.0, 0.0), (1.0, 1.5), (-1.0, 0.5)])
    def test_rejects_bad_parameters(self, args):
        with pytest.raises(NonPositiveParameter):
            p_beta(*args)


class TestGamma:
    def test_values(self):
        assert gamma_constant(1.0) == pytest.approx(0.1, rel=1e-15)
        assert gamma_constant(0.5) == pytest.approx(0.0625, rel=1e-15)

    def test_monotone_to_one_eighth(self):
        w = np.logspace(-2, 4, 50)
        g = np.array([gamma_constant(v) for v in w])
        assert np.all(np.diff(g) > 0)
        assert g[-1] == pytest.approx(0.125, rel=1e-8)

    def test_rejects_nonpositive(self):
        with pytest.raises(NonPositiveParameter):
            gamma_constant(0.0)
