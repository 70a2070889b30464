import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bhdstab.canonical import (
    CanonicalForm,
    ReducedForm,
    build_target_pair,
    build_theta,
    canonical_form,
    decompose_stabilizable,
    similarity_transform,
    validate_reduced_form,
)
from bhdstab.errors import IllConditioned, NonPositiveGain, NotStabilizable
from bhdstab.feedback import ClosedLoop, synthesize
from bhdstab.linalg import A0, B0, LinearSystem, spectral_profile
from bhdstab.simulate import integrate

DOUBLE = np.array([[0.0, 1.0], [0.0, 0.0]])
MIXED = np.block([[A0, np.eye(2)], [np.zeros((2, 2)), A0]])


def chain(n):
    A = np.diag(np.ones(n - 1), 1) if n > 1 else np.zeros((1, 1))
    b = np.zeros(n)
    b[-1] = 1.0
    return A, b


TEST_PAIRS = {
    "chain2": chain(2), "chain3": chain(3), "chain4": chain(4),
    "osc1": (A0, B0), "osc2": (2 * A0, B0),
    "mixed": (MIXED, np.array([0.0, 0.0, 0.0, 1.0])),
    "osc+int": (np.block([[A0, np.zeros((2, 1))], [np.zeros((1, 3))]]), np.array([0.0, 1.0, 1.0])),
}


class TestTheta:
    def test_three_blocks(self):
        th = build_theta([0.5, 0.25])
        expected = {(1, 2): 1, (1, 3): 2, (1, 4): 8, (2, 3): 1, (2, 4): 4, (3, 4): 1}
        for ik, v in expected.items():
            assert th[ik] == v

    @pytest.mark.parametrize("mu", [1, 2, 3, 5])
    def test_unit_gains(self, mu):
        th = build_theta([1.0] * (mu - 1))
        assert all(v == 1.0 for v in th.values.values())
        assert len(th.values) == mu * (mu + 1) // 2

    def test_single_factor(self):
        assert build_theta([0.1])[1, 3] == pytest.approx(10.0, rel=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(NonPositiveGain):
            build_theta([0.5, 0.0])


class TestTargetPair:
    def test_scalar(self):
        J, bhat = build_target_pair(spectral_profile(np.zeros((1, 1))), build_theta([]))
        assert J.tolist() == [[0.0]] and bhat.tolist() == [1.0]

    def test_single_oscillator(self):
        J, bhat = build_target_pair(spectral_profile(2 * A0), build_theta([]))
        assert J == pytest.approx(2 * A0, abs=1e-12)
        assert np.array_equal(bhat, B0)

    def test_double_integrator(self):
        J, bhat = build_target_pair(spectral_profile(DOUBLE), build_theta([0.5]))
        assert np.array_equal(J, DOUBLE)
        assert bhat.tolist() == [2.0, 1.0]


class TestSimilarity:
    def test_identity(self):
        J, bhat = build_target_pair(spectral_profile(MIXED), build_theta([0.5]))
        assert similarity_transform(J, bhat, J, bhat) == pytest.approx(np.eye(4), abs=1e-12)

    def test_double_integrator_explicit(self):
        J, bhat = build_target_pair(spectral_profile(DOUBLE), build_theta([0.5]))
        T = similarity_transform(DOUBLE, [0, 1], J, bhat)
        # T A = J T and T b = (2, 1) solved by hand
        assert T == pytest.approx(np.array([[1.0, 2.0], [0.0, 1.0]]), abs=1e-12)
        assert np.linalg.norm(T @ DOUBLE - J @ T) <= 1e-10
        assert T @ np.array([0.0, 1.0]) == pytest.approx([2.0, 1.0])

    @given(st.integers(0, 2**31 - 1), st.sampled_from(sorted(TEST_PAIRS)))
    def test_scrambled_coordinates(self, seed, name):
        A, b = TEST_PAIRS[name]
        r = np.random.default_rng(seed)
        S = r.normal(size=A.shape)
        while np.linalg.cond(S) > 100:
            S = r.normal(size=A.shape)
        gains = [0.5] * spectral_profile(A).mu
        cf0 = canonical_form(A, b, gains)
        cf = canonical_form(S @ A @ np.linalg.inv(S), S @ b, gains)
        assert cf.T == pytest.approx(cf0.T @ np.linalg.inv(S), abs=1e-7 * np.abs(cf0.T).max())

    @pytest.mark.parametrize("name", sorted(TEST_PAIRS))
    def test_inverse_round_trip(self, name):
        A, b = TEST_PAIRS[name]
        cf = canonical_form(A, b, [0.5] * spectral_profile(A).mu)
        Ti = np.linalg.inv(cf.T)
        assert np.linalg.norm(Ti @ cf.J @ cf.T - A) <= 1e-9
        assert np.linalg.norm(Ti @ cf.bhat - b) <= 1e-9

    def test_ill_conditioned_guard(self):
        A, b = chain(3)
        S = np.diag([1.0, 1e3, 1e-3])
        J, bhat = build_target_pair(spectral_profile(A), build_theta([0.5, 0.5]))
        similarity_transform(A, b, J, bhat, cond_limit=10.0)
        with pytest.raises(IllConditioned):
            similarity_transform(S @ A @ np.linalg.inv(S), S @ b, J, bhat, cond_limit=1e4)


class TestCanonicalForm:
    @pytest.mark.parametrize("name", sorted(TEST_PAIRS))
    @pytest.mark.parametrize("a", [1.0, 0.5, 0.125])
    def test_residuals_and_charpoly(self, name, a):
        A, b = TEST_PAIRS[name]
        cf = canonical_form(A, b, [a] * spectral_profile(A).mu)
        rA, rb = cf.residuals(A, b)
        assert rA <= 1e-8 and rb <= 1e-8
        pa, pj = np.poly(A), np.poly(cf.J)
        assert np.max(np.abs(pj - pa) / np.maximum(np.abs(pa), 1.0)) <= 1e-8

    def test_dict_round_trip(self):
        cf = canonical_form(MIXED, [0, 0, 0, 1], [0.5, 0.25])
        back = CanonicalForm.from_dict(cf.to_dict())
        assert np.array_equal(back.J, cf.J) and np.array_equal(back.T, cf.T)
        assert back.theta.values == cf.theta.values

    @pytest.mark.parametrize("name", ["chain3", "mixed", "osc+int"])
    def test_trajectory_round_trip(self, name):
        A, b = TEST_PAIRS[name]
        mu = spectral_profile(A).mu
        fb = synthesize(LinearSystem(A, b), [0.5] * mu)
        law = fb.law
        x_loop = ClosedLoop(LinearSystem(A, b), fb)
        y_loop = ClosedLoop(LinearSystem(law.canonical.J, law.canonical.bhat),
                            synthesize(LinearSystem(law.canonical.J, law.canonical.bhat), [0.5] * mu))
        x0 = np.linspace(1.0, -1.0, A.shape[0])
        grid = np.linspace(0.0, 20.0, 201)
        tx = integrate(x_loop, x0, 20.0, rtol=1e-11, atol=1e-12, t_eval=grid)
        ty = integrate(y_loop, fb.T @ x0, 20.0, rtol=1e-11, atol=1e-12, t_eval=grid)
        err = np.max(np.abs(ty.states - tx.states @ fb.T.T))
        assert err <= 1e-6


class TestDecomposition:
    def test_all_critical(self):
        dec = decompose_stabilizable(MIXED, [0, 0, 0, 1])
        assert dec.n_hurwitz == 0
        assert np.array_equal(dec.M, np.eye(4))

    def test_diagonal_split(self):
        dec = decompose_stabilizable(np.diag([-1.0, 0.0]), [0.0, 1.0])
        assert dec.A1 == pytest.approx(np.array([[-1.0]]))
        assert dec.A2 == pytest.approx(np.array([[0.0]]), abs=1e-14)
        assert abs(dec.b2[0]) == pytest.approx(1.0)

    def test_unreachable_zero_mode(self):
        with pytest.raises(NotStabilizable):
            decompose_stabilizable(np.diag([-1.0, 0.0]), [1.0, 0.0])

    @given(st.integers(0, 2**31 - 1))
    def test_block_diagonalizes(self, seed):
        r = np.random.default_rng(seed)
        H = -np.diag(r.uniform(0.5, 3.0, 2)) + np.triu(r.normal(size=(2, 2)), 1)
        A = np.block([[H, r.normal(size=(2, 2))], [np.zeros((2, 2)), A0]])
        S = r.normal(size=(4, 4))
        while np.linalg.cond(S) > 50:
            S = r.normal(size=(4, 4))
        As = S @ A @ np.linalg.inv(S)
        b = S @ np.array([r.normal(), r.normal(), 0.0, 1.0])
        dec = decompose_stabilizable(As, b)
        Ad = dec.M @ As @ np.linalg.inv(dec.M)
        assert dec.n_hurwitz == 2
        assert np.linalg.norm(Ad[:2, 2:]) <= 1e-8 * np.linalg.norm(As)
        assert np.linalg.norm(Ad[2:, :2]) <= 1e-8 * np.linalg.norm(As)
        assert np.max(np.abs(np.linalg.eigvals(dec.A2).real)) <= 1e-7


class TestReducedForm:
    def test_single_oscillator_block(self):
        assert validate_reduced_form(ReducedForm(blocks=[(A0, B0)])).valid

    def test_unstable_block(self):
        rep = validate_reduced_form(ReducedForm(blocks=[(np.array([[1.0]]), np.array([1.0]))]))
        assert not rep.valid
        assert any("non-critical" in v for v in rep.violations)

    def test_two_integrators_coupled(self):
        rf = ReducedForm(blocks=[(np.zeros((1, 1)), [1.0]), (np.zeros((1, 1)), [1.0])],
                         coupling={(0, 1): (np.array([[1.0]]), np.array([0.5]))})
        assert validate_reduced_form(rf).valid
        A, B = rf.assemble()
        assert A.tolist() == [[0.0, 1.0], [0.0, 0.0]]
        assert B.tolist() == [[1.0, 0.5], [0.0, 1.0]]

    def test_lower_coupling_rejected(self):
        rf = ReducedForm(blocks=[(np.zeros((1, 1)), [1.0]), (np.zeros((1, 1)), [1.0])],
                         coupling={(1, 0): (np.array([[1.0]]), np.array([0.5]))})
        assert not validate_reduced_form(rf).valid

    def test_dict_round_trip(self):
        rf = ReducedForm(blocks=[(A0, B0), (DOUBLE, [0.0, 1.0])],
                         coupling={(0, 1): (np.array([[0.0, 0.0], [0.5, 0.0]]), np.array([0.0, 0.5]))})
        back = ReducedForm.from_dict(rf.to_dict())
        A1, B1 = rf.assemble()
        A2, B2 = back.assemble()
        assert np.array_equal(A1, A2) and np.array_equal(B1, B2)
