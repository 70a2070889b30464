import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from bhdstab.errors import Divergence, MissingJets, NonPositiveParameter
from bhdstab.feedback import ClosedLoop, StateFeedback, synthesize
from bhdstab.linalg import A0, B0, LinearSystem
from bhdstab.simulate import (
    DisturbanceSignal,
    Trajectory,
    disturbance_family,
    dopri5,
    integrate,
    simulate_batch,
    sup_metrics,
)
from bhdstab.verify import make_battery

SCALAR = LinearSystem([[0.0]], [1.0])
MIXED = LinearSystem(np.block([[A0, np.eye(2)], [np.zeros((2, 2)), A0]]), [0.0, 0.0, 0.0, 1.0])
DOUBLE = LinearSystem([[0.0, 1.0], [0.0, 0.0]], [0.0, 1.0])
OSC = LinearSystem(A0, B0)


def open_loop(sys):
    return ClosedLoop(sys, StateFeedback(None, np.zeros((0, sys.n)), sys.n))


def scalar_loop(a=1.0):
    return ClosedLoop(SCALAR, synthesize(SCALAR, [a]))


class TestIntegrator:
    def test_scalar_decay(self):
        tr = integrate(scalar_loop(), np.array([3.0]), 30.0)
        assert abs(tr.states[-1, 0]) <= 1e-3

    def test_zero_start_stays_zero(self):
        tr = integrate(ClosedLoop(MIXED, synthesize(MIXED, [0.5, 0.5])), np.zeros(4), 10.0)
        assert np.all(tr.states == 0.0) and np.all(tr.controls == 0.0)

    def test_rotation_period(self):
        tr = integrate(open_loop(OSC), np.array([1.0, 0.0]), 2 * np.pi)
        assert tr.states[-1] == pytest.approx([1.0, 0.0], abs=1e-6)

    def test_energy_conserved(self):
        tr = integrate(open_loop(LinearSystem(2.5 * A0, B0)), np.array([0.6, -0.8]), 100.0,
                       rtol=1e-10, atol=1e-12)
        assert np.max(np.abs(np.linalg.norm(tr.states, axis=1) - 1.0)) <= 1e-8

    @given(st.integers(0, 2**31 - 1))
    def test_linear_against_matrix_exponential(self, seed):
        r = np.random.default_rng(seed)
        A = r.normal(size=(3, 3)) - 2 * np.eye(3)
        y0 = r.normal(size=3)
        y, _ = dopri5(lambda t, y: A @ y, 0.0, 2.0, y0, rtol=1e-10, atol=1e-12)
        assert y == pytest.approx(scipy.linalg.expm(2 * A) @ y0, abs=1e-8)

    @pytest.mark.parametrize("sys,gains", [(SCALAR, [0.5]), (DOUBLE, [0.5, 0.5]),
                                           (OSC, [0.5]), (MIXED, [0.5, 0.5])])
    def test_tolerance_halving(self, sys, gains):
        cl = ClosedLoop(sys, synthesize(sys, gains))
        x0 = np.linspace(2.0, -1.0, sys.n)
        rtol, atol = 1e-8, 1e-10
        a = integrate(cl, x0, 20.0, rtol=rtol, atol=atol).states[-1]
        b = integrate(cl, x0, 20.0, rtol=rtol / 2, atol=atol / 2).states[-1]
        assert np.max(np.abs(a - b)) <= 10 * (rtol * np.max(np.abs(a)) + atol)

    def test_dense_output_matches_direct_evaluation(self):
        cl = ClosedLoop(MIXED, synthesize(MIXED, [0.5, 0.5]))
        x0 = np.array([2.0, -1.0, 0.5, 1.0])
        grid = np.linspace(0.0, 10.0, 137)[1:]  # generic, off-step times
        coarse = integrate(cl, x0, 10.0, rtol=1e-8, atol=1e-10, t_eval=grid)
        fine = integrate(cl, x0, 10.0, rtol=1e-12, atol=1e-14, t_eval=grid)
        assert coarse.times.tolist() == grid.tolist()
        assert np.max(np.abs(coarse.controls[:, 0] - cl.control(fine.states.T))) <= 1e-6

    def test_divergence_guard(self):
        with pytest.raises(Divergence):
            integrate(open_loop(LinearSystem([[1.0]], [1.0])), np.array([1.0]), 40.0)

    def test_bad_horizon(self):
        with pytest.raises(NonPositiveParameter):
            integrate(scalar_loop(), np.array([1.0]), 0.0)

    @pytest.mark.parametrize("sys,gains", [(SCALAR, [0.125]), (DOUBLE, [1.0, 0.0625]),
                                           (OSC, [0.125]), (MIXED, [1.0, 0.0625])])
    def test_attractivity_by_horizon_200(self, sys, gains):
        """Battery starts with norm up to 100 are below 1e-3 at T = 200."""
        cl = ClosedLoop(sys, synthesize(sys, gains))
        res = simulate_batch(cl, make_battery(sys.n, 10, 100.0, 7), 200.0, order=-1,
                             rtol=1e-6, atol=1e-9)
        assert np.all(res.trailing_norm < 1e-3)


class TestSupMetrics:
    def test_zero_trajectory(self):
        cl = ClosedLoop(MIXED, synthesize(MIXED, [0.5, 0.5]))
        m = sup_metrics(integrate(cl, np.zeros(4), 5.0, jet_order=3), 3)
        assert m["sup_abs"] == [0.0] * 4 and m["trailing_norm"] == 0.0

    def test_static_bound_dominates(self):
        cl = scalar_loop(0.5)
        tr = integrate(cl, np.array([1e4]), 50.0, jet_order=1)
        m = sup_metrics(tr, 1)
        assert m["sup_abs"][0] <= 0.5
        assert m["sup_abs"][0] > 0.49

    def test_missing_jets(self):
        tr = integrate(scalar_loop(), np.array([1.0]), 5.0)
        with pytest.raises(MissingJets):
            sup_metrics(tr, 2)

    def test_batch_agrees_with_single_runs(self):
        cl = ClosedLoop(DOUBLE, synthesize(DOUBLE, [0.5, 0.5]))
        X0 = make_battery(2, 4, 20.0, 3)
        res = simulate_batch(cl, X0, 30.0, order=2, samples_per_step=4)
        for x0, sup in zip(X0, res.sup_abs):
            single = sup_metrics(integrate(cl, x0, 30.0, jet_order=2, samples_per_step=4), 2)
            assert sup == pytest.approx(single["sup_abs"], rel=2e-2)


class TestDisturbances:
    @pytest.mark.parametrize("kind", ["zero", "constant", "sinusoid", "piecewise-random"])
    def test_eventual_amplitude(self, kind):
        d = DisturbanceSignal(kind, 0.3, 3, onset=5.0, seed=4)
        ts = np.linspace(5.0, 50.0, 2001)
        assert max(np.linalg.norm(d.value(t)) for t in ts) <= 0.3 + 1e-15
        pre = max(np.linalg.norm(d.value(t)) for t in np.linspace(0.0, 4.99, 500))
        assert pre <= 0.6 + 1e-15

    def test_seeded(self):
        a = DisturbanceSignal("piecewise-random", 0.2, 2, seed=9)
        b = DisturbanceSignal.from_dict(a.to_dict())
        assert all(np.array_equal(a.value(t), b.value(t)) for t in np.linspace(0, 10, 57))

    def test_breakpoints(self):
        d = DisturbanceSignal("piecewise-random", 0.2, 1, onset=0.25, interval=0.1)
        assert d.breakpoints(0.0, 0.5) == pytest.approx([0.1, 0.2, 0.25, 0.3, 0.4])

    def test_family(self):
        assert [d.kind for d in disturbance_family(0.1, 2)] == ["zero", "constant", "sinusoid",
                                                                "piecewise-random"]

    def test_constant_disturbance_steady_state(self):
        # x' = -x/sqrt(1+x^2) + e settles where x/sqrt(1+x^2) = e
        e = 0.3
        tr = integrate(scalar_loop(), np.array([0.0]), 60.0,
                       disturbance=DisturbanceSignal("constant", e, 1, onset=0.0))
        assert tr.states[-1, 0] == pytest.approx(e / np.sqrt(1 - e**2), rel=1e-6)


class TestCsv:
    @pytest.mark.parametrize("order", [None, 2])
    def test_round_trip(self, tmp_path, order):
        cl = ClosedLoop(MIXED, synthesize(MIXED, [0.5, 0.5]))
        dist = DisturbanceSignal("sinusoid", 0.1, 4, onset=1.0)
        tr = integrate(cl, np.array([1.0, 2.0, -1.0, 0.5]), 5.0, jet_order=order, disturbance=dist)
        path = tmp_path / "traj.csv"
        tr.to_csv(path)
        back = Trajectory.from_csv(path)
        assert np.array_equal(back.times, tr.times)
        assert np.array_equal(back.states, tr.states)
        assert np.array_equal(back.controls, tr.controls)
        assert np.array_equal(back.disturbance, tr.disturbance)
        if order is None:
            assert back.jets is None
        else:
            assert np.array_equal(back.jets, tr.jets)
        assert back.meta == tr.meta
