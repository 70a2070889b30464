"""Empirical verification: p-bounded certificates, the top-down gain tuner,
SISS_L experiments, the damped-oscillator Lyapunov checks and the
saturated-linear counterexample."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .canonical import decompose_stabilizable
from .errors import DimensionMismatch, NonConvergent, NonPositiveParameter, TuningFailed, ZeroK2
from .feedback import (
    BoundSpec,
    ClosedLoop,
    GainSchedule,
    SaturatedLinearFeedback,
    StateFeedback,
    counterexample_initial_derivative,
    synthesize,
)
from .jets import control_jet
from .linalg import A0, B0, LinearSystem, p_beta
from .simulate import BatchResult, DisturbanceSignal, Trajectory, simulate_batch


def make_battery(n: int, count: int, radius: float = 100.0, seed: int = 0) -> np.ndarray:
    """``count`` initial states drawn uniformly from the ball of the given radius."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
    return d * r


# p-bounded certificates ------------------------------------------------------

@dataclass
class PBoundCertificate:
    """Outcome of ``sup |U^(j)| <= R_j`` over a set of undisturbed runs."""

    bounds: BoundSpec
    sups: np.ndarray  # (N, p+1)
    converged: np.ndarray

    @property
    def worst(self) -> list:
        if self.sups.size == 0:
            return [0.0] * (self.bounds.p + 1)
        return [float(v) for v in self.sups.max(axis=0)]

    @property
    def violations(self) -> int:
        return int(np.sum(self.sups > np.array(self.bounds.R)[None, :]))

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def certified(self) -> bool:
        """Bounds hold and every run decayed, so the finite-horizon sup stands for the global one."""
        return self.passed and bool(np.all(self.converged))

    def to_dict(self) -> dict:
        return {"bounds": self.bounds.to_dict(), "passed": self.passed, "certified": self.certified,
                "violations": self.violations, "worst": self.worst,
                "all_converged": bool(np.all(self.converged))}


def check_p_bounded(runs, bounds: BoundSpec, threshold: float = 1e-6) -> PBoundCertificate:
    """Check every run against the bounds and report the worst value per order.

    ``runs`` is a :class:`BatchResult`, a :class:`Trajectory` or a list of them.
    """
    if isinstance(runs, (BatchResult, Trajectory)):
        runs = [runs]
    p = bounds.p
    sups, conv = [], []
    for r in runs:
        if isinstance(r, BatchResult):
            if r.sup_abs.shape[1] < p + 1:
                raise DimensionMismatch(f"run carries derivatives up to {r.sup_abs.shape[1] - 1}, need {p}")
            sups.append(r.sup_abs[:, :p + 1])
            conv.append(r.converged)
        else:
            from .simulate import sup_metrics
            m = sup_metrics(r, p)
            sups.append(np.array(m["sup_abs"])[None, :p + 1])
            conv.append(np.array([m["trailing_norm"] < threshold]))
    S = np.vstack(sups) if sups else np.zeros((0, p + 1))
    C = np.concatenate(conv) if conv else np.zeros(0, dtype=bool)
    return PBoundCertificate(bounds=bounds, sups=S, converged=C)


def run_battery(closed_loop, battery, p: int, horizon: float = 200.0, max_horizon: float = 5e4,
                rtol: float = 1e-6, atol: float = 1e-9, threshold: float = 1e-6) -> BatchResult:
    """Undisturbed battery run, extended until every state has decayed below ``threshold``."""
    return simulate_batch(closed_loop, battery, horizon, order=p, rtol=rtol, atol=atol,
                          until_decay=True, max_horizon=max_horizon, threshold=threshold)


# gain tuning ---------------------------------------------------------------

@dataclass
class TuningReport:
    gains: GainSchedule
    halvings: list
    log: list
    budget: float
    certificate: PBoundCertificate | None = None
    battery: BatchResult | None = None
    rounds: int = 0

    @property
    def status(self) -> str:
        if self.certificate is None:
            return "untested"
        if self.certificate.certified:
            return "certified"
        return "bounds-only" if self.certificate.passed else "failed"

    def to_dict(self) -> dict:
        return {"gains": self.gains.to_list(), "halvings": self.halvings, "budget": self.budget,
                "status": self.status, "rounds": self.rounds, "log": self.log,
                "certificate": None if self.certificate is None else self.certificate.to_dict(),
                "battery": None if self.battery is None else self.battery.to_dict()}


def _stage_run(fb: StateFeedback, i: int, battery, p, horizon, max_horizon, rtol, atol, decay):
    """Simulate the trailing blocks ``i..mu`` and the derivative sups of term ``i``."""
    law = fb.law
    tail = law.tail(i)
    off = law.canonical.layout[i - 1].offset
    Y0 = (fb.T[off:] @ np.asarray(battery, dtype=float).T).T

    def term_jets(X):
        return control_jet(X, tail.field, tail.first_term, p).derivatives()

    res = simulate_batch(tail, Y0, horizon, order=-1, rtol=rtol, atol=atol, extra=term_jets,
                         until_decay=True, max_horizon=max_horizon, threshold=decay)
    return res


def tune_gains(system: LinearSystem, bounds: BoundSpec, battery, horizon: float = 200.0,
               max_horizon: float = 5e4, rtol: float = 1e-6, atol: float = 1e-9,
               decay: float = 1e-6, floor: float = 2.0**-40, max_rounds: int = 10,
               nonconvergent_streak: int = 3) -> TuningReport:
    """Choose ``a_mu, ..., a_1`` top-down by halving.

    Stage ``i`` simulates the autonomous closed loop of blocks ``i..mu`` (the
    earlier blocks do not act on it) from the battery and halves ``a_i``
    until the run decays below ``decay`` and every derivative of the
    ``i``-th summand stays within ``R_min / (mu (p+1))``. The assembled law is
    then checked on the full plant; a failing order sends the stage with
    the largest summand back for another halving.

    Raises
    ------
    TuningFailed
        A gain fell below ``floor``.
    NonConvergent
        The summand met its budget but the stage failed to decay for
        ``nonconvergent_streak`` consecutive halvings.
    """
    battery = np.atleast_2d(np.asarray(battery, dtype=float))
    if battery.shape[0] == 0:
        raise DimensionMismatch("battery is empty")
    if system.m != 1:
        raise DimensionMismatch("tune_gains handles single-input plants")
    dec = decompose_stabilizable(system.A, system.B[:, 0])
    mu = dec.profile.mu
    p = bounds.p
    if mu == 0:
        fb = synthesize(system, (), decomposition=dec)
        res = run_battery(ClosedLoop(system, fb), battery, p, horizon, max_horizon, rtol, atol, decay)
        return TuningReport(gains=GainSchedule(()), halvings=[], log=[], budget=bounds.R_min,
                            certificate=check_p_bounded(res, bounds, decay), battery=res)
    budget = bounds.R_min / (mu * (p + 1))
    a = [1.0] * mu
    halvings = [0] * mu
    log = []

    def tune_stage(i):
        streak = 0
        while True:
            fb = synthesize(system, a, decomposition=dec)
            res = _stage_run(fb, i, battery, p, horizon, max_horizon, rtol, atol, decay)
            sups = res.extra_sup.max(axis=1)
            conv = bool(np.all(res.trailing_norm < decay))
            ok = bool(np.all(sups <= budget))
            log.append({"stage": i, "a": a[i - 1], "term_sups": sups.tolist(), "converged": conv,
                        "horizon": float(res.horizon.max()), "within_budget": ok})
            if ok and conv:
                return
            streak = streak + 1 if ok else 0
            if streak >= nonconvergent_streak:
                raise NonConvergent(f"stage {i} did not decay below {decay} within "
                                    f"{max_horizon} after {streak} halvings")
            a[i - 1] /= 2.0
            halvings[i - 1] += 1
            if a[i - 1] < floor:
                raise TuningFailed(f"gain a_{i} fell below {floor:.3g}")

    for i in range(mu, 0, -1):
        tune_stage(i)

    report = TuningReport(gains=GainSchedule(tuple(a)), halvings=halvings, log=log, budget=budget)
    for rnd in range(1, max_rounds + 1):
        fb = synthesize(system, a, decomposition=dec)
        law = fb.law

        def all_terms(X):
            Y = fb.T @ X
            return control_jet(Y, law.field, law.terms, p).derivatives()  # (p+1, mu, k)

        res = simulate_batch(ClosedLoop(system, fb), battery, horizon, order=p, rtol=rtol, atol=atol,
                             until_decay=True, max_horizon=max_horizon, threshold=decay,
                             extra=all_terms)
        cert = check_p_bounded(res, bounds, decay)
        report.gains, report.certificate, report.battery, report.rounds = GainSchedule(tuple(a)), cert, res, rnd
        if cert.passed:
            return report
        # extra_sup is (p+1, mu, N): blame the summand with the largest share of the budget
        share = res.extra_sup.max(axis=2).max(axis=0) / budget
        worst = int(np.argmax(share)) + 1
        a[worst - 1] /= 2.0
        halvings[worst - 1] += 1
        if a[worst - 1] < floor:
            raise TuningFailed(f"gain a_{worst} fell below {floor:.3g}")
        for i in range(worst - 1, 0, -1):
            tune_stage(i)
    return report


# SISS_L --------------------------------------------------------------------

@dataclass
class SissTestSpec:
    delta: float
    N_candidate: float | None = None
    families: tuple = ("zero", "constant", "sinusoid", "piecewise-random")
    horizon: float = 200.0
    window: float = 0.2
    onset: float = 5.0
    seed: int = 0
    levels: tuple = (1.0, 0.5, 0.25)
    rtol: float = 1e-8
    atol: float = 1e-10

    def __post_init__(self):
        if not self.delta > 0:
            raise NonPositiveParameter("delta must be positive")
        if not 0 < self.window < 1:
            raise NonPositiveParameter("window must be a fraction of the horizon in (0, 1)")

    def to_dict(self) -> dict:
        return {"delta": self.delta, "N_candidate": self.N_candidate, "families": list(self.families),
                "horizon": self.horizon, "window": self.window, "onset": self.onset,
                "seed": self.seed, "levels": list(self.levels)}


@dataclass
class SissReport:
    spec: SissTestSpec
    entries: list = field(default_factory=list)

    @property
    def worst_ratio(self) -> float:
        return max((e["ratio"] for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        if self.spec.N_candidate is None:
            return True
        return all(e["trailing_norm"] <= self.spec.N_candidate * e["delta"] for e in self.entries)

    def ratio_at(self, family: str, level: float) -> float:
        return max(e["ratio"] for e in self.entries if e["family"] == family and e["level"] == level)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "passed": self.passed, "worst_ratio": self.worst_ratio,
                "entries": self.entries}


def siss_l_test(closed_loop, spec: SissTestSpec, battery) -> SissReport:
    """Drive the closed loop with additive disturbances eventually bounded by ``delta'``.

    For each family and ``delta' = level * delta`` the largest state norm on
    the trailing window ``[(1 - window) T, T]`` is compared to ``N delta'``.
    """
    battery = np.atleast_2d(np.asarray(battery, dtype=float))
    report = SissReport(spec=spec)
    for fam in spec.families:
        for level in spec.levels:
            d = spec.delta * level
            dist = DisturbanceSignal(fam, d, closed_loop.n, onset=spec.onset, seed=spec.seed)
            res = simulate_batch(closed_loop, battery, spec.horizon, order=-1, rtol=spec.rtol,
                                 atol=spec.atol, disturbance=dist, window=spec.window)
            tn = float(res.trailing_norm.max())
            report.entries.append({"family": fam, "level": level, "delta": d,
                                   "trailing_norm": tn, "ratio": tn / d})
    return report


@dataclass
class GainEstimate:
    N: float
    worst_ratio: float
    validation: SissReport

    @property
    def validated(self) -> bool:
        return self.validation.passed

    def to_dict(self) -> dict:
        return {"N": self.N, "worst_ratio": self.worst_ratio, "validated": self.validated,
                "validation": self.validation.to_dict()}


def estimate_gain(closed_loop, delta: float, battery, validation_battery, seed: int = 0,
                  horizon: float = 200.0, safety: float = 1.5) -> GainEstimate:
    """Empirical linear gain: ``safety`` times the worst ratio, re-checked on disjoint data."""
    probe = siss_l_test(closed_loop, SissTestSpec(delta=delta, horizon=horizon, seed=seed), battery)
    N = safety * probe.worst_ratio
    check = siss_l_test(closed_loop, SissTestSpec(delta=delta, N_candidate=N, horizon=horizon,
                                                  seed=seed + 1_000_003), validation_battery)
    return GainEstimate(N=N, worst_ratio=probe.worst_ratio, validation=check)


def scalar_loop(beta: float) -> ClosedLoop:
    """``x' = -beta x / sqrt(1 + x^2)`` as the integrator under the one-block law."""
    sys = LinearSystem([[0.0]], [1.0])
    return ClosedLoop(sys, synthesize(sys, [beta]))


def oscillator_loop(omega: float, beta: float) -> ClosedLoop:
    """``x' = w A0 x - beta b0 b0^T x / sqrt(1 + |x|^2)``."""
    sys = LinearSystem(omega * A0, B0)
    return ClosedLoop(sys, synthesize(sys, [beta]))


# damped oscillator Lyapunov function ---------------------------------------

def oscillator_lyapunov(omega: float, beta: float):
    """``V(x) = x^T P x + (s_hi + s_lo)/3 ((1 + |x|^2)^{3/2} - 1)`` and its gradient.

    Both callables take ``x`` of shape ``(2,)`` or ``(2, N)``.
    """
    lp = p_beta(omega, beta)
    c = lp.sigma_hi + lp.sigma_lo
    P = lp.P

    def V(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=0)
        return np.sum(x * (P @ x), axis=0) + c / 3.0 * ((1.0 + r2) ** 1.5 - 1.0)

    def grad(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=0)
        return 2.0 * (P @ x) + c * np.sqrt(1.0 + r2) * x

    return V, grad


def oscillator_lyapunov_suite(omegas, betas, samples: int = 1000, rmin: float = 0.1,
                              rmax: float = 100.0, seed: int = 0, fd_step: float = 1e-6) -> dict:
    """Lyapunov residual, positivity of ``V`` and negativity of ``dV/dt`` on sampled states."""
    rng = np.random.default_rng(seed)
    rows = []
    for w in omegas:
        for b in betas:
            lp = p_beta(w, b)
            V, grad = oscillator_lyapunov(w, b)
            loop = oscillator_loop(w, b)
            ang = rng.uniform(0, 2 * np.pi, samples)
            r = np.exp(rng.uniform(np.log(rmin), np.log(rmax), samples))
            X = np.vstack([r * np.cos(ang), r * np.sin(ang)])
            F = loop.field(X)
            vdot = np.sum(grad(X) * F, axis=0)
            # directional central difference along the flow
            h = fd_step * np.maximum(1.0, r) / np.maximum(np.linalg.norm(F, axis=0), 1e-300)
            vdot_fd = (V(X + h * F) - V(X - h * F)) / (2 * h)
            fd_rel = float(np.max(np.abs(vdot_fd - vdot) / np.maximum(np.abs(vdot), 1e-12)))
            rows.append({
                "omega": w, "beta": b, "residual": lp.residual,
                "min_V_over_r2": float(np.min(V(X) / r**2)),
                "max_vdot": float(np.max(vdot)),
                "max_vdot_over_r2": float(np.max(vdot / r**2)),
                "fd_rel_error": fd_rel,
                "V0": float(V(np.zeros(2))),
            })
    ok = all(row["residual"] <= 1e-12 and row["min_V_over_r2"] > 0 and row["max_vdot"] < 0
             and row["V0"] == 0.0 for row in rows)
    return {"passed": ok, "rows": rows}


# counterexample ------------------------------------------------------------

def counterexample_growth(l_values, k, omega: float, sigma: str = "tanh",
                          contrast=None, R1: float | None = None, horizon: float = 200.0,
                          rtol: float = 1e-8, atol: float = 1e-10) -> dict:
    """Initial control rate of ``u = -sigma(k^T x)`` on ``x' = w A0 x + b0 u`` from ``(l, -k1 l/k2)``.

    The jet value at each start is compared with the closed form, and a
    least-squares line through ``|u'(0)|`` against ``l`` gives the growth
    slope. With ``contrast`` (a bounded feedback on the same oscillator) the
    same starts are simulated and ``sup |U'|`` is reported against ``R1``.
    """
    k = np.asarray(k, dtype=float).reshape(-1)
    if k[1] == 0:
        raise ZeroK2("k2 must be nonzero")
    sys = LinearSystem(omega * A0, B0)
    fb = SaturatedLinearFeedback(k, sigma)
    loop = ClosedLoop(sys, fb)
    ls = np.asarray(l_values, dtype=float)
    X0 = np.vstack([ls, -k[0] * ls / k[1]])
    U = control_jet(X0, loop.field, loop.control, 1).derivatives()
    simulated = U[1]
    closed = np.array([counterexample_initial_derivative(l, k, omega, fb.sigma_prime_0) for l in ls])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(closed != 0, np.abs(simulated - closed) / np.abs(closed), np.abs(simulated))
        rel_mag = np.where(closed != 0, np.abs(np.abs(simulated) - np.abs(closed)) / np.abs(closed),
                           np.abs(simulated))
    slope, intercept = np.polyfit(ls, np.abs(simulated), 1) if ls.size > 1 else (np.nan, np.nan)
    expected_slope = fb.sigma_prime_0 * omega * abs(k[0] ** 2 / k[1] + k[1])
    out = {
        "l": ls.tolist(), "simulated": simulated.tolist(), "closed_form": closed.tolist(),
        "rel_error": rel.tolist(), "rel_error_magnitude": rel_mag.tolist(),
        "slope": float(slope), "intercept": float(intercept), "expected_slope": float(expected_slope),
        "slope_rel_error": float(abs(slope - expected_slope) / expected_slope),
    }
    if contrast is not None:
        cl = ClosedLoop(sys, contrast)
        starts = X0.T[ls > 0] if np.any(ls > 0) else X0.T
        res = simulate_batch(cl, starts, horizon, order=1, rtol=rtol, atol=atol)
        sup1 = res.sup_abs[:, 1]
        out["contrast_sup_du"] = sup1.tolist()
        out["contrast_R1"] = R1
        out["contrast_bounded"] = bool(R1 is None or np.all(sup1 <= R1))
    return out


@dataclass
class MultiTuningReport:
    gains: list
    block_reports: list
    certificate: PBoundCertificate | None = None
    battery: BatchResult | None = None
    rounds: int = 0

    @property
    def status(self) -> str:
        if self.certificate is None:
            return "untested"
        if self.certificate.certified:
            return "certified"
        return "bounds-only" if self.certificate.passed else "failed"

    def to_dict(self) -> dict:
        return {"gains": [g.to_list() for g in self.gains], "status": self.status,
                "rounds": self.rounds, "blocks": [r.to_dict() for r in self.block_reports],
                "certificate": None if self.certificate is None else self.certificate.to_dict(),
                "battery": None if self.battery is None else self.battery.to_dict()}


def tune_multi(rf, bounds: BoundSpec, battery, exponent: float | None = None,
               max_rounds: int = 6, **kw) -> MultiTuningReport:
    """Tune every diagonal block on its own, then check the damped composition.

    Each block schedule comes from :func:`tune_gains` on ``(A_ii, b_ii)``
    with the block coordinates of the battery. If the composed law breaks a
    bound on the full plant, every gain is halved and the check repeats.
    """
    from .feedback import synthesize_multi

    battery = np.atleast_2d(np.asarray(battery, dtype=float))
    slices = rf.slices()
    reports = []
    for (Aii, bii), sl in zip(rf.blocks, slices):
        reports.append(tune_gains(LinearSystem(Aii, bii), bounds, battery[:, sl], **kw))
    gains = [r.gains for r in reports]
    out = MultiTuningReport(gains=gains, block_reports=reports)
    run_kw = {k: kw[k] for k in ("horizon", "max_horizon", "rtol", "atol") if k in kw}
    for rnd in range(1, max_rounds + 1):
        sys, fb = synthesize_multi(rf, gains, bounds.p, exponent)
        res = run_battery(ClosedLoop(sys, fb), battery, bounds.p, **run_kw)
        cert = check_p_bounded(res, bounds)
        out.gains, out.certificate, out.battery, out.rounds = gains, cert, res, rnd
        if cert.passed:
            break
        gains = [g.halved() for g in gains]
    return out
