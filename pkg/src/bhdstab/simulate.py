"""Closed-loop simulation: an embedded Dormand-Prince 5(4) integrator with
dense output that advances a whole batch of initial conditions at once,
disturbance signals, trajectory records and streaming sup metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, Divergence, MissingJets, NonPositiveParameter, StepSizeUnderflow
from .jets import control_jet

# Dormand-Prince 5(4) coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_AROWS = [None] + [np.array(r) for r in _A[1:]]
# fifth-order weights minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output
_D = np.array([-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
               -10690763975 / 1880347072, 701980252875 / 199316789632,
               -1453857185 / 822651844, 69997945 / 29380423])

DIVERGENCE_NORM = 1e9


@dataclass
class IntegratorStats:
    steps: int = 0
    rejected: int = 0
    nfev: int = 0

    def add(self, other: "IntegratorStats") -> None:
        self.steps += other.steps
        self.rejected += other.rejected
        self.nfev += other.nfev

    def to_dict(self) -> dict:
        return {"steps": self.steps, "rejected": self.rejected, "nfev": self.nfev}


def _err_norm(err, y0, y1, rtol, atol):
    """Worst per-trajectory RMS of the scaled error estimate."""
    sk = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    r = np.sqrt(np.mean((err / sk) ** 2, axis=0))
    return float(np.max(r))


def _initial_step(fun, t0, y0, f0, rtol, atol, span):
    sk = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sk) ** 2))
    d1 = np.sqrt(np.mean((f0 / sk) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / sk) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def dopri5(fun, t0: float, t1: float, y0, rtol: float = 1e-8, atol: float = 1e-10,
           breakpoints=(), on_step=None, samples_per_step: int = 2, max_step: float = np.inf,
           max_steps: int = 10_000_000, divergence_norm: float = DIVERGENCE_NORM,
           t_eval=None):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1``.

    ``y0`` may be ``(n,)`` or a batch ``(n, N)``; the step size is shared and
    controlled by the worst trajectory. Steps never cross a breakpoint, and
    at a breakpoint the right-hand side is re-evaluated, so piecewise
    signals are integrated one smooth piece at a time. ``on_step(ts, ys)``
    receives ``samples_per_step`` dense-output points per accepted step
    (the step end included) with ``ys`` shaped ``(k,) + y0.shape``. With
    ``t_eval`` it instead receives the dense output at those of the given
    times that fall inside each step.

    Returns the final state and :class:`IntegratorStats`.
    """
    if not t1 > t0:
        raise NonPositiveParameter(f"horizon must be positive, got [{t0}, {t1}]")
    if rtol <= 0 or atol <= 0:
        raise NonPositiveParameter("tolerances must be positive")
    y = np.array(y0, dtype=float)
    shape = y.shape
    K = np.empty((7, y.size))
    stats = IntegratorStats()
    stops = sorted(b for b in set(float(x) for x in breakpoints) if t0 < b < t1) + [float(t1)]
    theta = np.arange(1, samples_per_step + 1) / samples_per_step
    if t_eval is not None:
        t_eval = np.sort(np.asarray(t_eval, dtype=float))
    t = float(t0)
    h = None
    facold = 1e-4
    safe, beta = 0.9, 0.04
    expo1 = 0.2 - 0.75 * beta
    for stop in stops:
        # each piece starts afresh: the field may jump at a breakpoint
        k1 = fun(t, y)
        stats.nfev += 1
        span = stop - t
        if h is None:
            h = _initial_step(fun, t, y, k1, rtol, atol, span)
            stats.nfev += 1
        h = min(h, max_step)
        last_rejected = False
        while t < stop:
            if stats.steps + stats.rejected >= max_steps:
                raise StepSizeUnderflow(f"step budget of {max_steps} exhausted at t={t:.6g}")
            if h < 16 * np.finfo(float).eps * max(abs(t), 1.0):
                raise StepSizeUnderflow(f"step size {h:.3g} underflows at t={t:.6g}")
            final = t + h >= stop - 1e-12 * max(abs(stop), 1.0)
            hh = stop - t if final else h
            K[0] = k1.reshape(-1)
            for s in range(1, 7):
                ys = y + hh * (_AROWS[s] @ K[:s]).reshape(shape)
                K[s] = fun(t + _C[s] * hh, ys).reshape(-1)
            y_new = ys  # stage 7 sits at the fifth-order solution
            stats.nfev += 6
            err = hh * (_E @ K).reshape(shape)
            en = _err_norm(err, y, y_new, rtol, atol)
            if not np.isfinite(en):
                en = 1e10
            fac11 = en ** expo1
            if en <= 1.0:
                fac = fac11 / facold ** beta
                fac = min(10.0, max(0.2, fac / safe))
                h_next = hh / fac
                if last_rejected:
                    h_next = min(h_next, hh)
                facold = max(en, 1e-4)
                if on_step is not None:
                    t_end = stop if final else t + hh
                    if t_eval is None:
                        ths = theta
                    else:
                        sel = t_eval[(t_eval > t) & (t_eval <= t_end)]
                        ths = (sel - t) / hh
                    if ths.size:
                        rc2 = y_new - y
                        rc3 = hh * k1 - rc2
                        rc4 = rc2 - hh * K[6].reshape(shape) - rc3
                        rc5 = hh * (_D @ K).reshape(shape)
                        th = ths.reshape((-1,) + (1,) * y.ndim)
                        th1 = 1.0 - th
                        dense = y[None] + th * (rc2[None] + th1 * (rc3[None] + th * (rc4[None] + th1 * rc5[None])))
                        if t_eval is None:
                            dense[-1] = y_new  # exact step end
                        on_step(t + ths * hh, dense)
                t = stop if final else t + hh
                y = y_new
                k1 = K[6].reshape(shape).copy()
                stats.steps += 1
                last_rejected = False
                if np.max(np.abs(y)) > divergence_norm or not np.all(np.isfinite(y)):
                    raise Divergence(f"state norm exceeded {divergence_norm:.3g} at t={t:.6g}")
                h = min(h_next, max_step)
            else:
                h = hh / min(5.0, fac11 / safe)
                stats.rejected += 1
                last_rejected = True
    return y, stats


def rk4_grid(field, x0, h: float, n_before: int, n_after: int, substeps: int = 16) -> np.ndarray:
    """States on the uniform grid ``t0 + j h`` for ``j = -n_before .. n_after``.

    Classical fixed-step Runge-Kutta run forward and backward from ``x0``;
    the integration error is a smooth function of time, so it barely
    disturbs finite-difference derivatives taken on the grid.
    """
    x0 = np.asarray(x0, dtype=float)

    def march(sign, count):
        out = []
        x = x0.copy()
        dt = sign * h / substeps
        for _ in range(count):
            for _ in range(substeps):
                k1 = field(x)
                k2 = field(x + 0.5 * dt * k1)
                k3 = field(x + 0.5 * dt * k2)
                k4 = field(x + dt * k3)
                x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            out.append(x)
        return out

    back = march(-1.0, n_before)[::-1]
    fwd = march(1.0, n_after)
    return np.stack(back + [x0] + fwd, axis=0)


# disturbances -------------------------------------------------------------

_KINDS = ("zero", "constant", "sinusoid", "piecewise-random")


@dataclass(frozen=True)
class DisturbanceSignal:
    """Additive disturbance ``e(t)`` with ``|e(t)| <= delta`` for ``t >= onset``.

    Before ``onset`` the amplitude is ``pre_amplitude`` (larger by default)
    to exercise the "eventually bounded" part of the contract.
    """

    kind: str
    delta: float
    dim: int
    onset: float = 0.0
    pre_amplitude: float | None = None
    frequency: float = 1.0
    seed: int = 0
    interval: float = 0.1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DimensionMismatch(f"unknown disturbance kind {self.kind!r}; choose from {_KINDS}")
        if self.delta < 0 or self.dim < 1 or self.onset < 0 or self.interval <= 0:
            raise NonPositiveParameter("disturbance parameters out of range")

    @property
    def pre(self) -> float:
        return 2.0 * self.delta if self.pre_amplitude is None else float(self.pre_amplitude)

    def _amp(self, ref):
        return self.pre if ref < self.onset else self.delta

    def _random_value(self, k: int, amp: float) -> np.ndarray:
        rng = np.random.default_rng([self.seed, k])
        v = rng.normal(size=self.dim)
        v /= np.linalg.norm(v) or 1.0
        return amp * rng.uniform() ** (1.0 / self.dim) * v

    def value(self, t: float, ref: float | None = None) -> np.ndarray:
        """``e(t)``; ``ref`` picks the piece for the piecewise parts (defaults to ``t``)."""
        ref = t if ref is None else ref
        amp = self._amp(ref)
        if self.kind == "zero" or amp == 0:
            return np.zeros(self.dim)
        if self.kind == "constant":
            return np.full(self.dim, amp / np.sqrt(self.dim))
        if self.kind == "sinusoid":
            phases = np.arange(self.dim) * np.pi / max(self.dim, 1)
            return amp / np.sqrt(self.dim) * np.sin(self.frequency * t + phases)
        return self._random_value(int(np.floor(ref / self.interval)), amp)

    def breakpoints(self, t0: float, t1: float) -> list:
        pts = []
        if t0 < self.onset < t1:
            pts.append(self.onset)
        if self.kind == "piecewise-random":
            k0 = int(np.floor(t0 / self.interval)) + 1
            k1 = int(np.ceil(t1 / self.interval))
            pts.extend(k * self.interval for k in range(k0, k1))
        return sorted(set(pts))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta, "dim": self.dim, "onset": self.onset,
                "pre_amplitude": self.pre, "frequency": self.frequency, "seed": self.seed,
                "interval": self.interval}

    @classmethod
    def from_dict(cls, d) -> "DisturbanceSignal":
        return cls(**{k: d[k] for k in ("kind", "delta", "dim", "onset", "pre_amplitude",
                                       "frequency", "seed", "interval") if k in d})


def disturbance_family(delta: float, dim: int, seed: int = 0, onset: float = 5.0) -> list:
    """One signal of each kind at level ``delta``."""
    return [DisturbanceSignal(kind, delta, dim, onset=onset, seed=seed) for kind in _KINDS]


def _piecewise_fun(closed_loop, dist):
    """Right-hand side whose disturbance piece is frozen by the segment being integrated."""
    state = {"ref": 0.0}
    if dist is None or dist.kind == "zero":
        return (lambda t, x: closed_loop.field(x)), state

    def fun(t, x):
        dx = closed_loop.field(x)
        if dist is not None and dist.kind != "zero":
            e = dist.value(t, state["ref"])
            dx = dx + (e if x.ndim == 1 else e[:, None])
        return dx

    return fun, state


def _integrate_pieces(closed_loop, dist, x0, t0, t1, rtol, atol, on_step, samples_per_step,
                      max_step=np.inf, t_eval=None):
    """Run the integrator piece by piece between disturbance breakpoints."""
    fun, state = _piecewise_fun(closed_loop, dist)
    bps = [] if dist is None else dist.breakpoints(t0, t1)
    edges = [t0] + bps + [t1]
    stats = IntegratorStats()
    x = np.asarray(x0, dtype=float)
    for a, b in zip(edges[:-1], edges[1:]):
        state["ref"] = 0.5 * (a + b)
        x, st = dopri5(fun, a, b, x, rtol, atol, on_step=on_step,
                       samples_per_step=samples_per_step, max_step=max_step, t_eval=t_eval)
        stats.add(st)
    return x, stats


# trajectories -------------------------------------------------------------

@dataclass
class Trajectory:
    """Time-sampled closed-loop record.

    ``controls`` is ``(M, m)``; ``jets`` (when present) holds
    ``U^(j)`` for ``j = 0..p`` as ``(M, p+1, m)``.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    jets: np.ndarray | None = None
    disturbance: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.controls.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def _columns(self) -> tuple:
        names = ["t"] + [f"x{i + 1}" for i in range(self.n)]
        cols = [self.times[:, None], self.states]
        single = self.m == 1
        names += ["U"] if single else [f"U{i + 1}" for i in range(self.m)]
        cols.append(self.controls)
        if self.jets is not None:
            for j in range(1, self.jets.shape[1]):
                names += [f"U_d{j}"] if single else [f"U{i + 1}_d{j}" for i in range(self.m)]
                cols.append(self.jets[:, j, :])
        if self.disturbance is not None:
            names += [f"e{i + 1}" for i in range(self.n)]
            cols.append(self.disturbance)
        return names, np.hstack(cols)

    def to_csv(self, path) -> None:
        names, data = self._columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in data:
                w.writerow([repr(float(v)) for v in row])
        meta_path = Path(str(path) + ".json")
        meta_path.write_text(json.dumps({"stats": self.stats, "meta": self.meta}, indent=2))

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names, data = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        col = {nme: i for i, nme in enumerate(names)}
        xs = [c for c in names if c.startswith("x")]
        es = [c for c in names if c.startswith("e")]
        us = [c for c in names if c.startswith("U") and "_d" not in c]
        m = len(us)
        orders = sorted({int(c.split("_d")[1]) for c in names if "_d" in c})
        jets = None
        if orders:
            jets = np.zeros((data.shape[0], len(orders) + 1, m))
            jets[:, 0, :] = data[:, [col[u] for u in us]]
            for j in orders:
                jets[:, j, :] = data[:, [col[f"{u}_d{j}"] for u in us]]
        extra = {}
        meta_path = Path(str(path) + ".json")
        if meta_path.exists():
            extra = json.loads(meta_path.read_text())
        return cls(times=data[:, col["t"]], states=data[:, [col[x] for x in xs]],
                   controls=data[:, [col[u] for u in us]], jets=jets,
                   disturbance=data[:, [col[e] for e in es]] if es else None,
                   stats=extra.get("stats", {}), meta=extra.get("meta", {}))

    def summary(self, p: int | None = None, window: float = 0.2) -> dict:
        out = {"horizon": self.horizon, "samples": int(self.times.size),
               "final_norm": float(np.linalg.norm(self.states[-1])), "stats": self.stats}
        out.update(sup_metrics(self, p if p is not None else 0, window,
                               require_jets=p is not None and p > 0))
        return out


def _jets_of(closed_loop, X, order):
    """``U^(j)`` for ``j = 0..order`` at a batch of states ``X`` of shape ``(n, k)``."""
    U = control_jet(X, closed_loop.field, closed_loop.control, order)
    d = U.derivatives()
    if closed_loop.m == 1:
        d = d[:, None, :]
    return d  # (order+1, m, k)


class _Recorder:
    """Collect samples, halving the resolution whenever ``max_samples`` is exceeded."""

    def __init__(self, max_samples: int):
        self.max_samples = max_samples
        self.stride = 1
        self.count = 0
        self.t: list = []
        self.x: list = []

    def __call__(self, ts, xs):
        for t, x in zip(ts, xs):
            if self.count % self.stride == 0:
                self.t.append(float(t))
                self.x.append(np.array(x))
            self.count += 1
        if len(self.t) > self.max_samples:
            self.t = self.t[::2]
            self.x = self.x[::2]
            self.stride *= 2


def integrate(closed_loop, x0, horizon: float, rtol: float = 1e-8, atol: float = 1e-10,
              disturbance: DisturbanceSignal | None = None, jet_order: int | None = None,
              samples_per_step: int = 2, max_samples: int = 200_000,
              t_eval=None) -> Trajectory:
    """Simulate ``x' = A x + B u(x) + e(t)`` from ``x0`` on ``[0, horizon]``.

    Samples are taken at every accepted step (end point plus interior
    dense-output points) or, with ``t_eval``, interpolated onto that grid.
    With ``jet_order`` the control derivatives ``U^(j)`` of the undisturbed
    closed-loop field are attached to each sample.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (closed_loop.n,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, expected ({closed_loop.n},)")
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0 or t_eval[-1] > horizon:
            raise NonPositiveParameter("t_eval must increase strictly within [0, horizon]")
        rec = _Recorder(max(max_samples, t_eval.size))
    else:
        rec = _Recorder(max_samples)
    if t_eval is None or t_eval[0] == 0.0:
        rec([0.0], [x0])
    xT, stats = _integrate_pieces(closed_loop, disturbance, x0, 0.0, float(horizon), rtol, atol,
                                  rec, samples_per_step, t_eval=t_eval)
    times = np.array(rec.t)
    states = np.array(rec.x)
    X = states.T
    U = np.asarray(closed_loop.control(X), dtype=float)
    controls = U[:, None] if closed_loop.m == 1 else U.T
    jets = None
    if jet_order is not None:
        jets = np.moveaxis(_jets_of(closed_loop, X, jet_order), 2, 0)
        jets[:, 0, :] = controls  # same values, one source of truth for order 0
    dist = None
    if disturbance is not None:
        dist = np.array([disturbance.value(t) for t in times])
    meta = {"rtol": rtol, "atol": atol, "x0": x0.tolist(), "horizon": float(horizon)}
    if disturbance is not None:
        meta["disturbance"] = disturbance.to_dict()
    return Trajectory(times=times, states=states, controls=controls, jets=jets, disturbance=dist,
                      stats=stats.to_dict(), meta=meta)


def sup_metrics(traj: Trajectory, p: int, window: float = 0.2, require_jets: bool = True) -> dict:
    """``sup |U^(j)|`` over the samples for ``j = 0..p`` and the trailing-window state norm.

    Raises
    ------
    MissingJets
        If derivatives above order 0 are requested and the trajectory has none.
    """
    if p > 0 and (traj.jets is None or traj.jets.shape[1] < p + 1):
        if require_jets:
            raise MissingJets(f"trajectory carries no control derivatives up to order {p}")
    sups = [float(np.max(np.linalg.norm(traj.controls, axis=1)))] if traj.times.size else [0.0]
    if traj.jets is not None:
        for j in range(1, min(p, traj.jets.shape[1] - 1) + 1):
            sups.append(float(np.max(np.linalg.norm(traj.jets[:, j, :], axis=1))))
    T = traj.horizon
    mask = traj.times >= T - window * T
    norms = np.linalg.norm(traj.states, axis=1)
    return {"sup_abs": sups, "trailing_norm": float(np.max(norms[mask])),
            "window": [float(T - window * T), T]}


# batch runs ---------------------------------------------------------------

@dataclass
class BatchResult:
    """Per-trajectory outcome of a battery run."""

    x0: np.ndarray
    final: np.ndarray
    horizon: np.ndarray
    sup_abs: np.ndarray  # (N, p+1)
    trailing_norm: np.ndarray
    stats: IntegratorStats
    extra_sup: np.ndarray | None = None

    @property
    def converged(self) -> np.ndarray:
        return self.trailing_norm < self.threshold

    threshold: float = 1e-6

    def to_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(), "final": self.final.tolist(), "horizon": self.horizon.tolist(),
            "sup_abs": self.sup_abs.tolist(), "trailing_norm": self.trailing_norm.tolist(),
            "converged": self.converged.tolist(), "threshold": self.threshold,
            "stats": self.stats.to_dict(),
        }


class _SupAccumulator:
    """Streaming per-trajectory maxima of ``|U^(j)|`` and of the state norm after ``t_window``."""

    def __init__(self, closed_loop, order, N, t_window, extra=None, chunk=4096):
        self.cl = closed_loop
        self.order = order
        self.sup = np.zeros((N, order + 1))
        self.extra = extra  # callable X (n, k) -> (N?, ...) per-term sups
        self.extra_sup = None
        self.tail = np.zeros(N)
        self.t_window = t_window
        self.chunk = chunk
        self._buf: list = []
        self._tbuf: list = []

    def __call__(self, ts, xs):
        self._tbuf.extend(ts)
        self._buf.extend(xs)
        if len(self._buf) * xs.shape[-1] >= self.chunk:
            self.flush()

    def flush(self):
        if not self._buf:
            return
        X = np.stack(self._buf, axis=0)  # (k, n, N)
        ts = np.array(self._tbuf)
        self._buf, self._tbuf = [], []
        k, n, N = X.shape
        flat = np.moveaxis(X, 0, 2).reshape(n, N * k)  # columns ordered (traj, sample)
        if self.order >= 0:
            d = _jets_of(self.cl, flat, self.order)  # (order+1, m, N*k)
            mag = np.linalg.norm(d, axis=1).reshape(self.order + 1, N, k)
            self.sup = np.maximum(self.sup, mag.max(axis=2).T)
        if self.extra is not None:
            e = self.extra(flat)  # (..., N*k)
            e = np.abs(e).reshape(e.shape[:-1] + (N, k)).max(axis=-1)
            self.extra_sup = e if self.extra_sup is None else np.maximum(self.extra_sup, e)
        late = ts >= self.t_window
        if np.any(late):
            nrm = np.linalg.norm(X[late], axis=1)  # (k_late, N)
            self.tail = np.maximum(self.tail, nrm.max(axis=0))


def simulate_batch(closed_loop, X0, horizon: float, order: int = 0, rtol: float = 1e-8,
                   atol: float = 1e-10, disturbance: DisturbanceSignal | None = None,
                   window: float = 0.2, extra=None, threshold: float = 1e-6,
                   until_decay: bool = False, max_horizon: float | None = None,
                   samples_per_step: int = 1) -> BatchResult:
    """Run a battery ``X0`` of shape ``(N, n)`` and stream sup metrics.

    With ``until_decay`` the horizon grows by ``1 / (1 - window)`` per segment until every
    trajectory's norm on the trailing window ``[(1-window) T, T]`` is below
    ``threshold`` or ``max_horizon`` is reached. ``extra(X)`` may return any
    additional signal whose per-trajectory sup is accumulated.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    N, n = X0.shape
    if n != closed_loop.n:
        raise DimensionMismatch(f"battery states have {n} entries, plant has {closed_loop.n}")
    max_horizon = horizon if max_horizon is None else max(max_horizon, horizon)
    Y = X0.T.copy()
    acc = _SupAccumulator(closed_loop, order, N, (1 - window) * horizon, extra)
    acc(np.array([0.0]), Y[None])
    stats = IntegratorStats()
    t = 0.0
    T = float(horizon)
    while True:
        acc.t_window = (1 - window) * T
        acc.tail[:] = 0.0
        if t >= acc.t_window:
            # the window starts inside the finished part; carry the current state in
            acc.tail = np.linalg.norm(Y, axis=0)
        Y, st = _integrate_pieces(closed_loop, disturbance, Y, t, T, rtol, atol, acc,
                                  samples_per_step)
        acc.flush()
        stats.add(st)
        t = T
        if not until_decay or np.all(acc.tail < threshold) or T >= max_horizon:
            break
        # the next segment is exactly the next trailing window
        T = min(T / (1 - window), max_horizon)
    res = BatchResult(x0=X0, final=Y.T.copy(), horizon=np.full(N, T), sup_abs=acc.sup,
                      trailing_norm=acc.tail.copy(), stats=stats, extra_sup=acc.extra_sup,
                      threshold=threshold)
    return res
