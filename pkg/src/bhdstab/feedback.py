"""Bounded feedback laws and their closed loops.

Every law evaluates on a single state ``(n,)``, a batch ``(n, N)`` or a
:class:`~bhdstab.jets.Jet` of either, through one code path, so the values
used in simulation and the derivative jets can never drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canonical import (
    Block,
    CanonicalForm,
    Decomposition,
    ReducedForm,
    canonical_form,
    decompose_stabilizable,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    GainOutOfRange,
    NonPositiveGain,
    NonPositiveParameter,
    NonSmoothDescriptor,
    ZeroK2,
)
from .jets import MAX_ORDER, Jet, arctan, outer, power, rsqrt, stack, tanh
from .linalg import LinearSystem


@dataclass(frozen=True)
class GainSchedule:
    """Gains ``a_1 .. a_mu`` in ``(0, 1]`` and the tail products ``Q_i = a_i ... a_mu``."""

    a: tuple

    def __post_init__(self):
        a = tuple(float(x) for x in np.atleast_1d(self.a))
        for x in a:
            if not x > 0:
                raise NonPositiveGain(f"gains must be positive, got {a}")
            if x > 1:
                raise GainOutOfRange(f"gains must not exceed 1, got {a}")
        object.__setattr__(self, "a", a)

    @property
    def mu(self) -> int:
        return len(self.a)

    @property
    def Q(self) -> np.ndarray:
        return np.cumprod(np.array(self.a)[::-1])[::-1].copy() if self.a else np.zeros(0)

    def with_gain(self, i: int, value: float) -> "GainSchedule":
        """Copy with the 1-based gain ``a_i`` replaced."""
        a = list(self.a)
        a[i - 1] = value
        return GainSchedule(tuple(a))

    def halved(self) -> "GainSchedule":
        return GainSchedule(tuple(x / 2 for x in self.a))

    def to_list(self) -> list:
        return list(self.a)


@dataclass(frozen=True)
class BoundSpec:
    """Bounds ``R_0 .. R_p`` on ``sup |U^(j)|``."""

    p: int
    R: tuple

    def __post_init__(self):
        R = tuple(float(r) for r in np.atleast_1d(self.R))
        if self.p < 0 or int(self.p) != self.p:
            raise NonPositiveParameter(f"p must be a non-negative integer, got {self.p}")
        if len(R) != self.p + 1:
            raise DimensionMismatch(f"need p+1 = {self.p + 1} bounds, got {len(R)}")
        if any(not r > 0 for r in R):
            raise NonPositiveParameter(f"bounds must be positive, got {R}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "R", R)

    @property
    def R_min(self) -> float:
        return min(self.R)

    def to_dict(self) -> dict:
        return {"p": self.p, "R": list(self.R)}

    @classmethod
    def from_dict(cls, d) -> "BoundSpec":
        return cls(int(d["p"]), tuple(d["R"]))


def static_bound(gains: GainSchedule) -> float:
    """``a_mu + sum_{i<mu} a_i Q_{i+1}``, which bounds ``|kappa|`` everywhere."""
    return float(np.sum(gains.Q))


def _layout_blocks(layout) -> list:
    blocks, off = [], 0
    for item in layout:
        if isinstance(item, Block):
            blocks.append(item)
            off = item.offset + item.size
            continue
        kind = item if isinstance(item, str) else item[0]
        if kind not in ("oscillator", "integrator"):
            raise DimensionMismatch(f"unknown block kind {kind!r}")
        blk = Block(kind, None, off)
        blocks.append(blk)
        off += blk.size
    return blocks


def selectors(layout) -> tuple:
    """Matrices ``C`` (numerator picks) and ``W`` (tail-norm masks), both ``mu x n``.

    Row i of ``C`` reads ``b0^T y_i`` (or ``y_i``); row i of ``W`` covers
    every state of blocks ``i .. mu``.
    """
    blocks = _layout_blocks(layout)
    n = sum(b.size for b in blocks)
    mu = len(blocks)
    C = np.zeros((mu, n))
    W = np.zeros((mu, n))
    for i, blk in enumerate(blocks):
        C[i, blk.output_index] = 1.0
        W[i, blk.offset:] = 1.0
    return C, W


def _kappa(y, Q, C, W):
    return -(Q @ ((C @ y) * rsqrt(1.0 + W @ (y * y))))


def kappa_eval(y, gains: GainSchedule, layout):
    """Canonical-coordinate law ``-sum_i Q_i (b0^T y_i or y_i) / sqrt(1 + sum_{m>=i} |y_m|^2)``."""
    C, W = selectors(layout)
    if (y.shape[0] if isinstance(y, Jet) else np.shape(y)[0]) != C.shape[1]:
        raise DimensionMismatch(f"state has wrong length for a layout of size {C.shape[1]}")
    if gains.mu != C.shape[0]:
        raise DimensionMismatch(f"{gains.mu} gains for {C.shape[0]} blocks")
    if not isinstance(y, Jet):
        y = np.asarray(y, dtype=float)
    return _kappa(y, gains.Q, C, W)


class CanonicalFeedback:
    """``kappa(y)`` on the canonical coordinates of one controllable critical pair."""

    kind = "canonical-single"
    m = 1
    max_order = MAX_ORDER

    def __init__(self, canonical: CanonicalForm, gains: GainSchedule):
        if gains.mu != canonical.mu:
            raise DimensionMismatch(f"{gains.mu} gains for mu={canonical.mu}")
        self.canonical = canonical
        self.gains = gains
        self.C, self.W = selectors(canonical.layout)
        self.Q = gains.Q

    @property
    def n(self) -> int:
        return self.C.shape[1]

    @property
    def mu(self) -> int:
        return self.gains.mu

    def control(self, y):
        return _kappa(y, self.Q, self.C, self.W)

    def terms(self, y):
        """Summands ``Q_i * num_i / sqrt(f_i)`` stacked along the first axis (sign included)."""
        return np.diag(-self.Q) @ ((self.C @ y) * rsqrt(1.0 + self.W @ (y * y)))

    def field(self, y):
        """Canonical closed loop ``J y + bhat kappa(y)``."""
        return self.canonical.J @ y + outer(self.canonical.bhat, self.control(y))

    def gain_at_origin(self) -> np.ndarray:
        # denominators are 1 with zero gradient at the origin
        return -(self.Q @ self.C)

    def static_bound(self) -> float:
        return static_bound(self.gains)

    def tail(self, i: int) -> "TailLoop":
        """Closed loop of blocks ``i .. mu`` (1-based), which does not see earlier blocks."""
        blk = self.canonical.layout[i - 1]
        sl = slice(blk.offset, self.n)
        return TailLoop(J=self.canonical.J[sl, sl], bhat=self.canonical.bhat[sl],
                        Q=self.Q[i - 1:], C=self.C[i - 1:, sl], W=self.W[i - 1:, sl],
                        first=i)

    def derivatives_fdb(self, y_derivs) -> np.ndarray:
        """``U^(k)`` from state derivatives ``y^(k)`` by Leibniz and the Bell-polynomial chain rule.

        Independent of jet arithmetic for the composition step; see
        :func:`kappa_derivatives_fdb`.
        """
        return kappa_derivatives_fdb(y_derivs, self.Q, self.C, self.W)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "canonical": self.canonical.to_dict(),
                "gains": self.gains.to_list()}


@dataclass
class TailLoop:
    """Autonomous closed loop of the trailing blocks of a canonical cascade."""

    J: np.ndarray
    bhat: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    W: np.ndarray
    first: int = 1

    m = 1

    @property
    def n(self) -> int:
        return self.J.shape[0]

    def control(self, y):
        return _kappa(y, self.Q, self.C, self.W)

    def field(self, y):
        return self.J @ y + outer(self.bhat, self.control(y))

    def first_term(self, y):
        """Contribution of block ``first`` alone, ``-Q_first num / sqrt(f)``."""
        return -self.Q[0] * ((self.C[0] @ y) * rsqrt(1.0 + self.W[0] @ (y * y)))


def kappa_derivatives_fdb(y_derivs, Q, C, W) -> np.ndarray:
    """Time derivatives of ``kappa(y(t))`` from ``y, y', ..., y^(K)``.

    ``f_i = 1 + W_i (y*y)`` is differentiated by the Leibniz rule,
    ``f_i^{-1/2}`` by the Bell-polynomial chain rule with the closed-form
    derivatives of ``s^{-1/2}``, and the numerator product again by Leibniz.
    """
    from .jets import inv_sqrt_composite_derivs, leibniz

    yd = [np.asarray(v, dtype=float) for v in y_derivs]
    sq = leibniz(yd, yd)
    f = [W @ s for s in sq]
    f[0] = f[0] + 1.0
    g = inv_sqrt_composite_derivs(f)
    num = [C @ v for v in yd]
    prod = leibniz(num, g)
    return np.array([-(Q @ t) for t in prod])


class StateFeedback:
    """``nu(x) = kappa(T x)`` in the plant coordinates.

    ``T`` already includes the split into Hurwitz and critical parts, so it
    maps the full state onto the canonical critical coordinates. With no
    critical modes the law is identically zero.
    """

    kind = "original-single"
    m = 1

    def __init__(self, law: CanonicalFeedback | None, T: np.ndarray, n: int):
        self.law = law
        self.T = np.asarray(T, dtype=float).reshape(-1, n)
        self._n = n
        self.max_order = MAX_ORDER

    @property
    def n(self) -> int:
        return self._n

    @property
    def gains(self) -> GainSchedule | None:
        return None if self.law is None else self.law.gains

    def control(self, x):
        if self.law is None:
            if isinstance(x, Jet):
                return Jet(np.zeros((x.order + 1,) + x.shape[1:]))
            return np.zeros(np.shape(x)[1:])
        return self.law.control(self.T @ x)

    def gain_at_origin(self) -> np.ndarray:
        if self.law is None:
            return np.zeros(self.n)
        return self.law.gain_at_origin() @ self.T

    def static_bound(self) -> float:
        return 0.0 if self.law is None else self.law.static_bound()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "T": self.T.tolist(),
                "law": None if self.law is None else self.law.to_dict()}


class MultiInputFeedback:
    """Per-block laws damped by the downstream state norms.

    ``u_i = kappa_i(x_i) / (1 + |x_{i+1}|^2 + ... + |x_q|^2)^exponent``; the
    last block is undamped. States of a leading Hurwitz block are ignored.
    """

    kind = "multi-input"

    def __init__(self, blocks: list, slices: list, n: int, exponent: float):
        if len(blocks) != len(slices) or not blocks:
            raise DimensionMismatch("need one slice per block feedback")
        if exponent < 0:
            raise NonPositiveParameter(f"exponent must be >= 0, got {exponent}")
        self.blocks = list(blocks)
        self.slices = list(slices)
        self._n = n
        self.exponent = float(exponent)
        self.max_order = min(b.max_order for b in blocks)

    @property
    def n(self) -> int:
        return self._n

    @property
    def m(self) -> int:
        return len(self.blocks)

    def control(self, x):
        parts = [x[sl] for sl in self.slices]
        return stack(multi_input_eval(parts, self.blocks, self.exponent))

    def gain_at_origin(self) -> np.ndarray:
        K = np.zeros((self.m, self.n))
        for i, (fb, sl) in enumerate(zip(self.blocks, self.slices)):
            K[i, sl] = fb.gain_at_origin()
        return K

    def static_bound(self) -> float:
        """Bound on the Euclidean norm of the control vector."""
        return float(np.sqrt(sum(b.static_bound() ** 2 for b in self.blocks)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "exponent": self.exponent,
                "slices": [[s.start, s.stop] for s in self.slices],
                "blocks": [b.to_dict() for b in self.blocks]}


def multi_input_eval(x_blocks, fds, exponent: float) -> list:
    """Controls ``u_1 .. u_q`` of the block-damped composition."""
    if len(x_blocks) != len(fds):
        raise DimensionMismatch(f"{len(x_blocks)} block states for {len(fds)} feedbacks")
    q = len(fds)
    sq = [(xb * xb).sum(0) for xb in x_blocks]
    out = []
    for i in range(q):
        ki = fds[i].control(x_blocks[i])
        if i < q - 1:
            tail = sq[i + 1]
            for s in sq[i + 2:]:
                tail = tail + s
            ki = ki * power(1.0 + tail, -exponent)
        out.append(ki)
    return out


_SIGMAS = ("tanh", "arctan", "clip")


def _sigma(name: str, s):
    if name == "tanh":
        return tanh(s)
    if name == "arctan":
        # scaled so that sigma'(0) = 1 and |sigma| < 1
        return (2.0 / np.pi) * arctan((np.pi / 2.0) * s)
    if name == "clip":
        return np.clip(s, -1.0, 1.0)
    raise ConfigError(f"unknown saturation {name!r}; choose from {_SIGMAS}")


def saturated_linear_eval(x, k, sigma: str = "tanh"):
    """``-sigma(k^T x)``."""
    k = np.asarray(k, dtype=float).reshape(-1)
    if k.size != 2:
        raise DimensionMismatch("k must have two entries")
    if k[1] == 0:
        raise ZeroK2("k2 must be nonzero")
    if not isinstance(x, Jet):
        x = np.asarray(x, dtype=float)
    return -_sigma(sigma, k @ x)


class SaturatedLinearFeedback:
    """``u = -sigma(k^T x)`` on the two-dimensional oscillator."""

    kind = "saturated-linear"
    m = 1
    n = 2

    def __init__(self, k, sigma: str = "tanh"):
        k = np.asarray(k, dtype=float).reshape(-1)
        if k.size != 2:
            raise DimensionMismatch("k must have two entries")
        if k[1] == 0:
            raise ZeroK2("k2 must be nonzero")
        if sigma not in _SIGMAS:
            raise ConfigError(f"unknown saturation {sigma!r}; choose from {_SIGMAS}")
        self.k = k
        self.sigma = sigma
        self.max_order = 0 if sigma == "clip" else MAX_ORDER

    @property
    def sigma_prime_0(self) -> float:
        return 1.0

    def control(self, x):
        if isinstance(x, Jet) and x.order > self.max_order:
            raise NonSmoothDescriptor(f"{self.sigma} saturation has no derivatives of order {x.order}")
        return -_sigma(self.sigma, self.k @ x)

    def gain_at_origin(self) -> np.ndarray:
        return -self.sigma_prime_0 * self.k

    def static_bound(self) -> float:
        return 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k.tolist(), "sigma": self.sigma}


def counterexample_initial_derivative(l: float, k, omega: float, sigma_prime_0: float = 1.0) -> float:
    """Closed form ``-sigma'(0) omega l (k1^2/k2 + k2)`` for the start ``(l, -k1 l / k2)``."""
    k1, k2 = (float(v) for v in np.asarray(k, dtype=float).reshape(-1))
    if k2 == 0:
        raise ZeroK2("k2 must be nonzero")
    return -sigma_prime_0 * omega * l * (k1**2 / k2 + k2)


def nu_eval(x, fd):
    """Evaluate any feedback descriptor in its own (plant) coordinates."""
    if not isinstance(x, Jet):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != fd.n:
            raise DimensionMismatch(f"state of length {x.shape[0]} for a feedback on {fd.n} states")
    return fd.control(x)


class ClosedLoop:
    """``x' = A x + B u(x) + e(t)``."""

    def __init__(self, system: LinearSystem, feedback):
        if feedback.n != system.n:
            raise DimensionMismatch(f"feedback acts on {feedback.n} states, plant has {system.n}")
        if feedback.m != system.m:
            raise DimensionMismatch(f"feedback has {feedback.m} outputs, plant has {system.m} inputs")
        self.system = system
        self.feedback = feedback
        self._fast = None
        if isinstance(feedback, StateFeedback) and feedback.law is not None:
            self._fast = self._state_feedback_field()

    def _state_feedback_field(self):
        """Array-only evaluation of the single-input loop with the matrices pre-multiplied."""
        law, T = self.feedback.law, self.feedback.T
        A, b = self.system.A, self.system.B[:, 0]
        CT, W, Q = law.C @ T, law.W, law.Q

        def f(x):
            y = T @ x
            u = -(Q @ ((CT @ x) / np.sqrt(1.0 + W @ (y * y))))
            return A @ x + np.multiply.outer(b, u)

        return f

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def m(self) -> int:
        return self.system.m

    def control(self, x):
        return self.feedback.control(x)

    def field(self, x):
        if self._fast is not None and not isinstance(x, Jet):
            return self._fast(x)
        u = self.feedback.control(x)
        if self.m == 1:
            return self.system.A @ x + outer(self.system.B[:, 0], u)
        return self.system.A @ x + self.system.B @ u

    def jacobian_at_origin(self) -> np.ndarray:
        K = np.atleast_2d(self.feedback.gain_at_origin())
        return self.system.A + self.system.B @ K

    def linearization_spectrum(self) -> np.ndarray:
        return np.linalg.eigvals(self.jacobian_at_origin())


# synthesis -----------------------------------------------------------------

def synthesize(system: LinearSystem, gains, tol: float | None = None,
               decomposition: Decomposition | None = None) -> StateFeedback:
    """Single-input bounded feedback for a stabilizable pair.

    The critical part is put in canonical form with the given gains and the
    law is pulled back through both changes of coordinates.
    """
    if system.m != 1:
        raise DimensionMismatch("synthesize handles single-input plants; use synthesize_multi")
    dec = decomposition or decompose_stabilizable(system.A, system.B[:, 0], tol)
    mu = dec.profile.mu
    if mu == 0:
        return StateFeedback(None, np.zeros((0, system.n)), system.n)
    if not isinstance(gains, GainSchedule):
        gains = GainSchedule(tuple(gains))
    cf = canonical_form(dec.A2, dec.b2, gains.a, profile=dec.profile)
    law = CanonicalFeedback(cf, gains)
    return StateFeedback(law, cf.T @ dec.M_critical, system.n)


def synthesize_multi(rf: ReducedForm, gains_list, p: int, exponent: float | None = None,
                     tol: float | None = None) -> tuple:
    """Block-damped composition over a reduced controllability form.

    Returns ``(LinearSystem, MultiInputFeedback)``; ``exponent`` defaults to ``p + 1``.
    """
    if len(gains_list) != rf.q:
        raise DimensionMismatch(f"{len(gains_list)} gain schedules for {rf.q} blocks")
    A, B = rf.assemble()
    blocks = []
    for (Aii, bii), g in zip(rf.blocks, gains_list):
        blocks.append(synthesize(LinearSystem(Aii, bii), g, tol))
    exp = p + 1 if exponent is None else exponent
    fb = MultiInputFeedback(blocks, rf.slices(), A.shape[0], exp)
    return LinearSystem(A, B), fb


def feedback_from_dict(d):
    """Rebuild any feedback written by ``to_dict``."""
    kind = d.get("kind")
    if kind == "canonical-single":
        return CanonicalFeedback(CanonicalForm.from_dict(d["canonical"]), GainSchedule(tuple(d["gains"])))
    if kind == "original-single":
        law = None if d.get("law") is None else feedback_from_dict(d["law"])
        n = int(d["n"])
        return StateFeedback(law, np.array(d["T"], dtype=float).reshape(-1, n), n)
    if kind == "multi-input":
        blocks = [feedback_from_dict(b) for b in d["blocks"]]
        slices = [slice(int(a), int(b)) for a, b in d["slices"]]
        return MultiInputFeedback(blocks, slices, int(d["n"]), float(d["exponent"]))
    if kind == "saturated-linear":
        return SaturatedLinearFeedback(d["k"], d.get("sigma", "tanh"))
    raise ConfigError(f"unknown feedback kind {kind!r}")
