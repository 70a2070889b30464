"""Truncated Taylor arithmetic for exact time derivatives of the control
signal, plus the Bell-polynomial chain rule and finite-difference stencils
used to cross-check it.

A :class:`Jet` holds normalized coefficients ``c[k] = f^(k)(t) / k!`` for
``k = 0..K``; trailing axes of ``c`` let one jet carry a vector, a matrix of
states or a whole batch of sample points.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial

import numpy as np

from .errors import InvalidOrder, OrderTooHigh, TooFewSamples

#: Highest supported jet order; factorial-scaled coefficients stay exact below it.
MAX_ORDER = 12


class Jet:
    """Truncated power series in time with array-valued coefficients."""

    # make numpy hand mixed expressions back to Jet's operators
    __array_ufunc__ = None

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 0:
            raise InvalidOrder("a jet needs at least one coefficient")
        self.c = c

    # construction ------------------------------------------------------
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        v = np.asarray(value, dtype=float)
        c = np.zeros((order + 1,) + v.shape)
        c[0] = v
        return cls(c)

    @classmethod
    def from_derivatives(cls, derivs) -> "Jet":
        d = np.asarray(derivs, dtype=float)
        scale = np.array([1.0 / factorial(k) for k in range(d.shape[0])])
        return cls(d * scale.reshape((-1,) + (1,) * (d.ndim - 1)))

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    @property
    def shape(self) -> tuple:
        return self.c.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def derivatives(self) -> np.ndarray:
        """``f^(k)`` for ``k = 0..K`` along the first axis."""
        scale = np.array([float(factorial(k)) for k in range(self.order + 1)])
        return self.c * scale.reshape((-1,) + (1,) * (self.c.ndim - 1))

    def copy(self) -> "Jet":
        return Jet(self.c.copy())

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, shape={self.shape})"

    # helpers -----------------------------------------------------------
    def _lift(self, other) -> np.ndarray:
        """Coefficient array of ``other`` compatible with ``self``."""
        if isinstance(other, Jet):
            if other.order != self.order:
                raise InvalidOrder(f"jet orders differ: {self.order} vs {other.order}")
            return other.c
        o = np.asarray(other, dtype=float)
        c = np.zeros((self.order + 1,) + np.broadcast_shapes(o.shape, self.shape))
        c[0] = o
        return c

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.c[(slice(None),) + idx])

    def __len__(self) -> int:
        return self.shape[0]

    # arithmetic --------------------------------------------------------
    def __neg__(self):
        return Jet(-self.c)

    def __add__(self, other):
        return Jet(self.c + self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(self.c - self._lift(other))

    def __rsub__(self, other):
        return Jet(self._lift(other) - self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            o = np.asarray(other, dtype=float)
            return Jet(self.c * o[None])
        return Jet(_cauchy(self.c, self._lift(other)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other._pow(-1.0)
        return Jet(self.c / np.asarray(other, dtype=float)[None])

    def __rtruediv__(self, other):
        return self._pow(-1.0) * other

    def __pow__(self, alpha):
        return self._pow(float(alpha))

    def __matmul__(self, M):
        """``jet @ M`` contracting the last trailing axis."""
        M = np.asarray(M, dtype=float)
        return Jet(np.tensordot(self.c, M, axes=([self.c.ndim - 1], [0])))

    def __rmatmul__(self, M):
        """``M @ jet`` contracting the first trailing axis."""
        M = np.asarray(M, dtype=float)
        out = np.tensordot(M, self.c, axes=([M.ndim - 1], [1]))
        return Jet(np.moveaxis(out, M.ndim - 1, 0))

    def sum(self, axis=0) -> "Jet":
        """Sum over a trailing axis (0 is the first trailing axis)."""
        return Jet(self.c.sum(axis=axis + 1))

    def _pow(self, alpha: float) -> "Jet":
        f = self.c
        K = self.order
        h = np.zeros_like(f)
        h[0] = f[0] ** alpha
        for k in range(1, K + 1):
            acc = np.zeros_like(f[0])
            for j in range(1, k + 1):
                acc = acc + ((alpha + 1.0) * j - k) * f[j] * h[k - j]
            h[k] = acc / (k * f[0])
        return Jet(h)


def _cauchy(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    K = f.shape[0] - 1
    shape = np.broadcast_shapes(f.shape[1:], g.shape[1:])
    out = np.zeros((K + 1,) + shape)
    for k in range(K + 1):
        for j in range(k + 1):
            out[k] += f[j] * g[k - j]
    return out


def power(x, alpha: float):
    if isinstance(x, Jet):
        return x._pow(alpha)
    return np.power(x, alpha)


def rsqrt(x):
    """``x ** -1/2`` for arrays and jets."""
    if isinstance(x, Jet):
        return x._pow(-0.5)
    return 1.0 / np.sqrt(x)


def tanh(x):
    if not isinstance(x, Jet):
        return np.tanh(x)
    s = x.c
    K = x.order
    t = np.zeros_like(s)
    w = np.zeros_like(s)  # w = 1 - t^2
    t[0] = np.tanh(s[0])
    w[0] = 1.0 - t[0] ** 2
    for k in range(1, K + 1):
        acc = np.zeros_like(s[0])
        for j in range(1, k + 1):
            acc = acc + j * s[j] * w[k - j]
        t[k] = acc / k
        w[k] = -sum(t[i] * t[k - i] for i in range(k + 1))
    return Jet(t)


def arctan(x):
    if not isinstance(x, Jet):
        return np.arctan(x)
    s = x.c
    K = x.order
    r = (1.0 + x * x)._pow(-1.0).c
    a = np.zeros_like(s)
    a[0] = np.arctan(s[0])
    for k in range(1, K + 1):
        acc = np.zeros_like(s[0])
        for j in range(1, k + 1):
            acc = acc + j * s[j] * r[k - j]
        a[k] = acc / k
    return Jet(a)


def outer(vec, u):
    """``vec * u`` where ``u`` is scalar-per-sample: result has ``vec`` on the first trailing axis."""
    vec = np.asarray(vec, dtype=float)
    if isinstance(u, Jet):
        return Jet(np.moveaxis(np.multiply.outer(vec, u.c), 0, 1))
    return np.multiply.outer(vec, u)


def stack(items, axis: int = 0):
    """Stack arrays or jets along a new trailing axis."""
    if any(isinstance(it, Jet) for it in items):
        K = next(it.order for it in items if isinstance(it, Jet))
        cs = [it.c if isinstance(it, Jet) else Jet.constant(it, K).c for it in items]
        return Jet(np.stack(cs, axis=axis + 1))
    return np.stack([np.asarray(it, dtype=float) for it in items], axis=axis)


def check_order(K: int) -> int:
    if int(K) != K or K < 0:
        raise InvalidOrder(f"order must be a non-negative integer, got {K}")
    if K > MAX_ORDER:
        raise OrderTooHigh(f"order {K} exceeds the supported maximum {MAX_ORDER}")
    return int(K)


def state_jet(x0, field, order: int) -> Jet:
    """Taylor jet of the solution of ``x' = field(x)`` through ``x0``.

    Coefficient ``j`` of ``field(X)`` only involves coefficients ``<= j`` of
    ``X``, so ``X[j+1] = field(X)[j] / (j+1)`` fills the jet one order at a
    time.
    """
    K = check_order(order)
    X = Jet.constant(x0, K)
    for j in range(K):
        F = field(X)
        X.c[j + 1] = F.c[j] / (j + 1)
    return X


def control_jet(x0, field, control, order: int) -> Jet:
    """Jet of ``U(t) = control(x(t))`` along the autonomous closed loop.

    ``x0`` may carry extra trailing axes (a batch of states); ``field`` and
    ``control`` must accept arrays and jets alike.
    """
    X = state_jet(x0, field, order)
    U = control(X)
    if not isinstance(U, Jet):
        U = Jet.constant(U, X.order)
    return U


# Bell polynomials and the chain rule ---------------------------------------

def g_derivative_coeff(k: int) -> float:
    """``d_k`` with ``d^k/ds^k s^{-1/2} = d_k s^{-1/2-k}``."""
    if k < 0:
        raise InvalidOrder(f"k must be >= 0, got {k}")
    d = 1.0
    for l in range(k):
        d *= -(0.5 + l)
    return d


@lru_cache(maxsize=None)
def partitions(k: int, a: int) -> tuple:
    """All ``(delta, c_delta)`` with ``sum delta = a`` and ``sum l*delta_l = k``.

    ``delta`` has ``k - a + 1`` non-negative entries; ``c_delta`` is the exact
    integer ``k! / prod(delta_l! (l!)^delta_l)``. Tuples are produced in
    lexicographic order by backtracking.
    """
    if not (1 <= a <= k):
        raise InvalidOrder(f"need 1 <= a <= k, got k={k}, a={a}")
    L = k - a + 1
    out = []
    delta = [0] * L

    def rec(pos, count_left, weight_left):
        if pos == L:
            if count_left == 0 and weight_left == 0:
                denom = 1
                for l, dl in enumerate(delta, start=1):
                    denom *= factorial(dl) * factorial(l) ** dl
                out.append((tuple(delta), factorial(k) // denom))
            return
        l = pos + 1
        for dl in range(min(count_left, weight_left // l) + 1):
            delta[pos] = dl
            rec(pos + 1, count_left - dl, weight_left - l * dl)
        delta[pos] = 0

    rec(0, a, k)
    return tuple(out)


def bell_polynomial(k: int, a: int, phi_derivs):
    """Partial Bell polynomial ``B_{k,a}(phi', phi'', ...)``.

    ``phi_derivs[l-1]`` holds ``phi^(l)``; at least ``k - a + 1`` entries are
    needed. Entries may be arrays.
    """
    if not (1 <= a <= k):
        raise InvalidOrder(f"need 1 <= a <= k, got k={k}, a={a}")
    L = k - a + 1
    if len(phi_derivs) < L:
        raise InvalidOrder(f"B_{{{k},{a}}} needs {L} derivatives, got {len(phi_derivs)}")
    total = 0.0
    for delta, coeff in partitions(k, a):
        term = float(coeff)
        for l, dl in enumerate(delta, start=1):
            if dl:
                term = term * np.asarray(phi_derivs[l - 1], dtype=float) ** dl
        total = total + term
    return total


def faa_di_bruno(rho_derivs, phi_derivs) -> list:
    """``[rho o phi]^(k)`` for ``k = 1..K`` with ``K = len(phi_derivs)``.

    ``rho_derivs[a-1]`` is ``rho^(a)`` evaluated at ``phi(t)``.
    """
    K = len(phi_derivs)
    if len(rho_derivs) < K:
        raise InvalidOrder(f"need {K} outer derivatives, got {len(rho_derivs)}")
    out = []
    for k in range(1, K + 1):
        acc = 0.0
        for a in range(1, k + 1):
            acc = acc + np.asarray(rho_derivs[a - 1], dtype=float) * bell_polynomial(k, a, phi_derivs)
        out.append(acc)
    return out


def bell_number(k: int) -> int:
    """Number of set partitions of ``k`` items, as ``sum_a B_{k,a}(1, ..., 1)``."""
    return sum(c for a in range(1, k + 1) for _, c in partitions(k, a)) if k else 1


def leibniz(f_derivs, g_derivs) -> list:
    """Derivatives of a product from the derivatives of its factors."""
    K = min(len(f_derivs), len(g_derivs)) - 1
    return [sum(comb(k, j) * f_derivs[j] * g_derivs[k - j] for j in range(k + 1))
            for k in range(K + 1)]


def inv_sqrt_composite_derivs(f_derivs) -> list:
    """Derivatives of ``f(t)^{-1/2}`` via the chain rule with ``g(s) = s^{-1/2}``."""
    f0 = np.asarray(f_derivs[0], dtype=float)
    K = len(f_derivs) - 1
    rho = [g_derivative_coeff(a) * f0 ** (-0.5 - a) for a in range(1, K + 1)]
    return [f0 ** -0.5] + faa_di_bruno(rho, list(f_derivs[1:]))


# finite differences ---------------------------------------------------------

def fornberg_weights(offsets, k: int) -> np.ndarray:
    """Weights of the order-``k`` derivative at 0 on the given grid offsets."""
    x = np.asarray(offsets, dtype=float)
    n = x.size
    C = np.zeros((n, k + 1))
    C[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0]
    for i in range(1, n):
        mn = min(i, k)
        c2 = 1.0
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for m in range(mn, 0, -1):
                    C[i, m] = c1 * (m * C[i - 1, m - 1] - c5 * C[i - 1, m]) / c2
                C[i, 0] = -c1 * c5 * C[i - 1, 0] / c2
            for m in range(mn, 0, -1):
                C[j, m] = (c4 * C[j, m] - m * C[j, m - 1]) / c3
            C[j, 0] = c4 * C[j, 0] / c3
        c1 = c2
    return C[:, k]


def central_stencil(k: int, accuracy: int = 2) -> tuple:
    """Offsets and weights of the central stencil of the given even accuracy order."""
    if k < 1:
        raise InvalidOrder(f"derivative order must be >= 1, got {k}")
    if accuracy < 2 or accuracy % 2:
        raise InvalidOrder(f"accuracy must be a positive even integer, got {accuracy}")
    npts = 2 * ((k + 1) // 2) - 1 + accuracy
    r = (npts - 1) // 2
    offsets = np.arange(-r, r + 1)
    return offsets, fornberg_weights(offsets, k)


def finite_difference_derivatives(samples, h: float, k: int, accuracy: int = 2) -> np.ndarray:
    """Central-difference estimates of the ``k``-th derivative.

    ``samples`` is uniformly spaced along axis 0; estimates are returned for
    every point where the full stencil fits (the middle point of a 5-sample
    series for ``k = 3, 4`` at the default accuracy).

    Raises
    ------
    TooFewSamples
        If fewer than ``max(k + 3, stencil width)`` samples are supplied.
    """
    y = np.asarray(samples, dtype=float)
    offsets, w = central_stencil(k, accuracy)
    npts = offsets.size
    need = max(npts, k + 3)
    if y.shape[0] < need:
        raise TooFewSamples(f"need at least {need} samples for k={k}, got {y.shape[0]}")
    r = npts // 2
    m = y.shape[0] - 2 * r
    out = np.zeros((m,) + y.shape[1:])
    for wi, off in zip(w, offsets):
        out += wi * y[r + off: r + off + m]
    return out / h**k
