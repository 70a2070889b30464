"""Small dense linear algebra: eigenvalue classification, controllability
tests and the closed-form 2x2 Lyapunov data of the damped oscillator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonPositiveParameter, PositiveRealPartEigenvalue

#: Rotation generator and its input vector.
A0 = np.array([[0.0, 1.0], [-1.0, 0.0]])
B0 = np.array([0.0, 1.0])

_EPS = np.finfo(float).eps


def as_matrix(M, name="matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {M.shape}")
    return M


def as_column(b, n=None, name="b") -> np.ndarray:
    """Return ``b`` as a flat vector of length ``n``."""
    b = np.asarray(b, dtype=float).reshape(-1)
    if n is not None and b.size != n:
        raise DimensionMismatch(f"{name} has {b.size} entries, expected {n}")
    return b


@dataclass(frozen=True)
class LinearSystem:
    """Plant ``x' = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise DimensionMismatch(f"B shape {B.shape} inconsistent with A {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, d) -> "LinearSystem":
        return cls(np.array(d["A"], dtype=float), np.array(d["B"], dtype=float))


@dataclass(frozen=True)
class SpectralProfile:
    """Critical part of the spectrum of A.

    ``s`` counts conjugate pairs ``+-i w`` with ``w > 0`` (with multiplicity),
    ``z`` the multiplicity of zero and ``mu = s + z``. ``omegas`` lists the s
    frequencies in descending order, repetitions kept.
    """

    s: int
    z: int
    omegas: tuple
    tol: float
    hurwitz: int = 0

    @property
    def mu(self) -> int:
        return self.s + self.z

    @property
    def n_critical(self) -> int:
        return 2 * self.s + self.z

    def to_dict(self) -> dict:
        return {"s": self.s, "z": self.z, "mu": self.mu, "omegas": list(self.omegas),
                "tol": self.tol, "hurwitz": self.hurwitz}


def _single_linkage(points: np.ndarray, radius: float) -> list:
    """Index groups of complex points connected by hops of length <= radius."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(points[i] - points[j]) <= radius:
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    # keep detection order of the first member
    return sorted(groups.values(), key=lambda g: g[0])


def spectral_profile(A, tol: float | None = None) -> SpectralProfile:
    """Classify the eigenvalues of ``A``.

    Eigenvalues of a defective matrix are only computed to about
    ``eps**(1/k)`` for a Jordan block of size k, while the mean of the
    perturbed cluster stays accurate to ``eps``. Eigenvalues near the
    imaginary axis are therefore grouped (tight radius first, then a radius
    scaled for the worst possible block size) and each group is classified
    by its mean.

    Raises
    ------
    PositiveRealPartEigenvalue
        If some group has mean real part above ``tol``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    fro = float(np.linalg.norm(A))
    if tol is None:
        tol = 1e-9 * max(fro, 1.0)
    if tol <= 0:
        raise NonPositiveParameter("tol must be positive")
    scale = max(fro, 1.0)
    r_tight = 1e-6 * scale
    r_loose = max(10.0 * _EPS ** (1.0 / n) * scale, r_tight)

    eig = scipy.linalg.eigvals(A)
    if np.any(eig.real > r_loose):
        worst = eig[np.argmax(eig.real)]
        raise PositiveRealPartEigenvalue(f"eigenvalue {worst:.6g} has positive real part")
    near = np.flatnonzero(np.abs(eig.real) <= r_loose)
    hurwitz = n - near.size

    clusters = []  # (mean, size, radius used)
    leftover = []
    for grp in _single_linkage(eig[near], r_tight):
        idx = near[grp]
        mean = eig[idx].mean()
        others = np.setdiff1d(near, idx)
        # a tight group with near-critical neighbours may be a fragment of a
        # split Jordan block; leave it to the loose pass
        isolated = not others.size or np.min(
            np.abs(eig[idx][:, None] - eig[others][None, :])) > r_loose
        if isolated and abs(mean.real) <= tol:
            clusters.append((mean, len(idx), r_tight, idx[0]))
        else:
            leftover.extend(idx.tolist())
    if leftover:
        leftover = np.array(sorted(leftover))
        for grp in _single_linkage(eig[leftover], r_loose):
            idx = leftover[grp]
            mean = eig[idx].mean()
            if mean.real > tol:
                raise PositiveRealPartEigenvalue(
                    f"eigenvalue cluster at {mean:.6g} has positive real part")
            if mean.real < -tol:
                hurwitz += len(idx)
            else:
                clusters.append((mean, len(idx), r_loose, idx[0]))

    clusters.sort(key=lambda c: c[3])
    z = 0
    omegas = []
    for mean, size, radius, _ in clusters:
        if abs(mean.imag) <= radius:
            z += size
        elif mean.imag > 0:
            omegas.extend([float(mean.imag)] * size)
    # stable sort keeps detection order among equal frequencies
    omegas = sorted(omegas, key=lambda w: -w)
    return SpectralProfile(s=len(omegas), z=z, omegas=tuple(omegas), tol=tol, hurwitz=hurwitz)


def controllability_matrix(A, b) -> np.ndarray:
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    if b.shape[0] != A.shape[0]:
        raise DimensionMismatch("A and b have inconsistent dimensions")
    cols = [b]
    for _ in range(A.shape[0] - 1):
        cols.append(A @ cols[-1])
    return np.hstack(cols)


def numerical_rank(M, tol: float = 1e-10) -> int:
    sv = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def is_controllable(A, b, tol: float = 1e-10) -> bool:
    """Kalman rank test with a relative singular-value threshold."""
    A = as_matrix(A, "A")
    return numerical_rank(controllability_matrix(A, b), tol) == A.shape[0]


def pbh_controllable(A, b, tol: float = 1e-10) -> bool:
    """Popov-Belevitch-Hautus test: ``rank [A - lam I, b] = n`` at every eigenvalue."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, -1)
    for lam in scipy.linalg.eigvals(A):
        M = np.hstack([A - lam * np.eye(n), b])
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= tol * max(sv[0], 1.0):
            return False
    return True


@dataclass(frozen=True)
class LyapunovPair:
    """Solution ``P`` of ``P A_b + A_b^T P = -I`` for ``A_b = w A0 - beta b0 b0^T``."""

    omega: float
    beta: float
    P: np.ndarray = field(repr=False)
    sigma_lo: float
    sigma_hi: float
    pb0_norm: float

    @property
    def A_beta(self) -> np.ndarray:
        return damped_oscillator(self.omega, self.beta)

    @property
    def residual(self) -> float:
        Ab = self.A_beta
        return float(np.linalg.norm(self.P @ Ab + Ab.T @ self.P + np.eye(2)))


def damped_oscillator(omega: float, beta: float) -> np.ndarray:
    return omega * A0 - beta * np.outer(B0, B0)


def p_beta(omega: float, beta: float) -> LyapunovPair:
    if not omega > 0:
        raise NonPositiveParameter(f"omega must be > 0, got {omega}")
    if not 0 < beta <= 1:
        raise NonPositiveParameter(f"beta must lie in (0, 1], got {beta}")
    P = np.array([[beta / (2 * omega**2) + 1 / beta, 1 / (2 * omega)],
                  [1 / (2 * omega), 1 / beta]])
    nb = np.sqrt(1 / (4 * omega**2) + 1 / beta**2)
    lo = beta * nb**2 - beta / (2 * omega) * nb
    hi = beta * nb**2 + beta / (2 * omega) * nb
    return LyapunovPair(omega=float(omega), beta=float(beta), P=P,
                        sigma_lo=float(lo), sigma_hi=float(hi), pb0_norm=float(nb))


def gamma_constant(omega: float) -> float:
    """Disturbance-level constant of the damped oscillator, ``1/(8(1/(4w^2)+1))``."""
    if not omega > 0:
        raise NonPositiveParameter(f"omega must be > 0, got {omega}")
    return 1.0 / (8.0 * (1.0 / (4.0 * omega**2) + 1.0))
