"""Triangular oscillator/integrator target form, its coupling coefficients
and the similarity transform from the plant coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    IllConditioned,
    NonPositiveGain,
    NotControllable,
    NotStabilizable,
)
from .linalg import (
    A0,
    _EPS,
    as_column,
    as_matrix,
    controllability_matrix,
    is_controllable,
    spectral_profile,
    SpectralProfile,
)


@dataclass(frozen=True)
class ThetaTable:
    """Coupling coefficients ``theta[i, k]`` for ``1 <= i < k <= mu + 1`` (1-based)."""

    mu: int
    values: dict

    def __getitem__(self, ik) -> float:
        return self.values[ik]

    def to_list(self) -> list:
        return [[i, k, v] for (i, k), v in sorted(self.values.items())]


def build_theta(tail_gains) -> ThetaTable:
    """Coefficient table from the gains ``a_2 .. a_mu``.

    ``theta[i, i+1] = 1`` and ``theta[i, k] = prod_{h=i}^{k-2} 1/a_{h+1}``.
    """
    tail = [float(a) for a in tail_gains]
    if any(not a > 0 for a in tail):
        raise NonPositiveGain(f"gains must be positive, got {tail}")
    mu = len(tail) + 1
    a = {h: tail[h - 2] for h in range(2, mu + 1)}  # 1-based a_h
    values = {}
    for i in range(1, mu + 1):
        values[(i, i + 1)] = 1.0
        prod = 1.0
        for k in range(i + 2, mu + 2):
            prod /= a[k - 1]
            values[(i, k)] = prod
    return ThetaTable(mu=mu, values=values)


@dataclass(frozen=True)
class Block:
    kind: str  # "oscillator" or "integrator"
    omega: float | None
    offset: int

    @property
    def size(self) -> int:
        return 2 if self.kind == "oscillator" else 1

    @property
    def output_index(self) -> int:
        """State index read by the feedback numerator (``b0^T y_i`` or ``y_i``)."""
        return self.offset + 1 if self.kind == "oscillator" else self.offset

    def to_dict(self) -> dict:
        return {"kind": self.kind, "omega": self.omega, "offset": self.offset}

    @classmethod
    def from_dict(cls, d) -> "Block":
        return cls(d["kind"], d.get("omega"), int(d["offset"]))


def block_layout(profile: SpectralProfile) -> list:
    """Oscillators (descending frequency) first, then the integrator chain."""
    blocks, off = [], 0
    for w in profile.omegas:
        blocks.append(Block("oscillator", float(w), off))
        off += 2
    for _ in range(profile.z):
        blocks.append(Block("integrator", None, off))
        off += 1
    return blocks


def build_target_pair(profile: SpectralProfile, theta: ThetaTable):
    """Assemble ``(J, bhat)`` of the triangular cascade.

    Row block i receives ``theta[i, k]`` times the output of every later
    block k (through ``b0`` for oscillators) and ``theta[i, mu+1] u``.
    """
    mu = profile.mu
    if theta.mu != mu:
        raise DimensionMismatch(f"theta table has mu={theta.mu}, profile has mu={mu}")
    layout = block_layout(profile)
    n = profile.n_critical
    J = np.zeros((n, n))
    bhat = np.zeros(n)
    for i, blk in enumerate(layout, start=1):
        row = blk.output_index
        if blk.kind == "oscillator":
            J[blk.offset:blk.offset + 2, blk.offset:blk.offset + 2] = blk.omega * A0
        for k in range(i + 1, mu + 1):
            J[row, layout[k - 1].output_index] = theta[(i, k)]
        bhat[row] = theta[(i, mu + 1)]
    return J, bhat


def similarity_transform(A, b, J, bhat, cond_limit: float = 1e12) -> np.ndarray:
    """``T`` with ``T A = J T`` and ``T b = bhat``: ``T = C(J, bhat) C(A, b)^-1``.

    Unique when both pairs are controllable and share a characteristic
    polynomial.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    b = as_column(b, n)
    J = as_matrix(J, "J")
    bhat = as_column(bhat, n, "bhat")
    if J.shape != (n, n):
        raise DimensionMismatch(f"J shape {J.shape} does not match A {A.shape}")
    CA = controllability_matrix(A, b)
    CJ = controllability_matrix(J, bhat)
    if not is_controllable(A, b):
        raise NotControllable("(A, b) is not controllable")
    if not is_controllable(J, bhat):
        raise NotControllable("(J, bhat) is not controllable")
    cond = np.linalg.cond(CA)
    if cond > cond_limit:
        raise IllConditioned(f"controllability matrix condition number {cond:.3g}")
    # T CA = CJ
    return np.linalg.solve(CA.T, CJ.T).T


@dataclass(frozen=True)
class CanonicalForm:
    """Target pair ``(J, bhat)`` with ``y = T x``."""

    J: np.ndarray = field(repr=False)
    bhat: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    theta: ThetaTable
    layout: tuple
    profile: SpectralProfile

    @property
    def mu(self) -> int:
        return len(self.layout)

    def residuals(self, A, b) -> tuple:
        A = as_matrix(A)
        b = as_column(b, A.shape[0])
        return (float(np.linalg.norm(self.T @ A - self.J @ self.T)),
                float(np.linalg.norm(self.T @ b - self.bhat)))

    def to_dict(self) -> dict:
        return {
            "J": self.J.tolist(),
            "bhat": self.bhat.tolist(),
            "T": self.T.tolist(),
            "theta": self.theta.to_list(),
            "layout": [blk.to_dict() for blk in self.layout],
            "profile": self.profile.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "CanonicalForm":
        prof = d["profile"]
        profile = SpectralProfile(s=prof["s"], z=prof["z"], omegas=tuple(prof["omegas"]),
                                  tol=prof["tol"], hurwitz=prof.get("hurwitz", 0))
        values = {(int(i), int(k)): float(v) for i, k, v in d["theta"]}
        return cls(J=np.array(d["J"], dtype=float), bhat=np.array(d["bhat"], dtype=float),
                   T=np.array(d["T"], dtype=float),
                   theta=ThetaTable(mu=profile.mu, values=values),
                   layout=tuple(Block.from_dict(x) for x in d["layout"]), profile=profile)


def canonical_form(A, b, gains, tol: float | None = None,
                   profile: SpectralProfile | None = None) -> CanonicalForm:
    """Canonical form of a controllable pair whose eigenvalues are all critical.

    ``gains`` is the full schedule ``a_1 .. a_mu``; only ``a_2 ..`` enter
    the coupling coefficients.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    b = as_column(b, n)
    if profile is None:
        profile = spectral_profile(A, tol)
    if profile.hurwitz:
        raise DimensionMismatch("canonical_form expects a purely critical A; "
                                "split off the Hurwitz part first")
    gains = [float(a) for a in gains]
    if len(gains) != profile.mu:
        raise DimensionMismatch(f"{len(gains)} gains for mu={profile.mu}")
    theta = build_theta(gains[1:])
    J, bhat = build_target_pair(profile, theta)
    T = similarity_transform(A, b, J, bhat)
    cf = CanonicalForm(J=J, bhat=bhat, T=T, theta=theta,
                       layout=tuple(block_layout(profile)), profile=profile)
    ra, rb = cf.residuals(A, b)
    lim = 1e-8 * (1.0 + np.linalg.norm(A)) * max(1.0, np.linalg.norm(T))
    if ra > lim or rb > lim:
        raise IllConditioned(f"similarity residuals {ra:.3g}, {rb:.3g} exceed {lim:.3g}")
    return cf


@dataclass(frozen=True)
class Decomposition:
    """``z = M x`` splits ``(A, b)`` into a Hurwitz part and a critical part."""

    A1: np.ndarray
    b1: np.ndarray
    A2: np.ndarray
    b2: np.ndarray
    M: np.ndarray
    profile: SpectralProfile

    @property
    def n_hurwitz(self) -> int:
        return self.A1.shape[0]

    @property
    def M_critical(self) -> np.ndarray:
        """Rows of ``M`` producing the critical coordinates."""
        return self.M[self.n_hurwitz:]


def decompose_stabilizable(A, b, tol: float | None = None) -> Decomposition:
    """Block-diagonalize ``A`` into Hurwitz and critical parts.

    Ordered real Schur form followed by a Sylvester solve for the coupling.

    Raises
    ------
    PositiveRealPartEigenvalue
        From the spectral classification.
    NotStabilizable
        If the critical part is not controllable from ``b``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    b = as_column(b, n)
    profile = spectral_profile(A, tol)
    k = profile.hurwitz
    if k == 0:
        M = np.eye(n)
        Ad, bd = A.copy(), b.copy()
    else:
        # eigenvalues strictly left of the critical band are sorted first
        thr = max(10.0 * _EPS ** (1.0 / n) * max(np.linalg.norm(A), 1.0), 1e-6)
        S, Q, sdim = scipy.linalg.schur(A, output="real", sort=lambda re, im: re < -thr)
        k = sdim
        T11, T12, T22 = S[:k, :k], S[:k, k:], S[k:, k:]
        X = scipy.linalg.solve_sylvester(T11, -T22, -T12)
        W = np.eye(n)
        W[:k, k:] = X
        Winv = np.eye(n)
        Winv[:k, k:] = -X
        M = Winv @ Q.T
        Ad = M @ A @ np.linalg.inv(M)
        Ad[:k, k:] = 0.0
        Ad[k:, :k] = 0.0
        bd = M @ b
    A1, A2 = Ad[:k, :k], Ad[k:, k:]
    b1, b2 = bd[:k], bd[k:]
    if A2.shape[0] and not is_controllable(A2, b2):
        raise NotStabilizable("critical modes are not controllable from b")
    crit_profile = spectral_profile(A2, profile.tol) if A2.shape[0] else SpectralProfile(
        s=0, z=0, omegas=(), tol=profile.tol)
    return Decomposition(A1=A1, b1=b1, A2=A2, b2=b2, M=M, profile=crit_profile)


@dataclass
class ReducedForm:
    """Multi-input block upper-triangular form.

    ``blocks[i] = (A_ii, b_ii)`` for the critical single-input blocks
    (0-based here), ``coupling[(i, j)] = (A_ij, b_ij)`` for ``j > i`` and the
    optional Hurwitz block ``hurwitz = {"A00": ..., "A0j": {j: ...}, "b0j": {j: ...}}``.
    """

    blocks: list
    coupling: dict = field(default_factory=dict)
    hurwitz: dict | None = None

    def __post_init__(self):
        self.blocks = [(as_matrix(Aii), as_column(bii)) for Aii, bii in self.blocks]
        for Aii, bii in self.blocks:
            if Aii.shape[0] != Aii.shape[1] or bii.size != Aii.shape[0]:
                raise DimensionMismatch("diagonal block dimensions are inconsistent")
        coupling = {}
        for (i, j), (Aij, bij) in self.coupling.items():
            i, j = int(i), int(j)
            ni, nj = self.sizes[i], self.sizes[j]
            Aij = np.zeros((ni, nj)) if Aij is None else as_matrix(Aij).reshape(ni, nj)
            bij = np.zeros(ni) if bij is None else as_column(bij, ni)
            coupling[(i, j)] = (Aij, bij)
        self.coupling = coupling

    @property
    def q(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> list:
        return [Aii.shape[0] for Aii, _ in self.blocks]

    @property
    def n0(self) -> int:
        return 0 if not self.hurwitz else as_matrix(self.hurwitz["A00"]).shape[0]

    def slices(self) -> list:
        """State slice of each critical block in the assembled system."""
        out, off = [], self.n0
        for ni in self.sizes:
            out.append(slice(off, off + ni))
            off += ni
        return out

    def assemble(self):
        """Full ``(A, B)`` with the Hurwitz block first."""
        n0 = self.n0
        n = n0 + sum(self.sizes)
        A = np.zeros((n, n))
        B = np.zeros((n, self.q))
        sl = self.slices()
        if n0:
            A[:n0, :n0] = as_matrix(self.hurwitz["A00"])
            for j, Aj in self.hurwitz.get("A0j", {}).items():
                A[:n0, sl[int(j)]] = as_matrix(Aj).reshape(n0, -1)
            for j, bj in self.hurwitz.get("b0j", {}).items():
                B[:n0, int(j)] = as_column(bj, n0)
        for i, (Aii, bii) in enumerate(self.blocks):
            A[sl[i], sl[i]] = Aii
            B[sl[i], i] = bii
        for (i, j), (Aij, bij) in self.coupling.items():
            A[sl[i], sl[j]] = Aij
            B[sl[i], j] = bij
        return A, B

    def to_dict(self) -> dict:
        d = {
            "blocks": [{"A": Aii.tolist(), "b": bii.tolist()} for Aii, bii in self.blocks],
            "coupling": [{"i": i, "j": j, "A": Aij.tolist(), "b": bij.tolist()}
                         for (i, j), (Aij, bij) in sorted(self.coupling.items())],
        }
        if self.hurwitz:
            d["hurwitz"] = {
                "A00": as_matrix(self.hurwitz["A00"]).tolist(),
                "A0j": {str(j): as_matrix(v).tolist() for j, v in self.hurwitz.get("A0j", {}).items()},
                "b0j": {str(j): as_column(v).tolist() for j, v in self.hurwitz.get("b0j", {}).items()},
            }
        return d

    @classmethod
    def from_dict(cls, d) -> "ReducedForm":
        blocks = [(np.array(b["A"], dtype=float), np.array(b["b"], dtype=float)) for b in d["blocks"]]
        coupling = {(int(c["i"]), int(c["j"])): (c.get("A"), c.get("b")) for c in d.get("coupling", [])}
        hurwitz = None
        if d.get("hurwitz"):
            h = d["hurwitz"]
            hurwitz = {"A00": np.array(h["A00"], dtype=float),
                       "A0j": {int(j): np.array(v, dtype=float) for j, v in h.get("A0j", {}).items()},
                       "b0j": {int(j): np.array(v, dtype=float) for j, v in h.get("b0j", {}).items()}}
        return cls(blocks=blocks, coupling=coupling, hurwitz=hurwitz)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_reduced_form(rf: ReducedForm, tol: float = 1e-9) -> ValidationReport:
    """Check every structural requirement; never raises on a violation."""
    report = ValidationReport()
    for i, (Aii, bii) in enumerate(rf.blocks):
        eig = scipy.linalg.eigvals(Aii)
        scale = max(np.linalg.norm(Aii), 1.0)
        band = max(tol * scale, 10.0 * _EPS ** (1.0 / Aii.shape[0]) * scale)
        if np.any(np.abs(eig.real) > band):
            report.violations.append(f"block {i}: non-critical eigenvalue(s) {eig[np.abs(eig.real) > band]}")
        if not is_controllable(Aii, bii):
            report.violations.append(f"block {i}: (A_ii, b_ii) not controllable")
    for (i, j) in rf.coupling:
        if not j > i:
            report.violations.append(f"coupling ({i}, {j}) is not strictly upper triangular")
        if not (0 <= i < rf.q and 0 <= j < rf.q):
            report.violations.append(f"coupling ({i}, {j}) references a missing block")
    if rf.hurwitz:
        A00 = as_matrix(rf.hurwitz["A00"])
        if A00.size and np.max(scipy.linalg.eigvals(A00).real) >= 0:
            report.violations.append("A00 is not Hurwitz")
    return report
