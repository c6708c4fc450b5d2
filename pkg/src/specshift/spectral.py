"""Dense Hermitian linear algebra.

Eigendecomposition by a parallel-ordered cyclic Jacobi method, spectral
functional calculus, resolvent powers and unitary exponentials.  Everything
here is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HermitianMatrix",
    "SpectralDecomposition",
    "NonHermitianError",
    "PoleProximityError",
    "as_hermitian",
    "jacobi_eigh",
    "eigh",
    "apply_function",
    "resolvent_power",
    "unitary_exp",
    "opnorm",
]

_EPS = np.finfo(float).eps


class NonHermitianError(ValueError):
    """Input matrix is not Hermitian within tolerance."""

    def __init__(self, asymmetry, tolerance):
        self.asymmetry = float(asymmetry)
        self.tolerance = float(tolerance)
        super().__init__(
            f"matrix is not Hermitian: max |A - A*| = {self.asymmetry:.3e} "
            f"exceeds tolerance {self.tolerance:.3e}"
        )


class PoleProximityError(ValueError):
    """A function pole lies too close to the spectrum."""


def opnorm(a):
    """Operator (spectral) norm of a dense matrix."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True, eq=False)
class HermitianMatrix:
    """Dense complex self-adjoint matrix.

    Construction validates hermiticity against ``1e-12 * ||A||``; inputs
    inside that tolerance are replaced by ``(A + A*) / 2``.
    """

    entries: np.ndarray
    herm_rtol: float = 1e-12

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError("matrix dimension must be at least 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        asym = float(np.max(np.abs(a - a.conj().T)))
        tol = self.herm_rtol * opnorm(a)
        if asym > tol:
            raise NonHermitianError(asym, tol)
        if asym > 0.0:
            a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def norm(self):
        return opnorm(self.entries)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __add__(self, other):
        return HermitianMatrix(self.entries + np.asarray(other))

    def __sub__(self, other):
        return HermitianMatrix(self.entries - np.asarray(other))

    def scaled(self, t):
        return HermitianMatrix(float(t) * self.entries)

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=float)))


def as_hermitian(a):
    if isinstance(a, HermitianMatrix):
        return a
    return HermitianMatrix(a)


def _round_robin(d):
    """Pairings for one cyclic sweep: d-1 rounds of disjoint (p, q) pairs.

    Odd ``d`` gets a phantom index ``d`` that is dropped from every round.
    """
    m = d if d % 2 == 0 else d + 1
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < d and q < d]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a, tol=None, max_sweeps=60):
    """Eigenvalues and eigenvectors of a Hermitian array by cyclic Jacobi.

    Rotations within one round act on disjoint index pairs and are applied
    together; the sweep order is fixed, so results are bit-reproducible.

    Returns ``(w, Q)`` with ``w`` ascending and ``a = Q diag(w) Q*``.
    """
    a0 = np.array(a, dtype=complex)
    a = a0.copy()
    d = a.shape[0]
    q_mat = np.eye(d, dtype=complex)
    if d == 1:
        return np.array([a[0, 0].real]), q_mat
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(d), q_mat
    if tol is None:
        tol = _EPS * scale
    rounds = _round_robin(d)
    off_mask = ~np.eye(d, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[off_mask]) ** 2))
        if off <= tol:
            break
        for p, q in rounds:
            apq = a[p, q]
            g = np.abs(apq)
            active = g > 0.1 * tol / d
            if not np.any(active):
                continue
            app = a[p, p].real
            aqq = a[q, q].real
            gs = np.where(active, g, 1.0)
            theta = (aqq - app) / (2.0 * gs)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            phase = np.where(active, apq / gs, 1.0)
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            # column-pair unitary [[c, s], [-s e^{-i th}, c e^{-i th}]]
            jpp = c
            jpq = s
            jqp = -s * np.conj(phase)
            jqq = c * np.conj(phase)
            cp = a[:, p].copy()
            cq = a[:, q]
            a[:, p] = cp * jpp + cq * jqp
            a[:, q] = cp * jpq + cq * jqq
            rp = a[p, :].copy()
            rq = a[q, :]
            a[p, :] = np.conj(jpp)[:, None] * rp + np.conj(jqp)[:, None] * rq
            a[q, :] = np.conj(jpq)[:, None] * rp + np.conj(jqq)[:, None] * rq
            vp = q_mat[:, p].copy()
            vq = q_mat[:, q]
            q_mat[:, p] = vp * jpp + vq * jqp
            q_mat[:, q] = vp * jpq + vq * jqq
    # Rayleigh quotients against the untouched input
    w = np.real(np.einsum("ia,ij,ja->a", q_mat.conj(), a0, q_mat))
    order = np.argsort(w, kind="stable")
    return w[order], q_mat[:, order]


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues, eigenvectors and eigenvalue clusters of a Hermitian matrix.

    ``eigenvalues`` holds one value per cluster (ascending); ``labels[a]``
    is the cluster of eigenvector column ``a`` of ``vectors``.
    """

    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    vectors: np.ndarray
    raw_eigenvalues: np.ndarray
    labels: np.ndarray
    _projections: list = field(default=None, repr=False)

    @property
    def dim(self):
        return self.vectors.shape[0]

    @property
    def projections(self):
        if self._projections is None:
            out = []
            for i in range(len(self.eigenvalues)):
                qi = self.vectors[:, self.labels == i]
                out.append(qi @ qi.conj().T)
            object.__setattr__(self, "_projections", out)
        return self._projections

    @property
    def snapped(self):
        """Per-eigenvector eigenvalue, replaced by its cluster value."""
        return self.eigenvalues[self.labels]

    def reconstruct(self):
        q = self.vectors
        return (q * self.snapped) @ q.conj().T


def eigh(h, cluster_tol=None):
    """Spectral decomposition with clustering of near-equal eigenvalues.

    Eigenvalues closer than ``cluster_tol`` (default ``1e-9 * ||H||``) are
    chained into one cluster whose value is the cluster mean.
    """
    h = as_hermitian(h)
    w, q = jacobi_eigh(h.entries)
    if cluster_tol is None:
        cluster_tol = 1e-9 * max(np.max(np.abs(w)), 0.0)
    starts = np.concatenate([[True], np.diff(w) > cluster_tol])
    labels = np.cumsum(starts) - 1
    k = labels[-1] + 1
    mult = np.bincount(labels, minlength=k)
    vals = np.bincount(labels, weights=w, minlength=k) / mult
    return SpectralDecomposition(
        eigenvalues=vals,
        multiplicities=mult,
        vectors=q,
        raw_eigenvalues=w,
        labels=labels,
    )


def _decomp(h):
    if isinstance(h, SpectralDecomposition):
        return h
    return eigh(h)


def _calculus(dec, values):
    q = dec.vectors
    return (q * values) @ q.conj().T


def apply_function(f, h):
    """Functional calculus ``f(H) = sum_i f(lambda_i) P_i`` for real-valued f."""
    from .functions import RationalFunction

    dec = _decomp(h)
    if not f.real_valued:
        raise ValueError(
            "apply_function needs a real-valued function; "
            "use resolvent_power or split into real and imaginary parts"
        )
    if isinstance(f, RationalFunction):
        lam = dec.raw_eigenvalues
        scale = 1.0 + np.max(np.abs(lam))
        for term in f.terms:
            gap = np.min(np.abs(term.z - lam))
            if gap < 1e-8 * scale:
                raise PoleProximityError(
                    f"pole {term.z} within {gap:.2e} of the spectrum"
                )
    vals = np.real(f(dec.raw_eigenvalues))
    return HermitianMatrix(_calculus(dec, vals))


def resolvent_power(h, z, m=1):
    """``(zI - H)^{-m}`` for non-real ``z``."""
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("resolvent needs a non-real spectral parameter")
    if int(m) != m or m < 1:
        raise ValueError("resolvent power must be a positive integer")
    dec = _decomp(h)
    return _calculus(dec, (z - dec.raw_eigenvalues) ** (-int(m)))


def unitary_exp(h, t):
    """``exp(i t H)``."""
    dec = _decomp(h)
    return _calculus(dec, np.exp(1j * float(t) * dec.raw_eigenvalues))
