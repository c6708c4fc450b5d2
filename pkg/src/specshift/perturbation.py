"""Derivatives, Taylor remainders and spectral shift of ``f(H + tV)``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .divdiff import compositions
from .ensembles import extremal_profile, gue, parallel_map, trial_rngs
from .functions import RationalFunction, RationalTerm, sup_norm_derivative
from .ideals import IdealSpec, WeakSchatten, ideal_norm
from .moi import DividedDifferenceSymbol, MoiRequest, PhiSymbol, moi_spectral
from .spectral import (
    HermitianMatrix,
    apply_function,
    as_hermitian,
    eigh,
    jacobi_eigh,
    opnorm,
    resolvent_power,
)

__all__ = [
    "PerturbationPair",
    "StepFunction",
    "EstimateReport",
    "StepSizeError",
    "gateaux_derivative_moi",
    "gateaux_derivative_fd",
    "resolvent_derivative",
    "matrix_function",
    "taylor_remainder",
    "krein_ssf",
    "krein_residual",
    "cyclic_identity_check",
    "estimate_scan",
    "rational",
]

_EPS = np.finfo(float).eps


class StepSizeError(ArithmeticError):
    """Finite-difference estimate dominated by cancellation or truncation."""


@dataclass(frozen=True, eq=False)
class PerturbationPair:
    H: HermitianMatrix
    V: HermitianMatrix

    def __post_init__(self):
        h = as_hermitian(self.H)
        v = as_hermitian(self.V)
        if h.dim != v.dim:
            raise ValueError(f"dimension mismatch: {h.dim} vs {v.dim}")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "V", v)

    @property
    def dim(self):
        return self.H.dim

    def scaled(self, s):
        return PerturbationPair(self.H, self.V.scaled(s))


def _pair(pair):
    if isinstance(pair, PerturbationPair):
        return pair
    return PerturbationPair(*pair)


def matrix_function(f, h):
    """``f(H)`` for possibly complex-valued ``f`` (general complex matrix)."""
    if f.real_valued:
        return np.asarray(apply_function(f, h))
    dec = eigh(h)
    q = dec.vectors
    return (q * f(dec.raw_eigenvalues)) @ q.conj().T


def _hermitize(a, f):
    if f.real_valued:
        return HermitianMatrix(0.5 * (a + a.conj().T))
    return a


def gateaux_derivative_moi(f, pair, n):
    """``d^n/dt^n f(H + tV)|_0 = n! T_{f^[n]}(V, ..., V)``."""
    pair = _pair(pair)
    if n == 0:
        return _hermitize(matrix_function(f, pair.H), f)
    v = np.asarray(pair.V)
    req = MoiRequest(DividedDifferenceSymbol(f, n), pair.H, [v] * n)
    return _hermitize(math.factorial(n) * moi_spectral(req).value, f)


def _stencil(n):
    """Offsets and weights of the n-fold 4th-order central first difference."""
    base = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
    w = np.array([1.0])
    for _ in range(n):
        w = np.convolve(w, base)
    offsets = np.arange(len(w)) - (len(w) - 1) // 2
    return offsets, w


def gateaux_derivative_fd(f, pair, n, h=None):
    """``d^n/dt^n f(H + tV)|_0`` by an n-fold 4th-order central stencil.

    The default step is ``eps^(1/(n+4)) (1 + ||H||) / (1 + ||V||)``.  The
    error is estimated from the same stencil at step ``2h``; if it exceeds
    ``1e-3`` of the result scale :class:`StepSizeError` is raised.
    Complex ``f`` is split into real and imaginary parts.
    """
    pair = _pair(pair)
    if not f.real_valued:
        re = np.asarray(gateaux_derivative_fd(f.real_part(), pair, n, h))
        im = np.asarray(gateaux_derivative_fd(f.imag_part(), pair, n, h))
        return re + 1j * im
    hmat = np.asarray(pair.H)
    vmat = np.asarray(pair.V)
    vnorm = opnorm(vmat)
    if n == 0:
        return apply_function(f, pair.H)
    if vnorm == 0.0:
        return HermitianMatrix(np.zeros_like(hmat))
    if h is None:
        h = _EPS ** (1.0 / (n + 4)) * (1.0 + opnorm(hmat)) / (1.0 + vnorm)
    offsets, weights = _stencil(n)
    cache = {}

    def F(k):
        if k not in cache:
            cache[k] = np.asarray(apply_function(f, HermitianMatrix(hmat + (k * h) * vmat)))
        return cache[k]

    def D(step):
        acc = sum(w * F(step * int(k)) for k, w in zip(offsets, weights) if w != 0.0)
        return acc / (step * h) ** n

    d1 = D(1)
    d2 = D(2)
    err = float(np.max(np.abs(d1 - d2))) / 15.0
    roundoff = _EPS * float(np.max(np.abs(F(0)))) * np.sum(np.abs(weights)) / h**n
    err = max(err, roundoff)
    scale = max(float(np.max(np.abs(d1))), float(np.max(np.abs(F(0)))) * vnorm**n)
    if err > 1e-3 * scale:
        raise StepSizeError(
            f"finite-difference error estimate {err:.2e} exceeds 1e-3 of scale {scale:.2e}"
        )
    return HermitianMatrix(0.5 * (d1 + d1.conj().T))


def resolvent_derivative(m, z, pair, n):
    """``d^n/dt^n (zI - H - tV)^(-m)|_0`` as ``n!`` times the sum over
    ``m_0 + ... + m_n = m + n``, ``1 <= m_i <= m``, of
    ``R^(m_0) V R^(m_1) ... V R^(m_n)`` with ``R = (zI - H)^(-1)``."""
    pair = _pair(pair)
    r = resolvent_power(pair.H, z, 1)
    v = np.asarray(pair.V)
    powers = [np.eye(pair.dim, dtype=complex)]
    for _ in range(m):
        powers.append(powers[-1] @ r)
    total = np.zeros((pair.dim, pair.dim), dtype=complex)
    for comp in compositions(m + n, n + 1, 1, m):
        term = powers[comp[0]]
        for mi in comp[1:]:
            term = term @ v @ powers[mi]
        total += term
    return math.factorial(n) * total


def taylor_remainder(f, pair, n):
    """``f(H+V) - sum_{j<n} (1/j!) d^j/dt^j f(H+tV)|_0``."""
    if n < 1:
        raise ValueError("remainder order must be at least 1")
    pair = _pair(pair)
    out = matrix_function(f, pair.H + pair.V).astype(complex)
    for j in range(n):
        out = out - np.asarray(gateaux_derivative_moi(f, pair, j)) / math.factorial(j)
    return _hermitize(out, f)


# -- spectral shift ----------------------------------------------------------


@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant ``xi``: ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``,
    zero outside ``[breakpoints[0], breakpoints[-1])``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values)
        if len(b) and len(v) != len(b) - 1:
            raise ValueError("need one value per interval")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must increase strictly")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.values) == 0:
            return np.zeros_like(t)
        i = np.searchsorted(self.breakpoints, t, side="right") - 1
        inside = (i >= 0) & (i < len(self.values))
        return np.where(inside, self.values[np.clip(i, 0, len(self.values) - 1)], 0)

    def integral(self):
        return float(math.fsum(self.values * np.diff(self.breakpoints)))

    def integrate_derivative(self, f):
        """``int f'(t) xi(t) dt = sum xi_i (f(b_{i+1}) - f(b_i))``."""
        if len(self.values) == 0:
            return 0.0
        fb = f(self.breakpoints)
        return complex(np.sum(self.values * np.diff(fb)))

    def rows(self):
        for i, v in enumerate(self.values):
            yield {"left": self.breakpoints[i], "right": self.breakpoints[i + 1], "xi": int(v)}


def krein_ssf(pair):
    """``xi(t) = #{eig H <= t} - #{eig (H+V) <= t}``, so that ``int xi = Tr V``."""
    pair = _pair(pair)
    a = jacobi_eigh(np.asarray(pair.H))[0]
    b = jacobi_eigh(np.asarray(pair.H + pair.V))[0]
    pts = np.unique(np.concatenate([a, b]))
    na = np.searchsorted(a, pts, side="right")
    nb = np.searchsorted(b, pts, side="right")
    vals = (na - nb)[:-1]
    # drop zero-length structure: merge equal neighbours
    keep = np.concatenate([[True], vals[1:] != vals[:-1]]) if len(vals) else []
    if len(vals):
        idx = np.flatnonzero(keep)
        bps = np.append(pts[idx], pts[-1])
        vals = vals[idx]
        # trim zero tails
        nz = np.flatnonzero(vals != 0)
        if len(nz) == 0:
            return StepFunction(np.zeros(0), np.zeros(0, dtype=int))
        bps = bps[nz[0] : nz[-1] + 2]
        vals = vals[nz[0] : nz[-1] + 1]
        return StepFunction(bps, vals)
    return StepFunction(np.zeros(0), np.zeros(0, dtype=int))


def krein_residual(f, pair, relative=False):
    """``|Tr(f(H+V) - f(H)) - int f' xi|``; with ``relative`` divided by
    ``1 + |Tr f(H+V)| + |Tr f(H)|``."""
    if not f.real_valued:
        raise ValueError("Krein residual needs a real-valued function")
    pair = _pair(pair)
    t1 = np.trace(np.asarray(apply_function(f, pair.H + pair.V))).real
    t0 = np.trace(np.asarray(apply_function(f, pair.H))).real
    rhs = krein_ssf(pair).integrate_derivative(f).real
    res = abs((t1 - t0) - rhs)
    if relative:
        return res / (1.0 + abs(t1) + abs(t0))
    return res


def cyclic_identity_check(f, pair, n):
    """Relative residual of ``Tr T_{f^[n]}(V,...,V) = i Tr(T_phi(V,...,V) V)``.

    ``phi = -i f^[n](l0, l0, l1, ...)`` carries ``n-1`` operators; for
    ``n = 1`` it is the function ``phi(H)``.  The residual is divided by
    ``max(1, |lhs|)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    pair = _pair(pair)
    v = np.asarray(pair.V)
    lhs = np.trace(moi_spectral(MoiRequest(DividedDifferenceSymbol(f, n), pair.H, [v] * n)).value)
    tphi = moi_spectral(MoiRequest(PhiSymbol(f, n), pair.H, [v] * (n - 1))).value
    rhs = 1j * np.trace(tphi @ v)
    return float(abs(lhs - rhs) / max(1.0, abs(lhs)))


# -- estimate scan -----------------------------------------------------------


@dataclass
class EstimateReport:
    """Ratios of traced derivatives to ``||f^(n)||_inf ||V||^n`` per dimension.

    ``trace_ratios[d]`` are ``|Tr d^n/dt^n f(H+tV)| / (||f^(n)|| ||V||^n)``,
    ``phi_ratios[d]`` are ``||T_phi(V..V)||_{n/(n-1),inf} / (||f^(n)|| ||V||^(n-1))``
    (n >= 2).  ``*_normalized`` divide by ``1 + ||H||``.  Fitted constants are
    per-dimension maxima; growth factors compare the largest dimension
    with the smallest.
    """

    n: int
    ideal: str
    dims: list
    trace_ratios: dict = field(default_factory=dict)
    phi_ratios: dict = field(default_factory=dict)
    trace_normalized: dict = field(default_factory=dict)
    phi_normalized: dict = field(default_factory=dict)
    convention: str = "degree-1 ideal norm raised to the power n"

    @staticmethod
    def _fit(table):
        return {d: max(v) if v else 0.0 for d, v in table.items()}

    @property
    def trace_constant(self):
        return self._fit(self.trace_ratios)

    @property
    def phi_constant(self):
        return self._fit(self.phi_ratios)

    def growth(self, which="trace"):
        table = self._fit(getattr(self, f"{which}_ratios"))
        if not table:
            return math.nan
        first = table[self.dims[0]]
        last = table[self.dims[-1]]
        return last / first if first > 0 else math.inf

    def rows(self):
        for d in self.dims:
            for i, r in enumerate(self.trace_ratios[d]):
                yield {
                    "dim": d,
                    "trial": i,
                    "trace_ratio": r,
                    "trace_normalized": self.trace_normalized[d][i],
                    "phi_ratio": self.phi_ratios[d][i] if self.phi_ratios.get(d) else "",
                    "phi_normalized": self.phi_normalized[d][i] if self.phi_normalized.get(d) else "",
                }


def estimate_scan(f, n, ideal=None, dims=(8, 16, 32, 64), trials=50, seed=0, v_zero=False):
    """Scan the derivative estimate over GUE ``H`` and extremal-profile ``V``.

    ``V`` has singular values ``(k+1)^(-1/n)`` under a Haar rotation.  With
    ``v_zero`` every ``V`` is zero (a degenerate baseline).
    """
    if ideal is None:
        ideal = WeakSchatten(n)
    if isinstance(ideal, str):
        ideal = IdealSpec.parse(ideal)
    if not (ideal.kind == "weak" and ideal.p == n) and not (
        ideal.kind == "dm_convex" and ideal.q == n
    ):
        raise ValueError("estimate scans use WeakSchatten(n) or DMConvex(n)")
    fn = sup_norm_derivative(f, n)
    rep = EstimateReport(n=n, ideal=str(ideal), dims=list(dims))
    phi_ideal = WeakSchatten(n / (n - 1)) if n >= 2 else None

    def trial(args):
        d, rng = args
        h = HermitianMatrix(gue(d, rng))
        v = np.zeros((d, d)) if v_zero else extremal_profile(d, n, rng)
        vn = ideal_norm(v, ideal)
        hn = 1.0 + h.norm
        if vn == 0.0:
            return 0.0, 0.0, 0.0, 0.0
        pair = PerturbationPair(h, v)
        tr = abs(np.trace(np.asarray(gateaux_derivative_moi(f, pair, n))))
        r = tr / (fn * vn**n)
        if phi_ideal is None:
            return r, r / hn, None, None
        tphi = moi_spectral(MoiRequest(PhiSymbol(f, n), h, [v] * (n - 1))).value
        q = ideal_norm(tphi, phi_ideal) / (fn * vn ** (n - 1))
        return r, r / hn, q, q / hn

    for d in dims:
        out = parallel_map(trial, [(d, rng) for rng in trial_rngs(seed, trials, tag=d)])
        rep.trace_ratios[d] = [o[0] for o in out]
        rep.trace_normalized[d] = [o[1] for o in out]
        if phi_ideal is not None:
            rep.phi_ratios[d] = [o[2] for o in out]
            rep.phi_normalized[d] = [o[3] for o in out]
    return rep


def rational(m, z, c=1.0):
    """``c (z - x)^(-m)`` as a :class:`RationalFunction`."""
    return RationalFunction([RationalTerm(complex(c), complex(z), int(m))])
