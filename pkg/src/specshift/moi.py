"""Multiple operator integrals in finite dimension.

``T_phi(x_1, ..., x_n)`` is evaluated two ways:

* :func:`moi_spectral` -- the exact spectral formula
  ``sum phi(l_{i0}, ..., l_{in}) P_{i0} x_1 P_{i1} ... x_n P_{in}``;
* :func:`moi_dyadic` -- dyadic lattice sums ``S_m`` of the integrand
  ``u(s) = w(s) v(s)`` over the positive cone, one cone per sign for
  divided-difference symbols.

The lattice sums for Gaussian symbols are computed in the eigenbasis of H,
where each eigenvalue tuple contributes a scalar lattice sum; this is an exact
rearrangement of the matrix sum.  :func:`dyadic_sum` sums an arbitrary
:class:`LatticeIntegrand` point by point and serves as a cross-check.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np

from .divdiff import (
    divided_difference,
    fourier_cone_level,
    fourier_tail_bound,
    phi_values,
    richardson,
)
from .functions import FourierProfile, GaussianCombination
from .spectral import as_hermitian, eigh, opnorm

__all__ = [
    "DividedDifferenceSymbol",
    "PhiSymbol",
    "CustomSymbol",
    "MoiRequest",
    "MoiResult",
    "LatticeIntegrand",
    "SymbolEvaluationError",
    "TruncationError",
    "DyadicConvergenceError",
    "basel_constant",
    "lattice_weight_sum",
    "moi_spectral",
    "cone_integrands",
    "dyadic_sum",
    "moi_dyadic",
    "trace_swap_check",
    "fit_order",
    "quasi_banach_scan",
]


class SymbolEvaluationError(ArithmeticError):
    def __init__(self, where, message="symbol evaluation failed"):
        self.where = tuple(float(v) for v in where)
        super().__init__(f"{message} at eigenvalue tuple {self.where}")


class TruncationError(ValueError):
    """Certified tail bound exceeds the requested tolerance; enlarge T."""


class DyadicConvergenceError(RuntimeError):
    def __init__(self, result, message):
        self.result = result
        super().__init__(message)


# -- symbols -----------------------------------------------------------------


@dataclass(frozen=True)
class DividedDifferenceSymbol:
    """``f^[n]`` as an MOI symbol with ``n`` operator arguments."""

    f: object
    n: int

    @property
    def arity(self):
        return self.n + 1

    def __call__(self, nodes):
        return divided_difference(self.f, nodes)[0]


@dataclass(frozen=True)
class PhiSymbol:
    """``phi(l_0, ..., l_{n-1}) = -i f^[n](l_0, l_0, l_1, ..., l_{n-1})``.

    Takes ``n`` spectral arguments, so it carries ``n - 1`` operators.
    """

    f: object
    n: int

    @property
    def arity(self):
        return self.n

    def __call__(self, nodes):
        return phi_values(self.f, nodes)


@dataclass(frozen=True)
class CustomSymbol:
    """User symbol of ``arity`` spectral arguments.

    ``func`` is vectorised over the last axis.  For dyadic evaluation supply
    ``factors`` (``arity`` callables ``a_j(lambda, s_j)``, vectorised) and a
    ``density`` ``v(s)`` over ``s`` of shape ``(..., arity)`` together with its
    certificates: ``factor_sup`` bounds ``|a_j|``, ``factor_lip`` bounds
    ``|d a_j / d s_j|`` over the spectrum, ``decay`` bounds
    ``|v(s)| (1 + sum s)^(arity + 1)`` (a number, or a function of ``T``
    giving the bound over ``sum s >= T``).
    """

    func: object
    arity: int
    factors: tuple = None
    density: object = None
    factor_sup: float = 1.0
    factor_lip: float = None
    decay: float = None

    def __call__(self, nodes):
        return self.func(nodes)


@dataclass
class MoiRequest:
    """An MOI job: symbol, base H, operator arguments and method parameters."""

    symbol: object
    base: object
    args: list
    method: str = "spectral"
    m_max: int = 12
    m_min: int = 1
    T: float = 16.0
    tol: float = 1e-3

    def __post_init__(self):
        self.base = as_hermitian(self.base)
        self.args = [np.asarray(x, dtype=complex) for x in self.args]
        if self.symbol.arity < 1:
            raise ValueError("symbol needs at least one spectral argument")
        if len(self.args) != self.symbol.arity - 1:
            raise ValueError(
                f"symbol of arity {self.symbol.arity} takes "
                f"{self.symbol.arity - 1} arguments, got {len(self.args)}"
            )
        d = self.base.dim
        for x in self.args:
            if x.shape != (d, d):
                raise ValueError(f"argument shape {x.shape} does not match dim {d}")
        if self.method not in ("spectral", "dyadic"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def n(self):
        return len(self.args)


@dataclass
class MoiResult:
    """Value of ``T_phi`` plus diagnostics.

    For the dyadic method ``value`` is the raw ``S_m`` at the last level,
    ``levels``/``sums`` hold every level, ``extrapolated`` the Richardson
    combination of the last levels and ``order`` the fitted rate against
    ``reference`` (the spectral value).
    """

    value: np.ndarray
    method: str
    levels: list = field(default_factory=list)
    sums: list = field(default_factory=list)
    tail_bound: float = 0.0
    order: float = None
    errors: list = field(default_factory=list)
    reference: np.ndarray = None
    extrapolated: np.ndarray = None


# -- spectral oracle ---------------------------------------------------------


def _symbol_tensor(symbol, dec):
    """Symbol on all cluster tuples, expanded to eigenvector tuples."""
    k = len(dec.eigenvalues)
    r = symbol.arity
    grids = np.meshgrid(*([dec.eigenvalues] * r), indexing="ij")
    nodes = np.stack(grids, axis=-1)
    try:
        vals = np.asarray(symbol(nodes), dtype=complex)
    except Exception as exc:  # locate the first failing tuple
        for idx in np.ndindex(*([k] * r)):
            try:
                v = complex(np.asarray(symbol(nodes[idx])))
            except Exception:
                raise SymbolEvaluationError(nodes[idx], str(exc)) from exc
            if not np.isfinite(v):
                break
        raise
    bad = ~np.isfinite(vals)
    if np.any(bad):
        idx = tuple(np.argwhere(bad)[0])
        raise SymbolEvaluationError(nodes[idx], "non-finite symbol value")
    lab = dec.labels
    return vals[np.ix_(*([lab] * r))]


def _contract(tensor, xs):
    """``R[a0, an] = sum tensor[a0..an] x1[a0,a1] ... xn[a_{n-1},a_n]``."""
    r = tensor.ndim
    if r == 1:
        return np.diag(tensor)
    letters = string.ascii_letters[:r]
    ops = [letters] + [letters[j] + letters[j + 1] for j in range(r - 1)]
    spec = ",".join(ops) + "->" + letters[0] + letters[-1]
    return np.einsum(spec, tensor, *xs, optimize=True)


def _to_eigenbasis(q, xs):
    qh = q.conj().T
    return [qh @ x @ q for x in xs]


def moi_spectral(req):
    """Exact ``T_phi(x_1, ..., x_n)`` from the spectral decomposition of H."""
    dec = eigh(req.base)
    tensor = _symbol_tensor(req.symbol, dec)
    q = dec.vectors
    inner = _contract(tensor, _to_eigenbasis(q, req.args))
    return MoiResult(value=q @ inner @ q.conj().T, method="spectral")


# -- lattice machinery -------------------------------------------------------


def basel_constant(tol=1e-12):
    """``sum_{j >= 0} (1 + j)^(-2)`` by a partial sum plus Euler-Maclaurin tail."""
    n = max(16, int(math.ceil(tol ** (-0.25))))
    j = np.arange(1, n + 1, dtype=float)
    head = math.fsum((1.0 / j**2)[::-1])
    # sum_{j > n} j^-2 = 1/n - 1/(2n^2) + 1/(6n^3) - 1/(30 n^5) + ...
    tail = 1.0 / n - 0.5 / n**2 + 1.0 / (6.0 * n**3) - 1.0 / (30.0 * n**5)
    return head + tail


def lattice_weight_sum(n, m, terms=None):
    """``2^{-m(n+1)} sum_{k in N^{n+1}} (1 + 2^{-m} sum k)^{-(n+2)}``, grouped
    by ``l = sum k`` (there are ``C(l+n, n)`` points with that sum).

    Summed to ``terms`` shells plus an upper bound for the rest; the known
    bound for the whole sum is ``pi^2/6``.
    """
    h = 2.0 ** (-m)
    if terms is None:
        terms = int(2**m * 4096)
    ell = np.arange(terms, dtype=float)
    logc = (
        np.vectorize(math.lgamma)(ell + n + 1) - math.lgamma(n + 1)
        - np.vectorize(math.lgamma)(ell + 1)
    )
    shell = np.exp(logc - (n + 2) * np.log1p(h * ell))
    head = h ** (n + 1) * math.fsum(shell)
    # remaining shells: C(l+n,n) h^n <= (r + nh)^n / n! <= (1 + r)^n / n!
    # for nh <= 1; the profile is convex and decreasing in r = hl, so each
    # omitted shell is at most the integral over its midpoint cell
    r0 = h * (terms - 0.5)
    tail = 1.0 / (math.factorial(n) * (1.0 + r0))
    return head + tail


@dataclass
class LatticeIntegrand:
    """``u(s) = w(s) v(s)`` on ``R_+^{nvars}``.

    ``evaluate(s)`` maps ``s`` of shape ``(M, nvars)`` to ``(M, d, d)``
    values of ``w(s) v(s)``.  Certificates: ``w_sup >= sup ||w||_1``,
    ``w_lip >= ||w||_Lip`` (trace norm, l1 distance in ``s``) and
    ``v_decay(t_min) >= sup_{sum s >= t_min} |v(s)| (1 + sum s)^{nvars+1}``.
    ``w`` and ``v`` are also available separately for certificate checks.
    """

    nvars: int
    dim: int
    w: object
    v: object
    w_sup: float
    w_lip: float
    v_decay: object

    def evaluate(self, s):
        s = np.atleast_2d(s)
        return self.w(s) * self.v(s)[:, None, None]

    def tail_bound(self, T):
        return self.w_sup * self.v_decay(T) * basel_constant()

    def check_lipschitz(self, samples=50, scale=1.0, seed=0):
        """Largest sampled ``||w(s) - w(t)||_1 / |s - t|_1`` divided by ``w_lip``."""
        rng = np.random.default_rng(seed)
        s = rng.uniform(0, scale, (samples, self.nvars))
        t = s + rng.normal(0, 1e-2 * scale, s.shape)
        t = np.abs(t)
        diff = self.w(s) - self.w(t)
        tn = np.array([np.sum(np.linalg.svd(a, compute_uv=False)) for a in diff])
        dist = np.sum(np.abs(s - t), axis=1)
        return float(np.max(tn / dist) / self.w_lip) if self.w_lip > 0 else 0.0


def _trace_norm(x):
    return float(np.sum(np.linalg.svd(x, compute_uv=False)))


def _chain(diag_factors, xs):
    """``a_0 x_1 a_1 ... x_n a_n`` in the eigenbasis for batched diagonal factors.

    ``diag_factors`` has shape ``(M, n+1, d)``.
    """
    out = diag_factors[:, 0, :, None] * xs[0][None]
    for j in range(1, len(xs)):
        out = (out * diag_factors[:, j, None, :]) @ xs[j]
    return out * diag_factors[:, -1, None, :]


def cone_integrands(req):
    """``(coefficient, LatticeIntegrand)`` pairs whose weighted integrals sum to
    ``T_phi``; two cones for Gaussian divided-difference and phi symbols, one
    for custom symbols with factors and density."""
    dec = eigh(req.base)
    lam = dec.raw_eigenvalues
    q = dec.vectors
    xs = _to_eigenbasis(q, req.args)
    qh = q.conj().T
    n = req.n
    hnorm = opnorm(req.base.entries)
    x_sup = _trace_norm(req.args[0]) * math.prod(opnorm(x) for x in req.args[1:])
    sym = req.symbol

    def rotate(inner):
        return q[None] @ inner @ qh[None]

    if isinstance(sym, CustomSymbol):
        if sym.factors is None or sym.density is None:
            raise TypeError("custom symbol lacks factor functions or density")
        if sym.decay is None or sym.factor_lip is None:
            raise TypeError("custom symbol lacks certificates")

        def w(s):
            fac = np.stack(
                [np.asarray(a(lam[None, :], s[:, j, None]), dtype=complex)
                 for j, a in enumerate(sym.factors)],
                axis=1,
            )
            return rotate(_chain(fac, xs))

        nv = n + 1
        w_sup = sym.factor_sup ** nv * x_sup
        w_lip = sym.factor_lip * sym.factor_sup ** n * x_sup
        decay = sym.decay if callable(sym.decay) else (lambda T: sym.decay)
        return [(1.0, LatticeIntegrand(nv, req.base.dim, w, sym.density, w_sup, w_lip, decay))]

    f = sym.f
    if not isinstance(f, GaussianCombination):
        raise TypeError("dyadic evaluation needs a Gaussian (Schwartz) function")
    weighted = isinstance(sym, PhiSymbol)
    nv = n + 1
    order = sym.n
    prof = FourierProfile(f, n=order, check=False)
    out = []
    for sign in (1, -1):
        coef = (1j * sign) ** order
        if weighted:
            coef = -1j * coef

        def w(s, sign=sign):
            fac = np.exp(1j * sign * s[:, :, None] * lam[None, None, :])
            return rotate(_chain(fac, xs))

        def v(s, sign=sign):
            tot = np.sum(s, axis=1)
            val = f.fourier(sign * tot)
            return val * s[:, 0] if weighted else val

        def v_decay(T, weighted=weighted):
            return prof.weighted_sup(nv + 1, power=1 if weighted else 0, t_min=T)

        out.append((coef, LatticeIntegrand(nv, req.base.dim, w, v, x_sup,
                                           hnorm * x_sup, v_decay)))
    return out


def dyadic_sum(u, m, T, region="box", chunk=1 << 14, tol=None):
    """Lattice sum ``S_m = 2^{-m nvars} sum u(k / 2^m)`` over ``[0,T]^nvars``
    (``region="box"``) or ``{sum s <= T}`` (``region="simplex"``).

    Returns ``(S_m, tail_bound)``.  Raises :class:`TruncationError` when the
    certified tail exceeds ``tol``.
    """
    tail = u.tail_bound(T)
    if tol is not None and tail > tol:
        raise TruncationError(f"tail bound {tail:.2e} exceeds {tol:.1e}; enlarge T")
    h = 2.0 ** (-m)
    L = int(math.floor(T / h + 1e-9))
    axes = [np.arange(L + 1)] * u.nvars
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, u.nvars)
    if region == "simplex":
        grid = grid[grid.sum(axis=1) <= L]
    elif region != "box":
        raise ValueError(f"unknown region {region!r}")
    total = np.zeros((u.dim, u.dim), dtype=complex)
    for lo in range(0, len(grid), chunk):
        total += np.sum(u.evaluate(h * grid[lo : lo + chunk]), axis=0)
    return total * h ** u.nvars, tail


def _cone_tuple_sums(sym, nodes, m, T):
    """Scalar lattice sums of the symbol's Fourier representation per tuple."""
    if isinstance(sym, PhiSymbol):
        return -1j * fourier_cone_level(sym.f, nodes, m, T, weight_first=True)
    return fourier_cone_level(sym.f, nodes, m, T)


def _dyadic_tail(sym, T):
    if isinstance(sym, PhiSymbol):
        return fourier_tail_bound(sym.f, sym.n, T, weight_first=True)
    return fourier_tail_bound(sym.f, sym.n, T)


def _level_tensors(req, levels):
    """Per-level lattice approximations of the symbol on eigenvector tuples."""
    sym = req.symbol
    dec = eigh(req.base)
    r = sym.arity
    grids = np.meshgrid(*([dec.eigenvalues] * r), indexing="ij")
    nodes = np.stack(grids, axis=-1).reshape(-1, r)
    shape = (len(dec.eigenvalues),) * r
    lab = dec.labels
    # the symbols are symmetric (phi: in all but the first argument), so each
    # distinct canonical tuple is summed once
    canon = nodes.copy()
    first = 1 if isinstance(sym, PhiSymbol) else 0
    canon[:, first:] = np.sort(canon[:, first:], axis=1)
    uniq, inverse = np.unique(canon, axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    out = []
    for m in levels:
        vals = _cone_tuple_sums(sym, uniq, m, req.T)[inverse].reshape(shape)
        out.append(vals[np.ix_(*([lab] * r))])
    return dec, out


def fit_order(levels, errors):
    """Least-squares slope of ``-log2(error)`` against level ``m``.

    Uses the second half of the levels (at least three) where the asymptotic
    regime has set in; exact zeros are dropped.
    """
    levels = np.asarray(levels, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    levels, errors = levels[keep], errors[keep]
    if len(levels) < 2:
        return math.inf
    start = max(0, min(len(levels) // 2, len(levels) - 3))
    slope = np.polyfit(levels[start:], np.log2(errors[start:]), 1)[0]
    return float(-slope)


def moi_dyadic(req, reference=None, strict=True):
    """``T_phi`` from dyadic lattice sums at levels ``m_min .. m_max``.

    The error against the spectral value is recorded per level and its decay
    rate fitted; ``strict`` raises :class:`DyadicConvergenceError` when the
    fitted order is below 0.3.
    """
    sym = req.symbol
    if isinstance(sym, CustomSymbol) or not isinstance(
        getattr(sym, "f", None), GaussianCombination
    ):
        return _moi_dyadic_generic(req, reference, strict)
    tail = _dyadic_tail(sym, req.T)
    if tail > req.tol:
        raise TruncationError(f"tail bound {tail:.2e} exceeds {req.tol:.1e}; enlarge T")
    levels = list(range(req.m_min, req.m_max + 1))
    dec, tensors = _level_tensors(req, levels)
    q = dec.vectors
    xs = _to_eigenbasis(q, req.args)
    sums = [q @ _contract(t, xs) @ q.conj().T for t in tensors]
    return _finish(req, levels, sums, tail, reference, strict)


def _moi_dyadic_generic(req, reference, strict):
    parts = cone_integrands(req)
    levels = list(range(req.m_min, req.m_max + 1))
    sums = []
    tail = 0.0
    for m in levels:
        total = 0.0
        tail = 0.0
        for coef, u in parts:
            s, t = dyadic_sum(u, m, req.T, region="simplex")
            total = total + coef * s
            tail += t
        sums.append(total)
    if tail > req.tol:
        raise TruncationError(f"tail bound {tail:.2e} exceeds {req.tol:.1e}; enlarge T")
    return _finish(req, levels, sums, tail, reference, strict)


def _finish(req, levels, sums, tail, reference, strict):
    if reference is None:
        reference = moi_spectral(req).value
    errors = [float(np.linalg.norm(s - reference)) for s in sums]
    order = fit_order(levels, errors)
    tail_levels = sums[-4:]
    extrap, _ = richardson(tail_levels, powers=(1, 2, 3, 4)) if len(sums) > 1 else (sums[-1], 0)
    res = MoiResult(
        value=sums[-1],
        method="dyadic",
        levels=levels,
        sums=sums,
        tail_bound=tail,
        order=order,
        errors=errors,
        reference=reference,
        extrapolated=np.asarray(extrap),
    )
    scale = max(float(np.linalg.norm(reference)), 1e-300)
    if strict and errors[-1] > 1e-12 * scale and order < 0.3:
        raise DyadicConvergenceError(res, f"lattice sums not converging (order {order:.2f})")
    return res


def trace_swap_check(req, D, levels=None):
    """Max over levels of ``|Tr(D S_m) - sum_k 2^{-m nvars} Tr(D u(k/2^m))|``.

    The left side applies the trace to the assembled matrix sum; the right
    side sums the traced integrand tuple by tuple.
    """
    D = np.asarray(D, dtype=complex)
    if levels is None:
        levels = list(range(req.m_min, req.m_max + 1))
    dec, tensors = _level_tensors(req, levels)
    q = dec.vectors
    xs = _to_eigenbasis(q, req.args)
    dq = q.conj().T @ D @ q
    # weight of each eigenvector tuple in Tr(D u): x chain closed by D
    r = req.symbol.arity
    letters = string.ascii_letters[:r]
    ops = [letters[j] + letters[j + 1] for j in range(r - 1)]
    spec = ",".join(ops + [letters[-1] + letters[0]]) + "->" + letters
    chain = np.einsum(spec, *xs, dq, optimize=True)
    worst = 0.0
    for t in tensors:
        s_m = q @ _contract(t, xs) @ q.conj().T
        lhs = np.trace(D @ s_m)
        rhs = np.sum(t * chain)
        worst = max(worst, abs(lhs - rhs))
    return worst


# -- quasi-Banach rate scan --------------------------------------------------


def quasi_banach_scan(p, n=1, levels=range(3, 9), T=8.0, lam=None, density=None):
    """Scalar model of the lattice sums in ``L_p``, ``p < 1``.

    Each lattice cell is lifted to its own diagonal entry, so the pieces of
    ``S_m - S_{m-1}`` are disjointly supported and
    ``||S_m - S_{m-1}||_p^p = 2^{-mp(n+1)} sum_k |u(k/2^m) - u(parent(k))|^p``,
    where ``parent(k) = 2 floor(k/2)``.  Likewise
    ``||S_m||_p^p = 2^{-mp(n+1)} sum_k |u(k/2^m)|^p``.

    Returns a dict with per-level ``diff`` and ``norm`` values, the fitted
    decay exponent of ``diff`` and growth exponent of ``norm``, and the
    predicted values ``(n+2) - (n+1)/p`` and bound ``(n+1)/p``.
    """
    nv = n + 1
    if lam is None:
        lam = np.linspace(0.3, 1.1, nv)
    lam = np.asarray(lam, dtype=float)
    if density is None:
        def density(s):
            return np.exp(-np.sum(s, axis=-1))

    def u(s):
        return np.exp(1j * (s @ lam)) * density(s)

    levels = list(levels)
    diffs, norms = [], []
    for m in levels:
        h = 2.0 ** (-m)
        L = int(round(T / h))
        k = np.stack(
            np.meshgrid(*([np.arange(L)] * nv), indexing="ij"), axis=-1
        ).reshape(-1, nv)
        uk = u(h * k)
        up = u(h * (2 * (k // 2)))
        w = 2.0 ** (-m * p * nv)
        diffs.append((w * np.sum(np.abs(uk - up) ** p)) ** (1.0 / p))
        norms.append((w * np.sum(np.abs(uk) ** p)) ** (1.0 / p))
    decay = fit_order(levels, diffs)
    growth = float(np.polyfit(levels, np.log2(norms), 1)[0])
    return {
        "p": p,
        "n": n,
        "levels": levels,
        "diff": diffs,
        "norm": norms,
        "decay_exponent": decay,
        "predicted_decay": (n + 2) - nv / p,
        "growth_exponent": growth,
        "growth_bound": nv / p,
    }
