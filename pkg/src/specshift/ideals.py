"""Singular values and ideal (quasi-)norms of matrices.

All norms are homogeneous of degree one.  The degree-``n`` functional
``sup (k+1) mu(k)^n`` is available separately as :func:`weak_power_functional`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SingularValueSeq",
    "IdealSpec",
    "Schatten",
    "WeakSchatten",
    "Lorentz",
    "DixmierMacaev",
    "DMConvex",
    "IdealNormReport",
    "singular_values",
    "ideal_norm",
    "weak_power_functional",
    "norm_report",
    "ViolationReport",
    "quasinorm_property_suite",
    "InterpolationReport",
    "interpolation_check",
]


@dataclass(frozen=True)
class SingularValueSeq:
    """Nonincreasing singular values ``mu(0) >= mu(1) >= ... >= 0``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def singular_values(a):
    """Eigenvalues of ``|A| = (A* A)^(1/2)`` in nonincreasing order."""
    if isinstance(a, SingularValueSeq):
        return a
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError("expected a matrix")
    if a.size == 0:
        return SingularValueSeq(np.zeros(0))
    mu = np.linalg.svd(a, compute_uv=False)
    return SingularValueSeq(np.sort(mu)[::-1])


@dataclass(frozen=True)
class IdealSpec:
    """Which (quasi-)norm to compute; use the constructor helpers below."""

    kind: str
    p: float = None
    q: float = None
    s_max: float = 16.0

    def __post_init__(self):
        kinds = ("schatten", "weak", "lorentz", "dixmier_macaev", "dm_convex")
        if self.kind not in kinds:
            raise ValueError(f"unknown ideal kind {self.kind!r}")
        for name in ("p", "q"):
            val = getattr(self, name)
            if val is not None and not (val > 0):
                raise ValueError(f"parameter {name} must be positive, got {val}")
        if self.kind in ("schatten", "weak", "lorentz") and self.p is None:
            raise ValueError(f"{self.kind} needs p")
        if self.kind in ("lorentz", "dm_convex") and self.q is None:
            raise ValueError(f"{self.kind} needs q")
        if self.kind == "dm_convex" and not self.s_max > 1:
            raise ValueError("s_max must exceed 1")

    def __str__(self):
        if self.kind == "schatten":
            return f"Schatten({self.p:g})"
        if self.kind == "weak":
            return f"WeakSchatten({self.p:g})"
        if self.kind == "lorentz":
            return f"Lorentz({self.p:g},{self.q:g})"
        if self.kind == "dixmier_macaev":
            return "DixmierMacaev"
        return f"DMConvex({self.q:g})"

    @classmethod
    def parse(cls, text):
        """Inverse of ``str``: ``"Schatten(2)"``, ``"Lorentz(1,2)"``, ..."""
        name, _, rest = text.strip().partition("(")
        args = [float(v) for v in rest.rstrip(")").split(",") if v.strip()]
        table = {
            "schatten": Schatten,
            "weakschatten": WeakSchatten,
            "lorentz": Lorentz,
            "dixmiermacaev": DixmierMacaev,
            "dmconvex": DMConvex,
        }
        try:
            return table[name.strip().lower()](*args)
        except KeyError:
            raise ValueError(f"unknown ideal {text!r}") from None


def Schatten(p):
    return IdealSpec("schatten", p=p)


def WeakSchatten(p):
    return IdealSpec("weak", p=p)


def Lorentz(p, q):
    return IdealSpec("lorentz", p=p, q=q)


def DixmierMacaev():
    return IdealSpec("dixmier_macaev")


def DMConvex(q, s_max=16.0):
    return IdealSpec("dm_convex", q=q, s_max=s_max)


def _schatten(mu, p):
    if mu.size == 0 or mu[0] == 0.0:
        return 0.0
    # scale out mu[0] so large or small p cannot overflow
    r = mu / mu[0]
    return float(mu[0] * math.fsum(r**p) ** (1.0 / p))


def _dm_convex(mu, q, s_max, rtol=1e-6):
    """``sup_{1 < s <= s_max} (s-1)^(1/q) ||A||_{sq}`` on a refined geometric grid."""
    if mu.size == 0 or mu[0] == 0.0:
        return 0.0

    def g(s):
        return (s - 1.0) ** (1.0 / q) * _schatten(mu, s * q)

    lo = 1e-6 * (s_max - 1.0)
    pts = 64
    prev = None
    while True:
        grid = 1.0 + np.geomspace(lo, s_max - 1.0, pts)
        vals = np.array([g(s) for s in grid])
        best = float(vals.max())
        if prev is not None and abs(best - prev) <= rtol * best:
            break
        prev = best
        pts *= 2
        if pts > 1 << 14:
            break
    # polish around the best grid point
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    for _ in range(60):
        c = a + (b - a) * 0.381966
        d = b - (b - a) * 0.381966
        if g(c) < g(d):
            a = c
        else:
            b = d
    return max(best, g(0.5 * (a + b)))


def ideal_norm(a, spec):
    """(Quasi-)norm of ``a`` in the ideal described by ``spec``."""
    mu = np.asarray(singular_values(a))
    if mu.size == 0:
        return 0.0
    k1 = np.arange(1, mu.size + 1, dtype=float)
    if spec.kind == "schatten":
        return _schatten(mu, spec.p)
    if spec.kind == "weak":
        return float(np.max(k1 ** (1.0 / spec.p) * mu))
    if spec.kind == "lorentz":
        p, q = spec.p, spec.q
        return float(math.fsum(k1 ** (q / p - 1.0) * mu**q) ** (1.0 / q))
    if spec.kind == "dixmier_macaev":
        return float(np.max(np.cumsum(mu) / np.log1p(k1)))
    return _dm_convex(mu, spec.q, spec.s_max)


def weak_power_functional(a, n):
    """``sup_k (k+1) mu(k)^n``, the degree-``n`` weak functional."""
    mu = np.asarray(singular_values(a))
    if mu.size == 0:
        return 0.0
    return float(np.max(np.arange(1, mu.size + 1) * mu**n))


@dataclass
class IdealNormReport:
    singular_values: list
    norms: dict
    conventions: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "singular_values": [float(v) for v in self.singular_values],
            "norms": {str(k): float(v) for k, v in self.norms.items()},
            "conventions": dict(self.conventions),
        }


def norm_report(a, specs, weak_powers=()):
    mu = singular_values(a)
    norms = {str(s): ideal_norm(mu, s) for s in specs}
    for n in weak_powers:
        norms[f"WeakPower({n})"] = weak_power_functional(mu, n)
    conventions = {
        "homogeneity": "degree 1",
        "weak": "sup (k+1)^(1/p) mu(k)",
        "lorentz": "(sum (k+1)^(q/p-1) mu(k)^q)^(1/q)",
        "weak_power": "sup (k+1) mu(k)^n",
    }
    return IdealNormReport(list(mu.values), norms, conventions)


# -- property suites ---------------------------------------------------------


@dataclass
class ViolationReport:
    """Counts of trials and violations per property; violations keep inputs."""

    trials: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.violations)

    def rows(self):
        for v in self.violations:
            yield {k: v[k] for k in ("property", "trial", "lhs", "rhs", "excess")}


def _random_matrix(rng, d):
    """Complex Gaussian matrix with a random power-law singular profile."""
    from .ensembles import haar_unitary

    decay = rng.uniform(0.0, 3.0)
    mu = (np.arange(1, d + 1) ** -decay) * rng.uniform(0.1, 10.0)
    rank = rng.integers(1, d + 1)
    mu[rank:] = 0.0
    return haar_unitary(d, rng) @ np.diag(mu) @ haar_unitary(d, rng)


def quasinorm_property_suite(p=0.5, dim=4, trials=1000, seed=0, terms=5, rtol=1e-12):
    """Check, ``trials`` times each:

    * ``||A+B||_p^p <= ||A||_p^p + ||B||_p^p`` (``p <= 1``);
    * ``||sum A_k||_p^p <= sum ||A_k||_p^p`` for ``terms`` summands;
    * Hoelder ``||xy||_r <= ||x||_{p1} ||y||_{p2}``, ``1/r = 1/p1 + 1/p2``,
      with random exponents in ``[0.25, 8]``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0 < p <= 1:
        raise ValueError("the p-triangle inequality needs 0 < p <= 1")
    rng = np.random.default_rng(seed)
    rep = ViolationReport()

    def record(name, t, lhs, rhs, mats):
        rep.trials[name] = rep.trials.get(name, 0) + 1
        if lhs > rhs * (1.0 + rtol) + 1e-300:
            rep.violations.append({
                "property": name, "trial": t, "lhs": lhs, "rhs": rhs,
                "excess": lhs / rhs - 1.0 if rhs > 0 else math.inf,
                "matrices": [m.tolist() for m in mats],
            })

    S = Schatten(p)
    for t in range(trials):
        a = _random_matrix(rng, dim)
        b = _random_matrix(rng, dim)
        record("qin", t, ideal_norm(a + b, S) ** p,
               ideal_norm(a, S) ** p + ideal_norm(b, S) ** p, [a, b])
        mats = [_random_matrix(rng, dim) for _ in range(terms)]
        record("riesz_fischer", t, ideal_norm(sum(mats), S) ** p,
               math.fsum(ideal_norm(m, S) ** p for m in mats), mats)
        p1, p2 = rng.uniform(0.25, 8.0, 2)
        r = 1.0 / (1.0 / p1 + 1.0 / p2)
        x = _random_matrix(rng, dim)
        y = _random_matrix(rng, dim)
        record("holder", t, ideal_norm(x @ y, Schatten(r)),
               ideal_norm(x, Schatten(p1)) * ideal_norm(y, Schatten(p2)), [x, y])
    return rep


# -- interpolation -----------------------------------------------------------


@dataclass
class InterpolationReport:
    dims: list
    max_ratio: dict
    growth: float
    ratios: dict = field(default_factory=dict)


def interpolation_check(make_map, exponents, dims=(4, 8, 16, 32), trials=20, seed=0,
                        sampler=None):
    """Empirical weak-type constant of a multilinear map.

    ``make_map(dim, rng)`` returns ``R`` taking ``n`` matrices.  Arguments are
    drawn by ``sampler(dim, alpha_j, rng)`` (default: Haar-rotated diagonal
    with profile ``(k+1)^(-1/alpha_j)`` and random signs).  The ratio is
    ``||R(x)||_{alpha,inf} / prod ||x_j||_{alpha_j,inf}``; ``growth`` is the
    largest per-dimension maximum divided by the one at the smallest dimension.
    """
    from .ensembles import extremal_profile, trial_rngs

    *alphas, alpha = exponents
    if not math.isclose(1.0 / alpha, sum(1.0 / a for a in alphas), rel_tol=1e-12):
        raise ValueError("exponents must satisfy 1/alpha = sum 1/alpha_j")
    if sampler is None:
        def sampler(d, a, rng):
            return extremal_profile(d, a, rng)

    ratios = {}
    for d in dims:
        vals = []
        for rng in trial_rngs(seed, trials, tag=d):
            rmap = make_map(d, rng)
            xs = [sampler(d, a, rng) for a in alphas]
            den = math.prod(ideal_norm(x, WeakSchatten(a)) for x, a in zip(xs, alphas))
            num = ideal_norm(rmap(*xs), WeakSchatten(alpha))
            vals.append(num / den if den > 0 else 0.0)
        ratios[d] = vals
    max_ratio = {d: max(v) for d, v in ratios.items()}
    base = max_ratio[dims[0]]
    growth = max(max_ratio.values()) / base if base > 0 else math.inf
    return InterpolationReport(list(dims), max_ratio, growth, ratios)
