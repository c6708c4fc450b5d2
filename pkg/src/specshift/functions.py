"""Closed-form scalar function families.

Three variants are supported:

* :class:`GaussianCombination` -- ``sum c (x-b)^k exp(-a (x-b)^2)``, Schwartz
  class, with exact derivatives and exact Fourier transforms;
* :class:`RationalFunction` -- ``sum c (z-x)^(-m)`` with non-real poles;
* :class:`Polynomial` -- a testing device (not Schwartz).

The Fourier convention is ``Ff(t) = (1/2pi) int f(x) exp(-i t x) dx`` so that
``f(x) = int Ff(t) exp(i t x) dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar

__all__ = [
    "MAX_ORDER",
    "UnsupportedOrderError",
    "ScalarFunction",
    "GaussianTerm",
    "GaussianCombination",
    "RationalTerm",
    "RationalFunction",
    "Polynomial",
    "FourierProfile",
    "gaussian",
    "eval_derivative",
    "fourier",
    "sup_norm_derivative",
    "function_from_json",
]

MAX_ORDER = 12


class UnsupportedOrderError(ValueError):
    pass


def _check_order(k):
    if int(k) != k or k < 0:
        raise ValueError(f"derivative order must be a nonnegative integer, got {k}")
    if k > MAX_ORDER:
        raise UnsupportedOrderError(
            f"closed forms are maintained up to order {MAX_ORDER}, got {k}"
        )
    return int(k)


def _sup_on_grid(fn, grid):
    """Max of ``fn`` over a sorted grid, refined near the best grid point."""
    vals = fn(grid)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda x: -float(fn(np.array([x]))[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * (1.0 + abs(lo) + abs(hi))},
        )
        best = max(best, -float(res.fun))
    return best


class ScalarFunction:
    """Base class: callable, exact derivatives, JSON round trip."""

    variant = None

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, k):
        raise NotImplementedError

    @property
    def real_valued(self):
        raise NotImplementedError

    def conj(self):
        raise NotImplementedError

    def real_part(self):
        return _Combination(self, self.conj(), 0.5, 0.5)

    def imag_part(self):
        return _Combination(self, self.conj(), -0.5j, 0.5j)

    def sup_derivative(self, k):
        return sup_norm_derivative(self, k)

    def to_json(self):
        raise NotImplementedError


# -- Gaussian combinations ---------------------------------------------------


@dataclass(frozen=True)
class GaussianTerm:
    c: complex
    a: float
    b: float = 0.0
    k: int = 0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"Gaussian width must be positive, got {self.a}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("monomial degree must be a nonnegative integer")
        object.__setattr__(self, "c", complex(self.c))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "k", int(self.k))


class GaussianCombination(ScalarFunction):
    """``sum_j c_j (x - b_j)^k_j exp(-a_j (x - b_j)^2)``."""

    variant = "gaussian"

    def __init__(self, terms):
        self.terms = tuple(
            t if isinstance(t, GaussianTerm) else GaussianTerm(*t) for t in terms
        )
        if not self.terms:
            raise ValueError("empty Gaussian combination")
        self._dpolys = {}
        self._fpolys = {}

    def __repr__(self):
        return f"GaussianCombination({list(self.terms)!r})"

    def _deriv_poly(self, idx, k):
        """Coefficients of p with d^k/dy^k [y^K e^{-a y^2}] = p(y) e^{-a y^2}."""
        key = (idx, k)
        if key not in self._dpolys:
            term = self.terms[idx]
            if k == 0:
                p = np.zeros(term.k + 1)
                p[-1] = 1.0
            else:
                prev = self._deriv_poly(idx, k - 1)
                p = P.polysub(P.polyder(prev), P.polymulx(2.0 * term.a * prev))
            self._dpolys[key] = p
        return self._dpolys[key]

    def derivative(self, x, k):
        k = _check_order(k)
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for idx, term in enumerate(self.terms):
            y = x - term.b
            out += term.c * P.polyval(y, self._deriv_poly(idx, k)) * np.exp(
                -term.a * y * y
            )
        return out if out.ndim else complex(out)

    def _fourier_poly(self, idx, k=0):
        """Polynomial R with d^k/dt^k of the term's transform = e^{-ibt} R(t) e^{-t^2/4a}."""
        key = (idx, k)
        if key not in self._fpolys:
            term = self.terms[idx]
            if k == 0:
                q = np.array([1.0])
                for _ in range(term.k):
                    q = P.polysub(P.polyder(q), P.polymulx(q / (2.0 * term.a)))
                lead = term.c * math.sqrt(math.pi / term.a) / (2.0 * math.pi)
                r = lead * (1j ** term.k) * q.astype(complex)
            else:
                prev = self._fourier_poly(idx, k - 1)
                r = P.polysub(P.polyder(prev), 1j * term.b * prev)
                r = P.polysub(r, P.polymulx(prev / (2.0 * term.a)))
            self._fpolys[key] = np.atleast_1d(r)
        return self._fpolys[key]

    def fourier(self, t, k=0):
        """k-th derivative (k = 0 or 1 in practice) of the Fourier transform."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for idx, term in enumerate(self.terms):
            r = self._fourier_poly(idx, k)
            out += (
                np.exp(-1j * term.b * t)
                * P.polyval(t, r)
                * np.exp(-t * t / (4.0 * term.a))
            )
        return out if out.ndim else complex(out)

    @property
    def real_valued(self):
        groups = {}
        for term in self.terms:
            key = (term.a, term.b, term.k)
            groups[key] = groups.get(key, 0.0) + term.c
        scale = sum(abs(t.c) for t in self.terms)
        return all(abs(c.imag) <= 1e-14 * scale for c in groups.values())

    def conj(self):
        return GaussianCombination(
            [GaussianTerm(np.conj(t.c), t.a, t.b, t.k) for t in self.terms]
        )

    def real_part(self):
        return GaussianCombination(
            [GaussianTerm(t.c.real, t.a, t.b, t.k) for t in self.terms]
        )

    def imag_part(self):
        return GaussianCombination(
            [GaussianTerm(t.c.imag, t.a, t.b, t.k) for t in self.terms]
        )

    def window(self, k=0):
        """Interval outside of which every term of f^(k) is below ~e^-60."""
        lo = min(t.b for t in self.terms)
        hi = max(t.b for t in self.terms)
        w = max(
            (math.sqrt(t.k + k + 1.0) + 8.0) / math.sqrt(t.a) for t in self.terms
        )
        return lo - w, hi + w

    def fourier_window(self, extra_degree=0):
        return max(
            2.0 * math.sqrt(t.a) * (math.sqrt(t.k + extra_degree + 1.0) + 9.0)
            for t in self.terms
        )

    def to_json(self):
        return {
            "variant": self.variant,
            "terms": [
                {"c": [t.c.real, t.c.imag], "a": t.a, "b": t.b, "k": t.k}
                for t in self.terms
            ],
        }


def gaussian(a=1.0, b=0.0, c=1.0, k=0):
    """Single term ``c (x-b)^k exp(-a (x-b)^2)``; defaults give ``exp(-x^2)``."""
    return GaussianCombination([GaussianTerm(c, a, b, k)])


# -- rational functions ------------------------------------------------------


@dataclass(frozen=True)
class RationalTerm:
    c: complex
    z: complex
    m: int = 1

    def __post_init__(self):
        z = complex(self.z)
        if z.imag == 0.0:
            raise ValueError(f"pole must be non-real, got {z}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("pole order must be a positive integer")
        object.__setattr__(self, "c", complex(self.c))
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "m", int(self.m))


class RationalFunction(ScalarFunction):
    """``sum_j c_j (z_j - x)^(-m_j)``, bounded at infinity, poles off the axis."""

    variant = "rational"

    def __init__(self, terms):
        self.terms = tuple(
            t if isinstance(t, RationalTerm) else RationalTerm(*t) for t in terms
        )
        if not self.terms:
            raise ValueError("empty rational function")

    def __repr__(self):
        return f"RationalFunction({list(self.terms)!r})"

    def derivative(self, x, k):
        k = _check_order(k)
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for term in self.terms:
            rising = math.prod(range(term.m, term.m + k))
            out += term.c * rising * (term.z - x) ** (-(term.m + k))
        return out if out.ndim else complex(out)

    @property
    def real_valued(self):
        groups = {}
        for term in self.terms:
            key = (term.z, term.m)
            groups[key] = groups.get(key, 0.0) + term.c
        scale = sum(abs(t.c) for t in self.terms)
        for (z, m), c in groups.items():
            partner = groups.get((z.conjugate(), m), 0.0)
            if abs(c - np.conj(partner)) > 1e-14 * scale:
                return False
        return True

    def conj(self):
        return RationalFunction(
            [RationalTerm(np.conj(t.c), np.conj(t.z), t.m) for t in self.terms]
        )

    def real_part(self):
        return RationalFunction(
            [RationalTerm(0.5 * t.c, t.z, t.m) for t in self.terms]
            + [RationalTerm(0.5 * np.conj(t.c), np.conj(t.z), t.m) for t in self.terms]
        )

    def imag_part(self):
        return RationalFunction(
            [RationalTerm(-0.5j * t.c, t.z, t.m) for t in self.terms]
            + [
                RationalTerm(0.5j * np.conj(t.c), np.conj(t.z), t.m)
                for t in self.terms
            ]
        )

    def to_json(self):
        return {
            "variant": self.variant,
            "terms": [
                {"c": [t.c.real, t.c.imag], "z": [t.z.real, t.z.imag], "m": t.m}
                for t in self.terms
            ],
        }


# -- polynomials -------------------------------------------------------------


class Polynomial(ScalarFunction):
    """Real polynomial, coefficients in ascending powers."""

    variant = "polynomial"

    def __init__(self, coefficients):
        c = np.atleast_1d(np.asarray(coefficients, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("polynomial needs a nonempty coefficient vector")
        self.coefficients = c

    @classmethod
    def monomial(cls, k):
        c = np.zeros(k + 1)
        c[k] = 1.0
        return cls(c)

    def __repr__(self):
        return f"Polynomial({self.coefficients.tolist()!r})"

    @property
    def degree(self):
        nz = np.nonzero(self.coefficients)[0]
        return int(nz[-1]) if nz.size else 0

    def derivative(self, x, k):
        k = _check_order(k)
        x = np.asarray(x, dtype=float)
        c = P.polyder(self.coefficients, k) if k else self.coefficients
        out = P.polyval(x, c).astype(complex)
        return out if out.ndim else complex(out)

    @property
    def real_valued(self):
        return True

    def conj(self):
        return self

    def real_part(self):
        return self

    def imag_part(self):
        return Polynomial([0.0])

    def to_json(self):
        return {"variant": self.variant, "terms": self.coefficients.tolist()}


class _Combination(ScalarFunction):
    """``alpha f + beta g``; fallback for real/imaginary parts."""

    def __init__(self, f, g, alpha, beta):
        self.f, self.g, self.alpha, self.beta = f, g, alpha, beta

    def derivative(self, x, k):
        return self.alpha * self.f.derivative(x, k) + self.beta * self.g.derivative(x, k)

    @property
    def real_valued(self):
        return True


# -- Fourier data ------------------------------------------------------------


def fourier(f, t):
    """Fourier transform of a Gaussian combination at ``t``."""
    if not isinstance(f, GaussianCombination):
        raise TypeError(
            f"Fourier transforms are only available for Gaussian combinations, "
            f"not {type(f).__name__}"
        )
    return f.fourier(t)


class FourierProfile:
    """Closed-form ``Ff`` with decay certificates.

    ``decay[alpha]`` bounds ``|Ff(t)| (1+|t|)^alpha`` and ``grad_decay[alpha]``
    bounds ``|Ff'(t)| (1+|t|)^alpha``, for ``alpha`` in ``{2, n+2}``.  The
    certificates are spot-checked at 1000 sampled points on construction.
    """

    def __init__(self, f, n=1, check=True):
        if not isinstance(f, GaussianCombination):
            raise TypeError("FourierProfile needs a Gaussian combination")
        self.f = f
        self.n = int(n)
        self.tmax = f.fourier_window(extra_degree=self.n + 4)
        self.decay = {}
        self.grad_decay = {}
        for alpha in sorted({2, self.n + 2}):
            self.decay[alpha] = self.weighted_sup(alpha)
            self.grad_decay[alpha] = self.weighted_sup(alpha, order=1)
        if check:
            self.validate()

    def __call__(self, t):
        return self.f.fourier(t)

    def derivative(self, t):
        return self.f.fourier(t, 1)

    def weighted_sup(self, alpha, order=0, power=0, t_min=0.0):
        """``sup_{|t| >= t_min} |t|^power |Ff^(order)(t)| (1+|t|)^alpha``."""
        tmax = max(self.tmax, 2.0 * t_min + 1.0)

        def g(t):
            return (
                np.abs(t) ** power
                * np.abs(self.f.fourier(t, order))
                * (1.0 + np.abs(t)) ** alpha
            )

        best = 0.0
        for sgn in (1.0, -1.0):
            grid = sgn * np.linspace(t_min, tmax, 20001)
            best = max(best, _sup_on_grid(g, np.sort(grid)))
        return best * (1.0 + 1e-9)

    def validate(self, samples=1000, seed=0):
        rng = np.random.default_rng(seed)
        t = rng.uniform(-self.tmax, self.tmax, samples)
        for alpha, c in self.decay.items():
            if np.any(np.abs(self(t)) * (1 + np.abs(t)) ** alpha > c):
                raise AssertionError(f"decay certificate alpha={alpha} violated")
        for alpha, c in self.grad_decay.items():
            if np.any(np.abs(self.derivative(t)) * (1 + np.abs(t)) ** alpha > c):
                raise AssertionError(f"gradient certificate alpha={alpha} violated")


# -- free functions ----------------------------------------------------------


def eval_derivative(f, x, k):
    return f.derivative(x, k)


def sup_norm_derivative(f, k):
    """``sup_x |f^(k)(x)|`` (an upper estimate, refined to near equality)."""
    k = _check_order(k)
    if isinstance(f, Polynomial):
        if f.degree > k:
            return math.inf
        if f.degree < k:
            return 0.0
        return abs(math.factorial(k) * f.coefficients[k])

    def g(x):
        return np.abs(f.derivative(x, k))

    if isinstance(f, GaussianCombination):
        lo, hi = f.window(k)
        grid = np.linspace(lo, hi, 40001)
        best = _sup_on_grid(g, grid)
        edge = max(g(np.array([lo, hi])))
        return max(best, edge)
    if isinstance(f, RationalFunction):
        pieces = []
        for term in f.terms:
            w = abs(term.z.imag)
            pieces.append(term.z.real + w * np.linspace(-40.0, 40.0, 8001))
        center = np.mean([t.z.real for t in f.terms])
        reach = max(abs(t.z) for t in f.terms) + 1.0
        radius = 1e4 * reach
        far = np.geomspace(1e-2 * reach, radius, 2000)
        pieces += [center + far, center - far]
        grid = np.unique(np.concatenate(pieces))
        best = _sup_on_grid(g, grid)
        tail = sum(
            abs(t.c) * math.prod(range(t.m, t.m + k)) / (radius - abs(t.z)) ** (t.m + k)
            for t in f.terms
        )
        return max(best, tail)
    # generic fallback: real/imag combinations of the families above
    grid = np.linspace(-50.0, 50.0, 200001)
    return _sup_on_grid(g, grid)


def function_from_json(obj):
    variant = obj.get("variant")
    terms = obj.get("terms")
    if terms is None:
        raise ValueError("function JSON needs a 'terms' field")
    if variant == "gaussian":
        return GaussianCombination(
            [
                GaussianTerm(complex(*t["c"]) if isinstance(t["c"], list) else t["c"],
                             t["a"], t.get("b", 0.0), t.get("k", 0))
                for t in terms
            ]
        )
    if variant == "rational":
        return RationalFunction(
            [
                RationalTerm(complex(*t["c"]) if isinstance(t["c"], list) else t["c"],
                             complex(*t["z"]), t.get("m", 1))
                for t in terms
            ]
        )
    if variant == "polynomial":
        return Polynomial(terms)
    raise ValueError(f"unknown function variant {variant!r}")
