import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specshift.divdiff import (
    CoalescenceWarning,
    LambdaTuple,
    PhiInconsistencyError,
    QuadratureBudgetWarning,
    SimplexQuadrature,
    compositions,
    divdiff_fourier_cone,
    divdiff_rational,
    divdiff_rational_function,
    divdiff_recursive,
    divdiff_simplex,
    phi_eval,
    richardson,
)
from specshift.functions import GaussianCombination, GaussianTerm, Polynomial, gaussian
from specshift.perturbation import rational


def dd_definition(f, lam):
    """Divided difference by the first-two-arguments recursion (distinct nodes)."""
    if len(lam) == 1:
        return f(lam[0])
    a, b, rest = lam[0], lam[1], list(lam[2:])
    return (dd_definition(f, [a] + rest) - dd_definition(f, [b] + rest)) / (a - b)


def complete_homogeneous(k, lam):
    if k < 0:
        return 0
    return sum(math.prod(c) for c in itertools.combinations_with_replacement(lam, k))


# -- recursive table ---------------------------------------------------------


def test_recursive_examples():
    assert divdiff_recursive(Polynomial.monomial(2), [1, 2]) == 3
    assert divdiff_recursive(Polynomial.monomial(3), [0, 1, 2]) == 3
    for n in range(1, 5):
        assert divdiff_recursive(Polynomial([4.2]), np.arange(n + 1.0)) == 0


@pytest.mark.parametrize("k", range(0, 8))
def test_monomial_matches_complete_homogeneous_exactly(k):
    rng = np.random.default_rng(k)
    for n in range(0, 5):
        lam = [int(v) for v in rng.integers(-4, 5, n + 1)]
        got = divdiff_recursive(Polynomial.monomial(k), lam)
        assert got == complete_homogeneous(k - n, lam)


def test_matches_definition_recursion_distinct_nodes():
    f = GaussianCombination([GaussianTerm(1.0, 1.0), GaussianTerm(0.5j, 0.7, 0.4, 1)])
    rng = np.random.default_rng(7)
    for n in range(1, 5):
        lam = list(rng.uniform(-2, 2, n + 1))
        ref = dd_definition(f, lam)
        assert abs(divdiff_recursive(f, lam) - ref) <= 1e-9 * max(1.0, abs(ref))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_permutation_symmetry_exhaustive(n):
    f = gaussian(b=0.3)
    rng = np.random.default_rng(n)
    lam = rng.uniform(-1.5, 1.5, n + 1)
    lam[1] = lam[0]  # include a coalesced pair
    ref = divdiff_recursive(f, lam)
    for perm in itertools.permutations(lam):
        assert abs(divdiff_recursive(f, perm) - ref) <= 1e-13


def test_coalesced_nodes_use_derivatives():
    f = gaussian()
    assert divdiff_recursive(f, [0.4, 0.4]) == pytest.approx(f.derivative(0.4, 1))
    assert divdiff_recursive(f, [0.4, 0.4, 0.4]) == pytest.approx(f.derivative(0.4, 2) / 2)


def test_near_coalescence_flags_switch():
    f = gaussian()
    with pytest.warns(CoalescenceWarning):
        v = divdiff_recursive(f, [0.5, 0.5 + 1e-9])
    assert v == pytest.approx(f.derivative(0.5, 1), abs=1e-8)
    lt = LambdaTuple([0.5, 0.5 + 1e-9, 2.0])
    assert lt.clusters == [[0, 1], [2]]
    assert lt.switched
    assert not LambdaTuple([0.5, 0.5, 2.0]).switched


def test_coalescence_continuity():
    f = gaussian()
    base = np.array([0.2, 0.2, 0.9])
    v0 = divdiff_recursive(f, base)
    L = 2.0 * 4.0  # generous bound on |f'''| / 2
    for eps in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]:
        lam = base.copy()
        lam[1] += eps
        assert abs(divdiff_recursive(f, lam) - v0) <= L * eps


# -- rational closed form ----------------------------------------------------


def test_compositions_enumeration():
    assert list(compositions(3, 2, 1, 2)) == [(1, 2), (2, 1)]
    assert list(compositions(3, 3, 1, 1)) == [(1, 1, 1)]
    for m in range(1, 4):
        for n in range(0, 4):
            comps = list(compositions(m + n, n + 1, 1, m))
            assert len(set(comps)) == len(comps)
            assert all(sum(c) == m + n and all(1 <= x <= m for x in c) for c in comps)


def test_rational_examples():
    assert divdiff_rational(1, 1j, [0, 1]) == pytest.approx(1 / (1j * (1j - 1)))
    assert divdiff_rational(1, 1j, [0, 1]) == pytest.approx((-1 + 1j) / 2)
    assert divdiff_rational(1, 1j, [0, 0, 0]) == pytest.approx(1j)
    f = rational(2, 2j)
    assert divdiff_rational(2, 2j, [0, 1]) == pytest.approx(dd_definition(f, [0.0, 1.0]))


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 4), n=st.integers(0, 4), seed=st.integers(0, 10**6))
def test_rational_matches_recursive(m, n, seed):
    rng = np.random.default_rng(seed)
    z = complex(rng.uniform(-1, 1), rng.choice([-1, 1]) * rng.uniform(0.3, 2))
    lam = rng.uniform(-2, 2, n + 1)
    if n >= 2:
        lam[1] = lam[0]
    f = rational(m, z)
    ref = divdiff_recursive(f, lam)
    assert abs(divdiff_rational(m, z, lam) - ref) <= 1e-10 * abs(ref)


def test_rational_function_sum():
    f = rational(1, 1j)
    g = type(f)(list(f.terms) + list(rational(2, -0.5 + 1j, 3.0).terms))
    lam = [0.1, 0.7, -0.3]
    assert divdiff_rational_function(g, lam) == pytest.approx(divdiff_recursive(g, lam), rel=1e-12)


def test_rational_rejects_real_pole():
    with pytest.raises(ValueError):
        divdiff_rational(1, 1.0, [0, 1])


# -- simplex quadrature ------------------------------------------------------


@pytest.mark.parametrize("rule", ["gauss", "midpoint"])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_simplex_rule_weights(n, rule):
    q = SimplexQuadrature(n, 6, rule)
    assert np.all(q.weights > 0)
    assert q.weights.sum() == pytest.approx(1 / math.factorial(n), rel=1e-14)
    assert np.allclose(q.nodes.sum(axis=1), 1.0)
    assert np.all(q.nodes >= 0)


def test_simplex_examples():
    f = gaussian()
    assert divdiff_simplex(f, [0.3]).value == f(0.3)
    assert divdiff_simplex(Polynomial.monomial(2), [1, 2]).value == pytest.approx(3.0, abs=1e-13)
    est = divdiff_simplex(f, [0.0, 0.5, 1.0])
    assert abs(est.value - divdiff_recursive(f, [0.0, 0.5, 1.0])) <= 1e-8
    assert est.converged


@pytest.mark.parametrize("n", [1, 2, 3])
def test_gauss_simplex_exact_for_polynomials(n):
    # f^(n) of a degree n+5 polynomial has degree 5; 3 points per direction suffice
    f = Polynomial.monomial(n + 5)
    q = SimplexQuadrature(n, 3)
    lam = np.linspace(-1, 1.5, n + 1)
    val = np.dot(q.weights, f.derivative(q.nodes @ lam, n))
    assert val == pytest.approx(divdiff_recursive(f, lam), rel=1e-12)


def test_midpoint_rule_route():
    f = gaussian()
    lam = [0.0, 0.4, 1.1]
    est = divdiff_simplex(f, lam, tol=1e-9, rule="midpoint")
    assert est.converged
    assert abs(est.value - divdiff_recursive(f, lam)) <= 1e-8
    with pytest.raises(ValueError):
        SimplexQuadrature(2, 4, "trapezoid")


def test_simplex_error_estimate_is_honest():
    f = gaussian(a=2.0)
    rng = np.random.default_rng(11)
    for n in range(1, 4):
        lam = rng.uniform(-1, 1, n + 1)
        est = divdiff_simplex(f, lam, tol=1e-9)
        assert abs(est.value - divdiff_recursive(f, lam)) <= max(10 * est.error, 1e-12)


def test_simplex_budget_returns_partial_result():
    f = gaussian(a=30.0)
    with pytest.warns(QuadratureBudgetWarning):
        est = divdiff_simplex(f, [-1.0, 0.0, 0.2, 1.0], tol=1e-15, max_points=5000)
    assert not est.converged
    assert np.isfinite(est.error)


def test_richardson_removes_even_powers():
    vals = [1.0 + 0.5 * h**2 + 0.1 * h**4 for h in (1.0, 0.5, 0.25)]
    best, err = richardson(vals)
    assert best == pytest.approx(1.0, abs=1e-14)


# -- Fourier cone ------------------------------------------------------------


def test_cone_n0_is_fourier_inversion():
    f = gaussian(b=0.2)
    est = divdiff_fourier_cone(f, [0.7])
    assert est.value == pytest.approx(f(0.7), abs=1e-9)


def test_cone_first_order_example():
    # (f(0) - f(1)) / (0 - 1) = e^{-1} - 1 for f = e^{-x^2}
    exact = math.exp(-1) - 1
    est = divdiff_fourier_cone(gaussian(), [0.0, 1.0], m=10, T=16)
    assert abs(est.value - exact) <= 1e-6
    # raw lattice sum converges at first order only
    assert abs(est.info["raw"] - exact) <= 1e-3


def test_cone_derivative_branch():
    est = divdiff_fourier_cone(gaussian(), [0.0, 0.0])
    assert abs(est.value) <= 1e-9


def test_cone_raw_sums_converge_at_rate_one():
    f = gaussian()
    lam = [0.1, 0.6, -0.4]
    ref = divdiff_recursive(f, lam)
    est = divdiff_fourier_cone(f, lam, m=11, depth=6)
    errs = [abs(s - ref) for s in est.info["sums"]]
    ratios = [a / b for a, b in zip(errs[:-1], errs[1:])]
    assert all(1.8 < r < 2.2 for r in ratios)


def test_cone_truncation_error():
    with pytest.raises(ValueError, match="enlarge T"):
        divdiff_fourier_cone(gaussian(a=20.0), [0.0, 1.0], T=2.0, tol=1e-12)


def test_cone_rejects_non_gaussian():
    with pytest.raises(TypeError):
        divdiff_fourier_cone(rational(1, 1j), [0.0, 1.0])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_cone_complex_gaussian(n):
    f = GaussianCombination([GaussianTerm(0.5 - 1j, 1.3, 0.2, 1), GaussianTerm(1.0, 0.8)])
    lam = np.random.default_rng(n).uniform(-1.5, 1.5, n + 1)
    est = divdiff_fourier_cone(f, lam)
    assert abs(est.value - divdiff_recursive(f, lam)) <= 1e-6


# -- phi ---------------------------------------------------------------------


def test_phi_examples():
    rec, quad, _ = phi_eval(Polynomial.monomial(2), 1, [3.0])
    assert rec == pytest.approx(-6j) and quad == pytest.approx(-6j)
    rec, quad, _ = phi_eval(Polynomial.monomial(3), 2, [0.0, 1.0])
    assert rec == pytest.approx(-1j) and quad == pytest.approx(-1j)
    rec, quad, disc = phi_eval(gaussian(), 2, [0.3, 0.7])
    assert disc <= 1e-7


@pytest.mark.parametrize("n", [2, 3, 4])
def test_phi_routes_agree(n):
    lam = np.random.default_rng(n).uniform(-1, 1, n)
    rec, quad, disc = phi_eval(gaussian(b=0.1), n, lam)
    assert disc <= 1e-7 * (1 + abs(rec))


def test_phi_argument_count_checked():
    with pytest.raises(ValueError):
        phi_eval(gaussian(), 2, [0.1, 0.2, 0.3])


def test_phi_inconsistency_is_reported():
    class Broken(Polynomial):
        def derivative(self, x, k):
            out = super().derivative(x, k)
            return out + 1.0 if k == 3 else out

    with pytest.raises(PhiInconsistencyError):
        phi_eval(Broken([0, 0, 0, 1]), 3, [0.0, 0.5, 1.0])
