import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import rand_herm
from specshift.functions import Polynomial, gaussian
from specshift.perturbation import rational
from specshift.spectral import (
    HermitianMatrix,
    NonHermitianError,
    PoleProximityError,
    apply_function,
    eigh,
    jacobi_eigh,
    opnorm,
    resolvent_power,
    unitary_exp,
)


def tau_spec(h):
    h = np.asarray(h)
    return 1e-12 * h.shape[0] * max(opnorm(h), 1.0)


def test_eigh_diagonal():
    dec = eigh(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(dec.eigenvalues, [1.0, 2.0])
    e1, e2 = np.eye(2)
    np.testing.assert_allclose(dec.projections[0], np.outer(e2, e2), atol=1e-14)
    np.testing.assert_allclose(dec.projections[1], np.outer(e1, e1), atol=1e-14)


def test_eigh_pauli_x():
    dec = eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(dec.eigenvalues, [-1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(dec.projections[0], 0.5 * np.array([[1, -1], [-1, 1]]), atol=1e-14)
    np.testing.assert_allclose(dec.projections[1], 0.5 * np.array([[1, 1], [1, 1]]), atol=1e-14)


def test_eigh_degenerate_identity():
    dec = eigh(np.eye(3), cluster_tol=1e-10)
    np.testing.assert_allclose(dec.eigenvalues, [1.0])
    assert list(dec.multiplicities) == [3]
    np.testing.assert_allclose(dec.projections[0], np.eye(3), atol=1e-14)


def test_non_hermitian_rejected_with_asymmetry():
    with pytest.raises(NonHermitianError) as exc:
        HermitianMatrix(np.array([[0.0, 1.0], [0.5, 0.0]]))
    assert exc.value.asymmetry == pytest.approx(0.5)


def test_tiny_asymmetry_is_symmetrized():
    a = np.array([[1.0, 1.0 + 1e-15], [1.0, 2.0]])
    h = HermitianMatrix(a)
    np.testing.assert_array_equal(h.entries, h.entries.conj().T)


def test_empty_and_nonsquare_rejected():
    with pytest.raises(ValueError):
        HermitianMatrix(np.zeros((0, 0)))
    with pytest.raises(ValueError):
        HermitianMatrix(np.zeros((2, 3)))


@pytest.mark.parametrize("d", [1, 2, 3, 7, 16, 33])
def test_jacobi_matches_lapack(rng, d):
    a = rand_herm(rng, d)
    w, q = jacobi_eigh(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-12 * d * opnorm(a))
    np.testing.assert_allclose(q.conj().T @ q, np.eye(d), atol=1e-12 * d)


def test_jacobi_is_deterministic(rng):
    a = rand_herm(rng, 12)
    w1, q1 = jacobi_eigh(a)
    w2, q2 = jacobi_eigh(a.copy())
    np.testing.assert_array_equal(w1, w2)
    np.testing.assert_array_equal(q1, q2)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 9), seed=st.integers(0, 2**31 - 1), deg=st.integers(0, 3))
def test_decomposition_invariants(d, seed, deg):
    rng = np.random.default_rng(seed)
    a = rand_herm(rng, d)
    if deg:
        # force a degenerate cluster
        w, q = np.linalg.eigh(a)
        w[: min(deg, d)] = w[0]
        a = (q * w) @ q.conj().T
    dec = eigh(a)
    tol = tau_spec(a)
    P = dec.projections
    np.testing.assert_allclose(sum(P), np.eye(d), atol=tol)
    for i, pi in enumerate(P):
        np.testing.assert_allclose(pi @ pi, pi, atol=tol)
        for pj in P[i + 1 :]:
            np.testing.assert_allclose(pi @ pj, 0, atol=tol)
    recon = sum(l * p for l, p in zip(dec.eigenvalues, P))
    assert opnorm(recon - a) <= tol * max(opnorm(a), 1.0) * 10
    assert np.all(np.diff(dec.eigenvalues) > 0)


def test_apply_function_examples():
    np.testing.assert_allclose(np.asarray(apply_function(Polynomial([0, 0, 1]), np.diag([1.0, 2.0]))),
                               np.diag([1.0, 4.0]), atol=1e-14)
    np.testing.assert_allclose(np.asarray(apply_function(gaussian(), np.diag([0.0, 1.0]))),
                               np.diag([1.0, np.exp(-1.0)]), atol=1e-15)


def test_apply_function_rejects_complex_valued():
    with pytest.raises(ValueError, match="real-valued"):
        apply_function(rational(1, 1j), np.diag([0.0, 1.0]))


def test_apply_function_pole_proximity():
    f = rational(1, 1.0 + 1e-12j)
    f = type(f)(list(f.terms) + [type(f.terms[0])(1.0, 1.0 - 1e-12j, 1)])
    assert f.real_valued
    with pytest.raises(PoleProximityError):
        apply_function(f, np.diag([0.0, 1.0]))


def test_apply_function_commutes_and_homomorphism(rng):
    h = rand_herm(rng, 6)
    p = Polynomial([1.0, -2.0, 0.5])
    q = Polynomial([0.0, 1.0, 0.0, 1.0])
    pq = Polynomial(np.polynomial.polynomial.polymul(p.coefficients, q.coefficients))
    fp = np.asarray(apply_function(p, h))
    fq = np.asarray(apply_function(q, h))
    tol = 1e-12 * 6 * opnorm(h) ** 5
    np.testing.assert_allclose(np.asarray(apply_function(pq, h)), fp @ fq, atol=tol)
    np.testing.assert_allclose(fp @ h, h @ fp, atol=tol)


def test_resolvent_examples():
    assert resolvent_power(np.zeros((1, 1)), 1j, 2)[0, 0] == pytest.approx(-1.0)
    np.testing.assert_allclose(
        resolvent_power(np.diag([1.0, -1.0]), 2j, 1),
        np.diag([1 / (2j - 1), 1 / (2j + 1)]),
        atol=1e-15,
    )


def test_resolvent_matches_repeated_solve(rng):
    h = rand_herm(rng, 5)
    z = 0.3 + 0.7j
    m = 3
    r = np.linalg.solve(z * np.eye(5) - h, np.eye(5))
    expect = r @ r @ r
    got = resolvent_power(h, z, m)
    assert np.linalg.norm(got - expect) <= 1e-10 * np.linalg.norm(expect)
    assert opnorm(got) <= abs(z.imag) ** (-m) * (1 + 1e-12)
    # R^m (zI - H)^m = I
    zh = z * np.eye(5) - h
    np.testing.assert_allclose(got @ np.linalg.matrix_power(zh, m), np.eye(5),
                               atol=m * 1e-12 * np.linalg.cond(zh) ** m)


def test_resolvent_rejects_bad_inputs():
    with pytest.raises(ValueError):
        resolvent_power(np.eye(2), 1.0, 1)
    with pytest.raises(ValueError):
        resolvent_power(np.eye(2), 1j, 0)


def test_unitary_exp_examples(rng):
    np.testing.assert_allclose(unitary_exp(rand_herm(rng, 3), 0.0), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(unitary_exp(np.array([[np.pi]]), 1.0), [[-1.0]], atol=1e-15)


def test_unitary_exp_properties(rng):
    h = rand_herm(rng, 4)
    u = unitary_exp(h, 0.7)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(u, scipy.linalg.expm(0.7j * h), atol=1e-12)
    np.testing.assert_allclose(unitary_exp(h, 0.3) @ unitary_exp(h, 0.4), u, atol=1e-12)


def test_unitary_exp_lipschitz(rng):
    h = rand_herm(rng, 4)
    hn = opnorm(h)
    for a, b in rng.uniform(-3, 3, (100, 2)):
        lhs = opnorm(unitary_exp(h, a) - unitary_exp(h, b))
        assert lhs <= hn * abs(b - a) * (1 + 1e-10) + 1e-13
