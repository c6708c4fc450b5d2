"""Seeded random matrix ensembles and deterministic trial parallelism."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import unitary_group

__all__ = [
    "trial_rngs",
    "gue",
    "haar_unitary",
    "random_hermitian",
    "extremal_profile",
    "worker_count",
    "parallel_map",
]


def trial_rngs(seed, trials, tag=0):
    """One independent generator per trial, keyed by ``(seed, tag, index)``.

    A trial's stream depends only on its own key, so the order or thread in
    which trials run cannot change their results.
    """
    return [
        np.random.default_rng(np.random.SeedSequence([int(seed), int(tag), i]))
        for i in range(trials)
    ]


def gue(d, rng):
    """GUE matrix normalised so the spectrum fills roughly ``[-2, 2]``."""
    g = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2.0)
    return (g + g.conj().T) / np.sqrt(2.0 * d)


def haar_unitary(d, rng):
    if d == 1:
        return np.exp(2j * np.pi * rng.uniform()).reshape(1, 1)
    return unitary_group.rvs(d, random_state=rng)


def random_hermitian(d, rng, scale=1.0):
    """Hermitian matrix with i.i.d. complex Gaussian entries of size ``scale``."""
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (g + g.conj().T) / 2.0


def extremal_profile(d, n, rng):
    """Hermitian ``U diag(+-(k+1)^(-1/n)) U*`` with Haar ``U`` and random signs.

    Its singular values ``(k+1)^(-1/n)`` give weak-Schatten(n) norm exactly 1.
    """
    mu = np.arange(1, d + 1, dtype=float) ** (-1.0 / n)
    signs = rng.choice([-1.0, 1.0], size=d)
    u = haar_unitary(d, rng)
    v = (u * (signs * mu)) @ u.conj().T
    return (v + v.conj().T) / 2.0


def worker_count():
    """Thread cap from ``SPECSHIFT_THREADS`` (default: CPU count)."""
    env = os.environ.get("SPECSHIFT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"SPECSHIFT_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """``[fn(x) for x in items]`` on a thread pool; results keep input order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
