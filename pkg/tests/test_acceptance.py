"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from specshift import divdiff as dd
from specshift.ensembles import gue, random_hermitian, trial_rngs
from specshift.functions import gaussian
from specshift.ideals import interpolation_check, quasinorm_property_suite
from specshift.moi import (
    DividedDifferenceSymbol,
    MoiRequest,
    PhiSymbol,
    basel_constant,
    lattice_weight_sum,
    moi_dyadic,
    moi_spectral,
    quasi_banach_scan,
)
from specshift.perturbation import (
    PerturbationPair,
    cyclic_identity_check,
    estimate_scan,
    gateaux_derivative_fd,
    gateaux_derivative_moi,
    krein_residual,
    krein_ssf,
    rational,
    resolvent_derivative,
    taylor_remainder,
)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail
    return emit


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def test_divided_difference_routes(report):
    t0 = time.perf_counter()
    rngs = trial_rngs(1, 200, tag=101)
    worst = {"closed": 0.0, "simplex": 0.0, "cone": 0.0}
    for i, rng in enumerate(rngs):
        n = 1 + i % 4
        lam = rng.uniform(-1.5, 1.5, n + 1)
        z = complex(rng.uniform(-1, 1), rng.choice([-1, 1]) * rng.uniform(0.5, 1.5))
        r = rational(int(rng.integers(1, 4)), z)
        ref = complex(dd.divdiff_recursive(r, lam))
        worst["closed"] = max(worst["closed"], abs(dd.divdiff_rational_function(r, lam) - ref) / abs(ref))
        worst["simplex"] = max(worst["simplex"], abs(dd.divdiff_simplex(r, lam).value - ref) / abs(ref))
        g = gaussian(a=rng.uniform(0.5, 1.5), b=rng.uniform(-0.5, 0.5))
        ref = complex(dd.divdiff_recursive(g, lam))
        scale = max(abs(ref), 1e-3)
        worst["simplex"] = max(worst["simplex"], abs(dd.divdiff_simplex(g, lam).value - ref) / scale)
        worst["cone"] = max(worst["cone"], abs(dd.divdiff_fourier_cone(g, lam, m=10, T=16).value - ref) / scale)
    dt = time.perf_counter() - t0
    ok = worst["closed"] <= 1e-10 and worst["simplex"] <= 1e-6 and worst["cone"] <= 1e-4 and dt <= 120
    report(1, "divided-difference routes", ok,
           f"closed {worst['closed']:.1e}<=1e-10, simplex {worst['simplex']:.1e}<=1e-6, "
           f"cone {worst['cone']:.1e}<=1e-4, {dt:.1f}s<=120s")


def test_dyadic_moi_convergence(report):
    t0 = time.perf_counter()
    f = gaussian()
    details, ok = [], True
    for n, d in ((1, 8), (2, 8)):
        rng = trial_rngs(2, 1, tag=102 + n)[0]
        h = gue(d, rng)
        xs = [random_hermitian(d, rng, 1 / math.sqrt(d)) for _ in range(n)]
        req = MoiRequest(DividedDifferenceSymbol(f, n), h, xs, method="dyadic", m_min=1, m_max=12)
        oracle = moi_spectral(req).value
        res = moi_dyadic(req, reference=oracle, strict=False)
        final = res.errors[-1] / np.linalg.norm(oracle)
        tail = np.array(res.errors[len(res.errors) // 2:])
        decreasing = bool(np.all(np.diff(tail) < 0))
        ok &= res.order >= 0.9 and final <= 1e-3 and decreasing
        details.append(f"n={n}: order {res.order:.2f}>=0.9, rel err {final:.1e}<=1e-3")
    dt = time.perf_counter() - t0
    ok &= dt <= 300
    report(2, "dyadic MOI convergence", ok, "; ".join(details) + f", {dt:.1f}s<=300s")


def test_quasi_banach_rates(report):
    details, ok = [], True
    for p in (0.8, 0.9):
        res = quasi_banach_scan(p, n=1)
        pred = res["predicted_decay"]
        dev = abs(res["decay_exponent"] - pred) / abs(pred)
        ok &= dev <= 0.25
        details.append(f"p={p}: {res['decay_exponent']:.3f} vs {pred:.3f} ({dev:.1%}<=25%)")
    report(3, "p<1 decay exponents", ok, "; ".join(details))


def test_derivative_triple_agreement(report):
    worst_fd = worst_res = 0.0
    for i, rng in enumerate(trial_rngs(3, 50, tag=104)):
        n = 1 + i % 3
        d = 4 + i % 7
        z = complex(rng.uniform(-1, 1), rng.choice([-1, 1]) * rng.uniform(1.0, 2.0))
        m = int(rng.integers(1, 3))
        f = rational(m, z)
        pair = PerturbationPair(gue(d, rng), random_hermitian(d, rng, 0.5 / math.sqrt(d)))
        a = np.asarray(gateaux_derivative_moi(f, pair, n))
        b = np.asarray(gateaux_derivative_fd(f, pair, n))
        c = resolvent_derivative(m, z, pair, n)
        worst_fd = max(worst_fd, rel(a, b), rel(c, b))
        worst_res = max(worst_res, rel(a, c))
    ok = worst_fd <= 1e-5 and worst_res <= 1e-6
    report(4, "derivative triple agreement", ok,
           f"fd {worst_fd:.1e}<=1e-5, resolvent {worst_res:.1e}<=1e-6")


def test_krein_identity(report):
    f = gaussian()
    worst_res = worst_int = 0.0
    for i, rng in enumerate(trial_rngs(4, 100, tag=105)):
        d = 5 + (i * 7) % 46
        pair = PerturbationPair(gue(d, rng), random_hermitian(d, rng, 1 / math.sqrt(d)))
        worst_res = max(worst_res, krein_residual(f, pair, relative=True))
        tr = float(np.trace(np.asarray(pair.V)).real)
        worst_int = max(worst_int, abs(krein_ssf(pair).integral() - tr) / max(1.0, abs(tr)))
    ok = worst_res <= 1e-8 and worst_int <= 1e-10
    report(5, "Krein trace identity", ok,
           f"residual {worst_res:.1e}<=1e-8, integral vs trace {worst_int:.1e}<=1e-10")


def test_cyclic_reduction(report):
    f = gaussian()
    worst = 0.0
    for i, rng in enumerate(trial_rngs(5, 50, tag=106)):
        n = 1 + i % 3
        d = 2 + i % 5
        pair = PerturbationPair(gue(d, rng), random_hermitian(d, rng, 1 / math.sqrt(d)))
        worst = max(worst, cyclic_identity_check(f, pair, n))
    report(6, "cyclic reduction", worst <= 1e-9, f"residual {worst:.1e}<=1e-9")


def test_taylor_remainder_scaling(report):
    f = gaussian()
    rng = trial_rngs(6, 1, tag=107)[0]
    pair = PerturbationPair(gue(6, rng), random_hermitian(6, rng, 1 / math.sqrt(6)))
    details, ok = [], True
    for n in (1, 2, 3):
        s = [0.2 / 2**k for k in range(4)]
        norms = [np.linalg.norm(np.asarray(taylor_remainder(f, pair.scaled(x), n)), 2) for x in s]
        ratios = [a / b for a, b in zip(norms, norms[1:])]
        dev = max(abs(r / 2**n - 1) for r in ratios)
        ok &= dev <= 0.25
        details.append(f"n={n}: ratios {', '.join(f'{r:.2f}' for r in ratios)} vs {2**n}")
    report(7, "Taylor remainder scaling", ok, "; ".join(details))


def test_quasinorm_suite(report):
    res = quasinorm_property_suite(p=0.5, dim=4, trials=1000, seed=0, rtol=1e-12)
    ok = res.count == 0 and all(t == 1000 for t in res.trials.values())
    report(8, "quasi-norm suite", ok, f"{res.count} violations in {res.trials}")


@pytest.mark.slow
def test_estimate_stability(report):
    rep = estimate_scan(gaussian(), 2, dims=(8, 16, 32, 64), trials=50, seed=0)
    gt, gp = rep.growth("trace"), rep.growth("phi")
    report(9, "estimate stability", gt <= 2 and gp <= 2,
           f"trace growth {gt:.2f}<=2, phi growth {gp:.2f}<=2 over dims 8..64")


def test_interpolation(report):
    f = gaussian()

    def binary(symbol):
        def make(d, rng):
            h = gue(d, rng)
            return lambda x, y: moi_spectral(MoiRequest(symbol, h, [x, y])).value
        return make

    dims = (4, 8, 16, 32)
    a = interpolation_check(binary(DividedDifferenceSymbol(f, 2)), (2.0, 2.0, 1.0), dims, trials=20)
    b = interpolation_check(binary(PhiSymbol(f, 3)), (2.0, 2.0, 1.0), dims, trials=20)
    ok = a.growth <= 2 and b.growth <= 2
    report(10, "interpolation weak-type ratio", ok,
           f"T_f[2] growth {a.growth:.2f}<=2, T_phi growth {b.growth:.2f}<=2 over dims 4..32")


def test_tail_constant(report):
    target = math.pi**2 / 6
    c = basel_constant()
    bounds = [lattice_weight_sum(n, m) for n in (0, 1, 2) for m in (0, 2)]
    ok = abs(c - target) <= 1e-6 and max(bounds) <= target * (1 + 1e-7)
    report(11, "tail constant", ok,
           f"{c:.12f} vs {target:.12f} (|diff| {abs(c - target):.1e}<=1e-6), "
           f"lattice sums <= pi^2/6: max {max(bounds):.6f}")
