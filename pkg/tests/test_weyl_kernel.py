import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hnls_lab.lattice import SHARP, SMOOTH, Signature
from hnls_lab.weyl_kernel import (
    RationalApprox,
    classify_major_arc,
    convergents,
    dirichlet_approx,
    dispersive_bound,
    dispersive_bound_ratio,
    gauss_sum,
    kernel,
    kernel_batch,
    kernel_sweep,
    minor_ratio,
    split_kernel,
    weyl_sum_1d,
)


def brute_kernel(N, sig, cutoff, t, x):
    """Direct d-dimensional lattice sum of exp(2 pi i (x.k - t |k|_pm^2)) prod phi(k_j/N)."""
    R = cutoff.radius(N)
    total = 0j
    for k in itertools.product(range(-R, R + 1), repeat=sig.d):
        w = float(np.prod([cutoff.weights(np.array([kj]), N)[0] for kj in k]))
        if w:
            total += w * np.exp(2j * np.pi * (np.dot(x, k) - t * sig.symbol(k)))
    return total


def test_kernel_at_origin():
    assert kernel(8, Signature(2, 1), SHARP, 0.0, (0.0, 0.0)) == pytest.approx(17**2)


@pytest.mark.parametrize("cutoff", [SHARP, SMOOTH])
def test_separable_matches_brute_force(cutoff):
    sig = Signature(2, 1, (1, "1/2"))
    for t, x in [(0.123, (0.3, 0.71)), (0.5, (0.0, 0.25))]:
        a = kernel(4, sig, cutoff, t, x)
        b = brute_kernel(4, sig, cutoff, t, np.array(x))
        assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


def test_batch_matches_scalar(rng):
    sig = Signature(3, 2)
    t = rng.random(5)
    x = rng.random((5, 3))
    batch = kernel_batch(6, sig, SMOOTH, t, x)
    for i in range(5):
        assert batch[i] == pytest.approx(kernel(6, sig, SMOOTH, t[i], x[i]), rel=1e-12)


def test_weyl_sum_support_override():
    full = weyl_sum_1d(5, SHARP, 1, 1, 0.3, 0.1)
    half = weyl_sum_1d(5, SHARP, 1, 1, 0.3, 0.1, support=(0, 5))
    rest = weyl_sum_1d(5, SHARP, 1, 1, 0.3, 0.1, support=(-5, -1))
    assert full == pytest.approx(half + rest, abs=1e-12)


def test_gauss_sum_closed_form():
    for q in (3, 5, 7, 11, 13, 101):
        expect = math.sqrt(q) if q % 4 == 1 else 1j * math.sqrt(q)
        assert gauss_sum(1, q) == pytest.approx(expect, abs=1e-10)
    assert gauss_sum(1, 4) == pytest.approx(2 + 2j)
    assert abs(gauss_sum(1, 2)) == pytest.approx(0, abs=1e-12)


def test_convergents_of_golden_ratio_are_fibonacci():
    phi = Fraction(832040, 514229)
    qs = [q for _, q in convergents(phi)][:10]
    assert qs == [1, 1, 2, 3, 5, 8, 13, 21, 34, 55]


def test_dirichlet_examples():
    assert dirichlet_approx(1, Fraction(1, 3), 10) == RationalApprox(1, 3, 0.0)
    ap = dirichlet_approx(1, 1 / 3, 10)
    assert (ap.a, ap.q) == (1, 3) and ap.eta < 1e-16
    ap = dirichlet_approx("1/2", Fraction(3, 7), 100)
    assert (ap.a, ap.q, ap.eta) == (3, 14, 0.0)
    with pytest.raises(ValueError):
        dirichlet_approx(1, 0.5, 1)


def test_dirichlet_bound_on_many_samples(rng):
    for N, t in zip(rng.integers(2, 5000, 10_000), rng.random(10_000)):
        ap = dirichlet_approx(1, float(t), int(N))
        assert ap.satisfies_dirichlet(int(N)), (N, t, ap)


@given(st.fractions(min_value=0, max_value=3, max_denominator=10**6), st.integers(2, 10**4))
@settings(max_examples=300, deadline=None)
def test_dirichlet_property(x, N):
    ap = dirichlet_approx(1, x, N)
    assert ap.q < N and math.gcd(ap.a, ap.q) == 1
    assert Fraction(abs(x - Fraction(ap.a, ap.q))) <= Fraction(1, ap.q * N)


def test_major_arc_classification():
    N = 64
    assert classify_major_arc([dirichlet_approx(1, 0.0, N)], N, 0.1)
    assert classify_major_arc([dirichlet_approx(1, Fraction(1, 2), N)], N, 0.1)
    far = 0.5 + 3.0 / N**2 * N ** (2 * 0.1)
    assert not classify_major_arc([dirichlet_approx(1, far, N)], N, 0.1, [far])
    # a good approximation is found even when the Dirichlet convergent has a large q
    near = 0.5 + 1e-9
    assert classify_major_arc([RationalApprox(1, 61, 0.01)], N, 0.1, [near])


def test_dispersive_bound_formula():
    aps = [RationalApprox(1, 4, 0.0), RationalApprox(0, 1, 1 / 64**2)]
    assert dispersive_bound(aps, 64) == pytest.approx((64 / 2) * (64 / 2))


@pytest.mark.parametrize("j0", [0, 1, 2])
def test_modulus_independent_of_signs(rng, j0):
    t = rng.random(200)
    x = rng.random((200, 2))
    a = np.abs(kernel_batch(32, Signature(2, j0), SHARP, t, x))
    b = np.abs(kernel_batch(32, Signature(2, 0), SHARP, t, x))
    mask = b > 1e-6
    assert np.max(np.abs(a[mask] - b[mask]) / b[mask]) <= 1e-10


def test_sample_and_split():
    s = dispersive_bound_ratio(16, Signature(1, 1), 0.0, (0.0,))
    assert s.major_arc and s.abs_value == pytest.approx(33)
    assert split_kernel(s) == (s.value, 0j) and minor_ratio(s) == 0
    assert s.ratio == pytest.approx(33 / 16)


def test_sweep_is_seed_deterministic():
    sig = Signature(1, 1)
    a = kernel_sweep(sig, [16, 32], 20, np.random.default_rng(4))
    b = kernel_sweep(sig, [16, 32], 20, np.random.default_rng(4))
    assert a.max_ratio == b.max_ratio
    assert [r["ratio"] for r in a.rows()] == [r["ratio"] for r in b.rows()]
    assert set(a.rows()[0]) >= {"N", "t", "x_1", "q_1", "eta_1", "major_arc", "abs_value", "bound", "ratio"}
