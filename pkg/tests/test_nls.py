import numpy as np
import pytest

from hnls_lab.field import SpectralField, from_spatial, sample_spatial, sobolev_norm
from hnls_lab.lattice import Signature
from hnls_lab.nls import (
    NlsProblem,
    contraction_threshold,
    hamiltonian,
    inflation_probe,
    mass,
    picard_iterate,
    plane_wave,
    split_step,
)
from hnls_lab.propagator import duhamel, evolve


def smooth_data(sig, M=3, seed=1, l2=1.0):
    rng = np.random.default_rng(seed)
    shape = (2 * M + 1,) * sig.d
    k2 = sum(np.meshgrid(*([np.arange(-M, M + 1) ** 2] * sig.d), indexing="ij"))
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.exp(-0.3 * k2)
    f = SpectralField(sig, (M,) * sig.d, c)
    return f.scaled(l2 / f.l2_norm())


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("d,j0,k0", [(2, 1, (2, -1)), (3, 1, (1, 2, -1)), (2, 0, (1, 1))])
def test_plane_wave(sign, d, j0, k0):
    sig = Signature(d, j0)
    u0 = SpectralField.from_modes(sig, 2, {k0: 0.7 - 0.2j})
    run = split_step(NlsProblem(sig, 1, sign, u0, 0.1), 0.01)
    exact = plane_wave(sig, k0, 0.7 - 0.2j, 1, sign, 0.1, run.final.M[0])
    assert np.max(np.abs(run.final.coeffs - exact.coeffs)) <= 1e-10


def test_plane_wave_quintic():
    sig = Signature(1, 1)
    u0 = SpectralField.from_modes(sig, 1, {(1,): 0.9})
    run = split_step(NlsProblem(sig, 2, 1, u0, 0.1), 0.005)
    exact = plane_wave(sig, (1,), 0.9, 2, 1, 0.1, run.final.M[0])
    assert np.max(np.abs(run.final.coeffs - exact.coeffs)) <= 1e-10


@pytest.mark.parametrize("sign", [1, -1])
def test_mass_conservation(sign):
    sig = Signature(2, 1)
    run = split_step(NlsProblem(sig, 1, sign, smooth_data(sig), 1.0), 0.01)
    assert run.mass_drift <= 1e-10
    assert np.all(np.diff(run.times) > 0)


def test_hamiltonian_closed_forms():
    sig = Signature(2, 0)
    prob = NlsProblem(sig, 1, 1, SpectralField.zeros(sig, 2), 0.1)
    assert hamiltonian(prob, SpectralField.zeros(sig, 2)) == 0
    c, k = 0.8, (1, 2)
    f = SpectralField.from_modes(sig, 2, {k: c})
    for sign in (1, -1):
        p = NlsProblem(sig, 1, sign, f, 0.1)
        expect = 0.5 * 2 * np.pi * sig.symbol(k) * c**2 - sign * c**4 / 4
        assert hamiltonian(p, f) == pytest.approx(expect, rel=1e-13)
        assert hamiltonian(p, f, "grid") == pytest.approx(expect, rel=1e-13)
    with pytest.raises(ValueError):
        hamiltonian(prob, f, "bogus")


def test_exact_and_grid_energy_differ_only_by_aliasing():
    sig = Signature(2, 1)
    f = smooth_data(sig, M=2).resized(6)
    p = NlsProblem(sig, 1, 1, f, 0.1)
    assert hamiltonian(p, f) == pytest.approx(hamiltonian(p, f, "grid"), rel=1e-12)


def test_second_order_convergence():
    sig = Signature(2, 1)
    prob = NlsProblem(sig, 1, 1, smooth_data(sig), 1.0)
    ref = split_step(prob, 1 / 800, store_every=10**6).final
    runs = [split_step(prob, h) for h in (1 / 50, 1 / 100, 1 / 200)]
    errs = [(r.final - ref).l2_norm() for r in runs]
    drift = [np.max(np.abs(r.energy - r.energy[0])) for r in runs]
    for a, b in zip(errs, errs[1:]):
        assert 3 <= a / b <= 5
    for a, b in zip(drift, drift[1:]):
        assert 3 <= a / b <= 5


def test_gauge_covariance():
    sig = Signature(2, 1)
    u0 = smooth_data(sig)
    theta = np.exp(0.7j)
    a = split_step(NlsProblem(sig, 1, 1, u0, 0.2), 0.02).final
    b = split_step(NlsProblem(sig, 1, 1, u0.scaled(theta), 0.2), 0.02).final
    assert np.allclose(b.coeffs, a.coeffs * theta, atol=1e-14)
    pa = picard_iterate(NlsProblem(sig, 1, 1, u0.scaled(0.1), 0.1), 3, 0.01)
    pb = picard_iterate(NlsProblem(sig, 1, 1, u0.scaled(0.1 * theta), 0.1), 3, 0.01)
    assert np.allclose(pb.iterates[-1], pa.iterates[-1] * theta, atol=1e-14)


def test_linear_time_reversal():
    sig = Signature(3, 2, (1, "1/2", 1))
    u0 = smooth_data(sig, M=2)
    fwd = split_step(NlsProblem(sig, 1, 0, u0, 0.7), 0.07).final
    back = evolve(fwd, -0.7)
    assert np.max(np.abs(back.resized(2).coeffs - u0.coeffs)) <= 1e-12


def test_step_must_divide_horizon():
    sig = Signature(1, 1)
    with pytest.raises(ValueError):
        split_step(NlsProblem(sig, 1, 1, smooth_data(sig), 0.1), 0.03)
    with pytest.raises(ValueError):
        NlsProblem(sig, 0, 1, smooth_data(sig), 0.1)


def test_picard_zero_data():
    sig = Signature(3, 1)
    pr = picard_iterate(NlsProblem(sig, 1, 1, SpectralField.zeros(sig, 1), 0.1), 4, 0.02)
    assert all(np.all(it == 0) for it in pr.iterates)
    assert pr.report.distances == [0.0] * 4 and not pr.report.diverged


def test_picard_first_iterate_identity():
    sig = Signature(3, 1)
    u0 = smooth_data(sig, M=2, l2=0.3)
    pr = picard_iterate(NlsProblem(sig, 1, 1, u0, 0.1), 3, 0.01)
    assert np.array_equal(pr.iterates[1], pr.iterates[0] + pr.first_duhamel)
    # independent path: duhamel() on fields, nonlinearity sampled on the solver grid
    g = pr.grid

    def forcing(tau):
        u = sample_spatial(evolve(u0, tau), g.G)
        return from_spatial(np.abs(u) ** 2 * u, sig, g.Ms)

    ref = duhamel(forcing, 0.1, 11).scaled(1j)
    assert np.allclose(g.field(pr.first_duhamel[-1]).coeffs, ref.coeffs, atol=1e-15)


def _h_half_data(sig, amp):
    u = smooth_data(sig, M=2)
    return u.scaled(amp / sobolev_norm(u, 0.5))


def test_contraction_monotone_in_amplitude():
    sig = Signature(3, 1)
    worst = []
    for lam in (1.0, 0.5, 0.25):
        rep = picard_iterate(NlsProblem(sig, 1, 1, _h_half_data(sig, 0.3 * lam), 0.1), 5, 0.01).report
        worst.append(rep.max_ratio_after_first)
    assert worst[0] >= worst[1] >= worst[2]


def test_large_data_leaves_contraction_regime():
    sig = Signature(3, 1)
    rep = picard_iterate(NlsProblem(sig, 1, 1, _h_half_data(sig, 30.0), 0.1), 6, 0.01).report
    assert rep.diverged or rep.max_ratio_after_first > 0.5
    assert not rep.to_dict()["in_contraction_regime"]


def test_contraction_threshold_bisection():
    sig = Signature(3, 1)
    prob = NlsProblem(sig, 1, 1, _h_half_data(sig, 1.0), 0.1)
    amp = contraction_threshold(prob, 0.01, n_iter=4, steps=12)
    assert 0 < amp < 10
    rep = picard_iterate(prob.with_data(_h_half_data(sig, 0.9 * amp)), 4, 0.01).report
    assert rep.max_ratio_after_first <= 0.5


def test_inflation_probe():
    sig = Signature(3, 1)
    prof = smooth_data(sig, M=2)
    assert inflation_probe(sig, 1, 0.5, 0.0, prof, 0.1, 0.01).growth == 1.0
    rep = inflation_probe(sig, 1, 0.5, 0.05, prof, 0.1, 0.01)
    assert 1.0 <= rep.growth <= 2.0
    rough = SpectralField.from_modes(sig, 3, {(1, 0, 0): 1.0, (0, 3, 0): 1.0})
    r = inflation_probe(sig, 1, 0.2, 2.0, rough, 0.1, 0.01)
    assert np.isfinite(r.growth)


def test_mass_helper():
    f = SpectralField.from_modes(Signature(1, 1), 2, {(1,): 3.0, (-2,): 4j})
    assert mass(f) == 25.0
