import itertools
import math

import numpy as np
import pytest

from hnls_lab.field import (
    ResourceCapExceeded,
    SpaceTimeGrid,
    SpectralField,
    UnderResolvedGrid,
    evaluate,
    from_spatial,
    grid_points,
    lp_spacetime_norm,
    sample_spatial,
    sobolev_norm,
)
from hnls_lab.lattice import Signature
from hnls_lab.propagator import evolve


def _random(rng, sig, M):
    shape = (2 * M + 1,) * sig.d
    return SpectralField(sig, (M,) * sig.d, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def l4_resonant_sum(f: SpectralField) -> float:
    """int_0^1 int |e^{itD} f|^4 as a sum over k1 + k2 = k3 + k4 with matching symbols."""
    nz = list(zip(*np.nonzero(f.coeffs)))
    modes = {tuple(int(i) - m for i, m in zip(ix, f.M)): complex(f.coeffs[ix]) for ix in nz}
    sym = {k: f.sig.symbol(k) for k in modes}
    pairs: dict = {}
    for k1, k2 in itertools.product(modes, repeat=2):
        key = (tuple(a + b for a, b in zip(k1, k2)), sym[k1] + sym[k2])
        pairs.setdefault(key, 0j)
        pairs[key] += modes[k1] * modes[k2]
    return sum(abs(v) ** 2 for v in pairs.values())


def test_plancherel_and_round_trip(rng):
    for d in (1, 2, 3):
        sig = Signature(d, d // 2)
        f = _random(rng, sig, 4)
        u = sample_spatial(f, 11)
        assert np.sqrt(np.mean(np.abs(u) ** 2)) == pytest.approx(f.l2_norm(), rel=1e-13)
        g = from_spatial(u, sig, 4)
        assert np.allclose(g.coeffs, f.coeffs, atol=1e-13)


def test_sampling_matches_direct_sum(rng):
    f = _random(rng, Signature(2, 1), 3)
    pts = grid_points(9, 2)
    assert np.allclose(sample_spatial(f, 9), evaluate(f, pts), atol=1e-12)


def test_under_resolved_grid():
    f = SpectralField.zeros(Signature(2, 1), 5)
    with pytest.raises(UnderResolvedGrid):
        sample_spatial(f, 10)


def test_serialization_round_trips(rng, tmp_path):
    f = _random(rng, Signature(3, 1, ("1/2", 1, 1)), 2)
    g = SpectralField.from_json(f.to_json())
    assert g.sig == f.sig and np.array_equal(g.coeffs, f.coeffs)
    blob = f.to_bytes()
    assert len(blob) == 4 * 4 + 8 * 125
    h = SpectralField.from_bytes(f.sig, blob)
    assert np.array_equal(h.coeffs, f.coeffs.astype(np.complex64))
    f.save(tmp_path / "a.field")
    f.save(tmp_path / "a.json")
    assert np.array_equal(SpectralField.load(tmp_path / "a.json").coeffs, f.coeffs)
    assert np.array_equal(SpectralField.load(tmp_path / "a.field", f.sig).coeffs, h.coeffs)
    with pytest.raises(ValueError):
        SpectralField.from_bytes(Signature(2, 1), blob)


def test_box_operations(rng):
    sig = Signature(2, 1)
    f = SpectralField.from_modes(sig, 3, {(1, -2): 2.0, (0, 0): 1j})
    assert f.support_box() == (1, 2)
    assert f.trimmed().M == (1, 2)
    assert f.resized(1).coefficient((1, -2)) == 0
    g = f.translated((1, -2))
    assert g.coefficient((0, 0)) == 2.0 and g.coefficient((-1, 2)) == 1j
    assert (f - f).l2_norm() == 0
    with pytest.raises(ValueError):
        SpectralField.from_modes(sig, 1, {(2, 0): 1.0})


def test_sobolev_norm_single_mode():
    f = SpectralField.from_modes(Signature(3, 1), 2, {(1, 2, 0): 3.0})
    assert sobolev_norm(f, 0.5) == pytest.approx(3.0 * 6**0.25)


def test_l2_norm_is_unitary():
    f = SpectralField.from_modes(Signature(2, 1), 4, {(1, 2): 0.6, (-3, 0): 0.8j})
    r = lp_spacetime_norm(f, 2)
    assert r.value == pytest.approx(1.0, rel=1e-14)
    assert r.exact


def test_l4_matches_resonant_sum():
    sig = Signature(2, 1)
    f = SpectralField.from_modes(sig, 3, {(1, 1): 1.0, (2, 2): 0.5 - 0.5j, (0, 3): 0.25j})
    oracle = l4_resonant_sum(f) ** 0.25
    r = lp_spacetime_norm(f, 4)
    assert r.exact
    assert r.value == pytest.approx(oracle, rel=1e-13)
    # frozen value from the resonant-sum oracle
    assert oracle == pytest.approx(1.3802060830781835, rel=1e-14)


def test_l4_random_box_matches_resonant_sum(rng):
    sig = Signature(2, 0)
    f = _random(rng, sig, 3)
    assert lp_spacetime_norm(f, 4).value == pytest.approx(l4_resonant_sum(f) ** 0.25, rel=1e-12)


def test_custom_evolution_matches_default(rng):
    f = _random(rng, Signature(2, 1), 2)
    grid = SpaceTimeGrid(T=1.0, n_t=64, G=16)
    a = lp_spacetime_norm(f, 6, grid)
    b = lp_spacetime_norm(f, 6, grid, evolution=evolve)
    assert a.value == pytest.approx(b.value, rel=1e-12)
    assert not b.exact


def test_resource_cap_refuses_up_front():
    f = SpectralField.from_modes(Signature(3, 1), 16, {(16, 0, 0): 1.0})
    with pytest.raises(ResourceCapExceeded):
        lp_spacetime_norm(f, 6, max_points=1e3)


def test_parallel_reduction_matches(rng):
    f = _random(rng, Signature(2, 1), 4)
    a = lp_spacetime_norm(f, 6, SpaceTimeGrid(1.0, 200, 32))
    b = lp_spacetime_norm(f, 6, SpaceTimeGrid(1.0, 200, 32), workers=3)
    assert a.value == b.value


def test_sentinel_flags_coarse_time_grid():
    sig = Signature(1, 1, (0.37,))
    # 1 + 1 = 0 + 2 is a non-resonant quadruple, so the L^4 profile oscillates in time
    f = SpectralField.from_modes(sig, 2, {(0,): 1.0, (1,): 1.0, (2,): 1.0})
    coarse = lp_spacetime_norm(f, 4, SpaceTimeGrid(1.0, 4, 9), rtol=1e-6)
    assert not coarse.exact and not coarse.converged
    assert math.isfinite(coarse.refinement_change)
