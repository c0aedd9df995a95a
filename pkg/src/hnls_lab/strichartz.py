"""Empirical Strichartz harness: norm sweeps over dyadic N with log-log
slope fits, bilinear product sweeps and multilinear integral ratios.

Everything is measured on free evolutions of L^2-normalised data, so the
harness can corroborate upper bounds and detect growth, never refute them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .field import (
    NormResult,
    ResourceCapExceeded,
    SpaceTimeGrid,
    SpectralField,
    lp_spacetime_norm,
    sobolev_norm,
)
from .lattice import Signature, critical_index

FAMILIES = ("dirichlet", "gaussian", "cube", "diagonal")


def predict_exponent(sig: Signature, p) -> Fraction | float:
    """Exponent of N in the Strichartz constant K_{p,d,j0}(N).

    d/2 - (d+2)/p for p >= p*, (1/2 - 1/p) delta for 2 <= p < p*. Exact
    (Fraction) for integer or Fraction p.
    """
    exact = not isinstance(p, float)
    pv = Fraction(p) if exact else p
    if pv < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    d, dl = sig.d, sig.delta()
    p_star = Fraction(2 * (d + 2 - dl), d - dl)
    if not exact:
        p_star = float(p_star)
    if pv >= p_star:
        return Fraction(d, 2) - (d + 2) / pv if exact else d / 2 - (d + 2) / pv
    return (Fraction(1, 2) - 1 / pv) * dl if exact else (0.5 - 1 / pv) * dl


def supercritical_exponent(d: int, p) -> Fraction:
    return Fraction(d, 2) - Fraction(d + 2) / Fraction(p)


def subcritical_exponent(delta_: int, p) -> Fraction:
    return (Fraction(1, 2) - 1 / Fraction(p)) * delta_


# --- data families ----------------------------------------------------------


def dyadic_cube_range(N: int) -> tuple[int, int]:
    """Per-axis range [floor(N/2), N] of the dyadic cube at scale N."""
    return (N // 2, N)


def make_data(
    sig: Signature,
    family: str,
    N: int,
    rng: np.random.Generator | None = None,
) -> SpectralField:
    """L^2-normalised initial data at frequency scale N."""
    d = sig.d
    if family == "dirichlet":
        f = SpectralField(sig, (N,) * d, np.ones((2 * N + 1,) * d))
    elif family == "gaussian":
        if rng is None:
            raise ValueError("gaussian data needs a generator")
        shape = (2 * N + 1,) * d
        f = SpectralField(sig, (N,) * d, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    elif family == "cube":
        lo, hi = dyadic_cube_range(N)
        c = np.zeros((2 * N + 1,) * d)
        c[(slice(N + lo, N + hi + 1),) * d] = 1.0
        f = SpectralField(sig, (N,) * d, c)
    elif family == "diagonal":
        modes = {(n,) * d: 1.0 for n in range(-N, N + 1)}
        f = SpectralField.from_modes(sig, (N,) * d, modes)
    else:
        raise ValueError(f"unknown data family {family!r}")
    return f.scaled(1.0 / f.l2_norm())


# --- fits ---------------------------------------------------------------------


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    residual: float
    predicted: float
    tolerance: tuple = (0.15, 0.15)

    @property
    def deviation(self) -> float:
        return self.slope - self.predicted

    @property
    def verdict(self) -> bool:
        lo, hi = self.tolerance
        return -lo <= self.deviation <= hi

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "predicted": self.predicted,
            "tolerance": list(self.tolerance),
            "verdict": self.verdict,
        }


def fit_loglog(Ns: Sequence[float], values: Sequence[float], predicted: float = 0.0, tolerance=(0.15, 0.15)) -> ScalingFit:
    """Least-squares slope of log2(value) against log2(N); needs at least three points."""
    if len(Ns) < 3:
        raise ValueError("a scaling fit needs at least three points")
    x = np.log2(np.asarray(Ns, dtype=np.float64))
    y = np.log2(np.asarray(values, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return ScalingFit(
        float(slope),
        float(intercept),
        float(np.sqrt(np.mean(resid**2))),
        float(predicted),
        tuple(float(t) for t in tolerance),
    )


# --- Strichartz sweeps ----------------------------------------------------------


@dataclass
class GridPolicy:
    """Resolution and resource controls for a sweep."""

    T: float = 1.0
    n_t: int | None = None
    oversample: float | None = None
    rtol: float = 1e-6
    max_points: float = 4e10
    max_seconds: float | None = None
    workers: int = 1


@dataclass
class SweepEntry:
    N: int
    norm: float
    grid: dict


@dataclass
class NormSweep:
    sig: Signature
    p: float
    family: str
    entries: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def Ns(self) -> list:
        return [e.N for e in self.entries]

    @property
    def norms(self) -> list:
        return [e.norm for e in self.entries]

    def rows(self) -> list[dict]:
        return [
            {
                "N": e.N,
                "norm": e.norm,
                "n_t": e.grid["n_t"],
                "G": e.grid["G"],
                "exact": int(e.grid["exact"]),
                "refinement_change": e.grid["refinement_change"],
            }
            for e in self.entries
        ]


class SweepError(RuntimeError):
    pass


def _check_dyadic(N_list: Sequence[int]) -> None:
    for a, b in zip(N_list, N_list[1:]):
        if b <= a:
            raise ValueError("N values must be strictly increasing")
    for N in N_list:
        if N < 1 or N & (N - 1):
            raise ValueError(f"N = {N} is not a power of two")


def strichartz_sweep(
    sig: Signature,
    p: float,
    family: str,
    N_list: Sequence[int],
    policy: GridPolicy | None = None,
    seed: int = 0,
    tolerance=(0.15, 0.15),
    data: Callable[[int], SpectralField] | None = None,
) -> tuple[NormSweep, ScalingFit]:
    """Measure ||e^{it Delta} f_N||_{L^p_{t,x}([0,T] x T^d)} for normalised data f_N and fit the slope."""
    _check_dyadic(N_list)
    if len(N_list) < 3:
        raise ValueError("a sweep needs at least three N values")
    policy = policy or GridPolicy()
    sweep = NormSweep(sig, p, family)
    for i, N in enumerate(N_list):
        if data is not None:
            f = data(N)
            f = f.scaled(1.0 / f.l2_norm())
        else:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            f = make_data(sig, family, N, rng)
        grid = SpaceTimeGrid.for_field(f, p, T=policy.T, oversample=policy.oversample, n_t=policy.n_t)
        res: NormResult = lp_spacetime_norm(
            f,
            p,
            grid,
            workers=policy.workers,
            rtol=policy.rtol,
            max_points=policy.max_points,
            max_seconds=policy.max_seconds,
        )
        if not res.converged:
            sweep.failures.append({"N": N, **res.to_dict()})
            continue
        sweep.entries.append(SweepEntry(N, res.value, res.to_dict()))
    if len(sweep.entries) < 3:
        raise SweepError(f"only {len(sweep.entries)} grid-converged points; cannot fit")
    fit = fit_loglog(sweep.Ns, sweep.norms, float(predict_exponent(sig, p)), tolerance)
    return sweep, fit


# --- bilinear ----------------------------------------------------------------


def band_data(sig: Signature, N: int, rng: np.random.Generator) -> SpectralField:
    """Normalised Gaussian data on the sharp dyadic shell N/2 < |k|_inf <= N (|k|_inf <= 1 at N = 1)."""
    d = sig.d
    shape = (2 * N + 1,) * d
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k = np.abs(np.arange(-N, N + 1))
    kinf = np.zeros(shape, dtype=np.int64)
    for j in range(d):
        sh = [1] * d
        sh[j] = 2 * N + 1
        kinf = np.maximum(kinf, k.reshape(sh))
    if N > 1:
        c[kinf <= N // 2] = 0.0
    f = SpectralField(sig, (N,) * d, c)
    return f.scaled(1.0 / f.l2_norm())


def _grid_values(f: SpectralField, G: int, times: np.ndarray) -> np.ndarray:
    """u(t_i, x) on the G^d grid for a batch of times."""
    d = f.d
    sym = f.symbol()
    nz = np.nonzero(f.coeffs)
    coeffs = f.coeffs[nz]
    s = sym[nz]
    idx = tuple(np.mod(ix - m, G) for ix, m in zip(nz, f.M))
    a = np.zeros((len(times),) + (G,) * d, dtype=np.complex128)
    a[(slice(None),) + idx] = coeffs[None, :] * np.exp(-2j * np.pi * np.outer(times, s))
    return sfft.ifftn(a, axes=tuple(range(1, d + 1)), norm="forward")


def bilinear_norms(
    f1: SpectralField,
    f2_list: Sequence[SpectralField],
    n_t: int = 64,
    T: float = 1.0,
    batch: int | None = None,
) -> tuple[list[float], list[float]]:
    """||u1 u2||_{L^2_{t,x}} for each u2, plus the half-density refinement change."""
    d = f1.d
    M = max(f1.support_box()) + max(max(f.support_box()) for f in f2_list)
    G = sfft.next_fast_len(2 * M + 1)
    f1 = f1.trimmed()
    f2_list = [f.trimmed() for f in f2_list]
    times = np.arange(n_t) * (T / n_t)
    prof = np.zeros((len(f2_list), n_t))
    axes = tuple(range(1, d + 1))
    if batch is None:
        batch = max(1, int(2**20 // G**d))
    for i0 in range(0, n_t, batch):
        ts = times[i0 : i0 + batch]
        u1 = _grid_values(f1, G, ts)
        a1 = u1.real**2 + u1.imag**2
        for j, f2 in enumerate(f2_list):
            u2 = _grid_values(f2, G, ts)
            prof[j, i0 : i0 + len(ts)] = np.mean(a1 * (u2.real**2 + u2.imag**2), axis=axes)
    norms, changes = [], []
    for row in prof:
        full = math.sqrt(math.fsum(row.tolist()) * T / n_t)
        half = math.sqrt(math.fsum(row[::2].tolist()) * T / len(row[::2]))
        norms.append(full)
        changes.append(abs(full - half) / full if full > 0 else 0.0)
    return norms, changes


@dataclass
class BilinearSweep:
    sig: Signature
    N1: int
    N2_list: list
    seeds: list
    norms: np.ndarray  # (n_seeds, n_N2)
    changes: np.ndarray
    fit: ScalingFit

    @property
    def mean_norms(self) -> np.ndarray:
        return self.norms.mean(axis=0)

    def rows(self) -> list[dict]:
        rows = []
        for i, seed in enumerate(self.seeds):
            for j, N2 in enumerate(self.N2_list):
                rows.append(
                    {
                        "N1": self.N1,
                        "N2": N2,
                        "seed": seed,
                        "norm": float(self.norms[i, j]),
                        "refinement_change": float(self.changes[i, j]),
                    }
                )
        return rows


def bilinear_sweep(
    sig: Signature,
    N1: int,
    N2_list: Sequence[int],
    seeds: Sequence[int],
    n_t: int = 64,
    T: float = 1.0,
    predicted: float = 0.5,
    max_slope: float = 0.7,
) -> BilinearSweep:
    """Slope of the seed-averaged ||P_{N1} u1 P_{N2} u2||_{L^2_{t,x}} against N2 at fixed N1."""
    _check_dyadic(N2_list)
    if max(N2_list) > N1:
        raise ValueError("N2 must not exceed N1")
    norms = np.zeros((len(seeds), len(N2_list)))
    changes = np.zeros_like(norms)
    for i, seed in enumerate(seeds):
        rng1 = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        f1 = band_data(sig, N1, rng1)
        f2s = [
            band_data(sig, N2, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, N2))))
            for N2 in N2_list
        ]
        n, c = bilinear_norms(f1, f2s, n_t=n_t, T=T)
        norms[i] = n
        changes[i] = c
    fit = fit_loglog(N2_list, norms.mean(axis=0), predicted, (math.inf, max_slope - predicted))
    return BilinearSweep(sig, N1, list(N2_list), list(seeds), norms, changes, fit)


# --- multilinear -------------------------------------------------------------


@dataclass(frozen=True)
class ProductData:
    """Separable data prod_j a_j(k_j): one 1-D coefficient vector per axis on [-M, M]."""

    sig: Signature
    vectors: tuple

    @property
    def M(self) -> tuple:
        return tuple((len(v) - 1) // 2 for v in self.vectors)

    def to_field(self) -> SpectralField:
        out = np.ones(())
        for v in self.vectors:
            out = np.multiply.outer(out, v)
        return SpectralField(self.sig, self.M, out)

    @classmethod
    def cube(cls, sig: Signature, lo: int, hi: int) -> "ProductData":
        M = max(abs(lo), abs(hi))
        v = np.zeros(2 * M + 1)
        v[M + lo : M + hi + 1] = 1.0
        return cls(sig, tuple(v.copy() for _ in range(sig.d)))

    @classmethod
    def shell(cls, sig: Signature, N: int) -> "ProductData":
        """Ones on N/2 < |k_j| <= N for every axis (|k_j| <= 1 at N = 1)."""
        k = np.abs(np.arange(-N, N + 1))
        v = ((k <= 1) if N == 1 else (k > N // 2)).astype(np.float64)
        return cls(sig, tuple(v.copy() for _ in range(sig.d)))


def _axis_values(v: np.ndarray, s: float, G: int, times: np.ndarray, conj: bool) -> np.ndarray:
    M = (len(v) - 1) // 2
    k = np.arange(-M, M + 1)
    a = np.zeros((len(times), G), dtype=np.complex128)
    a[:, np.mod(k, G)] = v[None, :] * np.exp(-2j * np.pi * np.outer(times, s * k * k))
    u = np.fft.ifft(a, axis=1) * G
    return np.conj(u) if conj else u


def multilinear_integral_separable(
    us: Sequence[ProductData],
    v: ProductData,
    pattern: Sequence[bool],
    T: float = 1.0,
    n_t: int | None = None,
    batch: int = 2048,
) -> complex:
    """int_0^T int prod_i u~_i conj(v) dx dt for separable data, one axis at a time."""
    sig = v.sig
    fields = list(us) + [v]
    conj = list(pattern) + [True]
    Ms = [max(f.M) for f in fields]
    G = sfft.next_fast_len(sum(Ms) + 1)
    if n_t is None:
        n_t = _exact_nt(sig, Ms, T)
    times = np.arange(n_t) * (T / n_t)
    weights = sig.signs * sig.eps_array
    vals = np.empty(n_t, dtype=np.complex128)
    for i0 in range(0, n_t, batch):
        ts = times[i0 : i0 + batch]
        prod_t = np.ones(len(ts), dtype=np.complex128)
        for j in range(sig.d):
            acc = np.ones((len(ts), G), dtype=np.complex128)
            for f, c in zip(fields, conj):
                acc *= _axis_values(f.vectors[j], weights[j], G, ts, c)
            prod_t *= acc.mean(axis=1)
        vals[i0 : i0 + len(ts)] = prod_t
    return complex(math.fsum(vals.real.tolist()), math.fsum(vals.imag.tolist())) * T / n_t


def _exact_nt(sig: Signature, Ms: Sequence[int], T: float) -> int:
    if not (sig.is_rational and all(e.denominator == 1 for e in sig.eps) and float(T).is_integer()):
        raise ValueError("exact time resolution needs integer weights and integer T; pass n_t")
    top = sum(int(e) for e in sig.eps) * sum(m * m for m in Ms)
    return int(top * T) + 1


def multilinear_integral(
    us: Sequence[SpectralField],
    v: SpectralField,
    pattern: Sequence[bool],
    T: float = 1.0,
    n_t: int | None = None,
) -> complex:
    """Same integral for general fields, sampled on the full d-dimensional grid."""
    fields = [f.trimmed() for f in list(us) + [v]]
    conj = list(pattern) + [True]
    Ms = [max(f.M) for f in fields]
    G = sfft.next_fast_len(sum(Ms) + 1)
    sig = v.sig
    if n_t is None:
        n_t = _exact_nt(sig, Ms, T)
    times = np.arange(n_t) * (T / n_t)
    axes = tuple(range(1, sig.d + 1))
    vals = np.empty(n_t, dtype=np.complex128)
    batch = max(1, int(2**20 // G**sig.d))
    for i0 in range(0, n_t, batch):
        ts = times[i0 : i0 + batch]
        acc = np.ones((len(ts),) + (G,) * sig.d, dtype=np.complex128)
        for f, c in zip(fields, conj):
            u = _grid_values(f, G, ts)
            acc *= np.conj(u) if c else u
        vals[i0 : i0 + len(ts)] = acc.mean(axis=axes)
    return complex(math.fsum(vals.real.tolist()), math.fsum(vals.imag.tolist())) * T / n_t


def multilinear_denominator(us: Sequence[SpectralField], v: SpectralField, s: float, s_low: float) -> float:
    """||v||_{H^{-s}} ||u_1||_{H^s} prod_{i >= 2} ||u_i||_{H^{s_low}}."""
    out = sobolev_norm(v, -s) * sobolev_norm(us[0], s)
    for u in us[1:]:
        out *= sobolev_norm(u, s_low)
    return out


@dataclass
class MultilinearRow:
    profile: tuple
    scale: int
    pattern: tuple
    integral: complex
    denominator: float

    @property
    def ratio(self) -> float:
        return abs(self.integral) / self.denominator


def multilinear_ratio(
    sig: Signature,
    m: int,
    s: float,
    profiles: dict,
    rescales: int = 2,
    patterns: Sequence[Sequence[bool]] | None = None,
    T: float = 1.0,
    n_t: int | None = None,
) -> list[MultilinearRow]:
    """Ratio table for dyadic shell data at profiles (N0, N1, ..., N_{2m+1}).

    Shells are sign-symmetric on each axis: one-signed cubes make the resonant
    count depend on the conjugation pattern rather than on the scales.

    Each profile is also evaluated after doubling every scale ``rescales`` times.
    """
    n_u = 2 * m + 1
    s_c = float(critical_index(sig.d, m).s_c)
    if patterns is None:
        patterns = list(itertools.product((False, True), repeat=n_u))
    rows = []
    for name, prof in profiles.items():
        if len(prof) != n_u + 1:
            raise ValueError(f"profile {name} needs {n_u + 1} scales")
        for r in range(rescales + 1):
            scales = tuple(n * 2**r for n in prof)
            data = [ProductData.shell(sig, n) for n in scales]
            v, us = data[0], data[1:]
            den = multilinear_denominator([u.to_field() for u in us], v.to_field(), s, s_c)
            for pat in patterns:
                val = multilinear_integral_separable(us, v, pat, T=T, n_t=n_t)
                rows.append(MultilinearRow(name, r, tuple(bool(b) for b in pat), val, den))
    return rows


def ratio_variation(rows: Sequence[MultilinearRow]) -> dict:
    """max/min ratio across rescales, per (profile, pattern)."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row.profile, row.pattern), []).append(row.ratio)
    return {k: (max(v) / min(v) if min(v) > 0 else math.inf) for k, v in groups.items()}
