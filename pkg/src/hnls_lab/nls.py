"""Nonlinear solvers for i u_t + D u + sign |u|^{2m} u = 0 on the torus.

Convention (used everywhere in this module): D has Fourier multiplier
``-2 pi |k|_pm^2``, so the free flow is exactly ``propagator.evolve``, and the
power nonlinearity carries no 2 pi factor. Hence

* linear substep:    uhat(k) -> exp(-2 pi i h |k|_pm^2) uhat(k)
* nonlinear substep: u(x) -> u(x) exp(i sign |u(x)|^{2m} h)
* energy:            1/2 * 2 pi sum_k |k|_pm^2 |uhat(k)|^2 - sign/(2m+2) int |u|^{2m+2}

The plane-wave test pins this normalisation.

Both solvers are pseudo-spectral: the state lives on all G^d frequencies of an
odd grid G = 2 Ms + 1 with Ms = (m+1) M0 for data supported in [-M0, M0]^d.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .field import SpectralField, japanese_bracket, sample_spatial
from .lattice import Signature, critical_index
from .propagator import cumulative_duhamel, phase


@dataclass(frozen=True)
class NlsProblem:
    sig: Signature
    m: int
    sign: int
    u0: SpectralField
    T: float
    s: float | None = None

    def __post_init__(self):
        if self.m < 1 or int(self.m) != self.m:
            raise ValueError("m must be a positive integer")
        if self.sign not in (1, -1, 0):
            raise ValueError("sign must be +1 (focusing), -1 (defocusing) or 0 (linear)")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.s is None:
            object.__setattr__(self, "s", float(critical_index(self.sig.d, self.m).s_c))

    @property
    def s_c(self) -> float:
        return float(critical_index(self.sig.d, self.m).s_c)

    def with_data(self, u0: SpectralField) -> "NlsProblem":
        return NlsProblem(self.sig, self.m, self.sign, u0, self.T, self.s)

    def default_box(self) -> int:
        return (self.m + 1) * max(max(self.u0.support_box()), 1)


class _Grid:
    """FFT-ordered state on the odd grid G = 2 Ms + 1."""

    def __init__(self, sig: Signature, Ms: int):
        self.sig = sig
        self.Ms = Ms
        self.G = 2 * Ms + 1
        self.axes = tuple(range(sig.d))
        self.sym = np.fft.ifftshift(sig.symbol_grid((Ms,) * sig.d))
        self.bracket = np.fft.ifftshift(japanese_bracket((Ms,) * sig.d))

    def coeffs(self, f: SpectralField) -> np.ndarray:
        if max(f.support_box()) > self.Ms:
            raise ValueError("data does not fit the solver grid")
        return np.fft.ifftshift(f.resized((self.Ms,) * self.sig.d).coeffs)

    def field(self, a: np.ndarray) -> SpectralField:
        return SpectralField(self.sig, (self.Ms,) * self.sig.d, np.fft.fftshift(a))

    def to_x(self, a: np.ndarray) -> np.ndarray:
        return sfft.ifftn(a, axes=self.axes, norm="forward")

    def to_k(self, u: np.ndarray) -> np.ndarray:
        return sfft.fftn(u, axes=self.axes, norm="forward")

    def hs(self, a: np.ndarray, s: float) -> float:
        return float(np.sqrt(np.sum(self.bracket**s * (a.real**2 + a.imag**2))))


def mass(f: SpectralField) -> float:
    return math.fsum((np.abs(f.coeffs) ** 2).ravel().tolist())


def hamiltonian(problem: NlsProblem, f: SpectralField, quadrature: str = "exact") -> float:
    """Energy 1/2 * 2 pi sum |k|^2_pm |uhat|^2 - sign/(2m+2) int |u|^{2m+2} dx.

    ``quadrature="exact"`` pads the grid so the potential integral is exact;
    ``"grid"`` uses the field's own 2M+1 grid, which is the energy the
    pseudo-spectral semi-discretisation conserves.
    """
    m = problem.m
    lin = 0.5 * 2 * np.pi * math.fsum((f.symbol() * np.abs(f.coeffs) ** 2).ravel().tolist())
    M = max(f.M)
    if quadrature == "exact":
        G = sfft.next_fast_len((m + 1) * 2 * M + 1)
    elif quadrature == "grid":
        G = 2 * M + 1
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    u = sample_spatial(f, G)
    pot = float(np.mean(np.abs(u) ** (2 * m + 2)))
    return lin - problem.sign * pot / (2 * m + 2)


@dataclass
class SolverRun:
    times: np.ndarray
    samples: list
    mass: np.ndarray
    energy: np.ndarray
    hs_norms: np.ndarray
    manifest: dict = field(default_factory=dict)

    @property
    def final(self) -> SpectralField:
        return self.samples[-1]

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0]) if self.mass[0] else 0.0

    @property
    def energy_drift(self) -> float:
        return float(abs(self.energy[-1] - self.energy[0]))

    def diagnostics_rows(self) -> list[dict]:
        return [
            {"t": float(t), "mass": float(ms), "energy": float(e), "hs_norm": float(h)}
            for t, ms, e, h in zip(self.times, self.mass, self.energy, self.hs_norms)
        ]


def _n_steps(T: float, h: float) -> int:
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * T:
        raise ValueError(f"step {h} does not divide the horizon {T}")
    return n


def split_step(
    problem: NlsProblem,
    h: float,
    Ms: int | None = None,
    store_every: int = 1,
    energy_quadrature: str = "grid",
) -> SolverRun:
    """Strang splitting N(h/2) L(h) N(h/2) on the pseudo-spectral grid."""
    Ms = Ms or problem.default_box()
    g = _Grid(problem.sig, Ms)
    n = _n_steps(problem.T, h)
    a = g.coeffs(problem.u0)
    lin = phase(g.sym, h)
    m, sign = problem.m, problem.sign
    s = problem.s

    def nonlinear(u: np.ndarray, tau: float) -> np.ndarray:
        if sign == 0:
            return u
        return u * np.exp(1j * sign * tau * (u.real**2 + u.imag**2) ** m)

    times, samples, masses, energies, norms = [], [], [], [], []

    def record(t: float, arr: np.ndarray) -> None:
        f = g.field(arr)
        times.append(t)
        samples.append(f)
        masses.append(mass(f))
        energies.append(hamiltonian(problem, f, energy_quadrature))
        norms.append(g.hs(arr, s))

    start = time.monotonic()
    record(0.0, a)
    for i in range(1, n + 1):
        u = nonlinear(g.to_x(a), h / 2)
        a = g.to_k(u) * lin
        a = g.to_k(nonlinear(g.to_x(a), h / 2))
        if i % store_every == 0 or i == n:
            record(i * h, a)
    return SolverRun(
        np.array(times),
        samples,
        np.array(masses),
        np.array(energies),
        np.array(norms),
        manifest={
            "scheme": "strang",
            "h": h,
            "steps": n,
            "G": g.G,
            "m": m,
            "sign": sign,
            "T": problem.T,
            "seconds": time.monotonic() - start,
        },
    )


def plane_wave(sig: Signature, k0: Sequence[int], c: complex, m: int, sign: int, t: float, M: int) -> SpectralField:
    """Closed-form solution from a single mode: c exp(2 pi i (k0.x - t |k0|^2)) exp(i sign |c|^{2m} t)."""
    val = c * np.exp(-2j * np.pi * t * sig.symbol(k0)) * np.exp(1j * sign * abs(c) ** (2 * m) * t)
    return SpectralField.from_modes(sig, M, {tuple(k0): val})


# --- Picard iteration ----------------------------------------------------------


def _power(u: np.ndarray, m: int) -> np.ndarray:
    return (u.real**2 + u.imag**2) ** m * u


def _power_difference(a: np.ndarray, b: np.ndarray, delta: np.ndarray, m: int) -> np.ndarray:
    """|a|^{2m} a - |b|^{2m} b from delta = a - b without cancellation.

    Uses |a|^2 - |b|^2 = Re(delta conj(a + b)) and the geometric factorisation
    of |a|^{2m} - |b|^{2m}.
    """
    aa = a.real**2 + a.imag**2
    bb = b.real**2 + b.imag**2
    diff2 = np.real(delta * np.conj(a + b))  # |a|^2 - |b|^2
    geo = np.zeros_like(aa)
    for j in range(m):
        geo = geo + aa**j * bb ** (m - 1 - j)
    return aa**m * delta + diff2 * geo * b


@dataclass
class ContractionReport:
    distances: list
    ratios: list
    diverged: bool
    amplitude: float

    @property
    def max_ratio_after_first(self) -> float:
        tail = self.ratios[1:]
        return max(tail) if tail else 0.0

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "distances": self.distances,
            "ratios": self.ratios,
            "diverged": self.diverged,
            "in_contraction_regime": (not self.diverged) and self.max_ratio_after_first <= 0.5,
        }


@dataclass
class PicardRun:
    times: np.ndarray
    iterates: list  # list of arrays (n_times, G^d) in FFT order
    first_duhamel: np.ndarray
    report: ContractionReport
    grid: _Grid = field(repr=False)

    def iterate_at(self, n: int, i: int = -1) -> SpectralField:
        return self.grid.field(self.iterates[n][i])


def picard_iterate(problem: NlsProblem, n_iter: int, h: float, Ms: int | None = None) -> PicardRun:
    """Iterates u^{(n+1)} = Gamma(u^{(n)}) on the time grid t_i = i h.

    Gamma(u)(t) = e^{itD} u0 + sign * i int_0^t e^{i(t-tau)D} |u|^{2m} u (tau) dtau,
    with the integral by interaction-picture trapezoid. Successive differences
    follow their own recursion so contraction ratios stay meaningful far
    below the size of the iterates.
    """
    Ms = Ms or problem.default_box()
    g = _Grid(problem.sig, Ms)
    n = _n_steps(problem.T, h)
    times = np.arange(n + 1) * h
    a0 = g.coeffs(problem.u0)
    phases = np.stack([phase(g.sym, t) for t in times])
    free = a0[None] * phases
    m, sign = problem.m, problem.sign
    s_c = problem.s_c
    spatial_axes = tuple(range(1, problem.sig.d + 1))

    def to_x(A):
        return sfft.ifftn(A, axes=spatial_axes, norm="forward")

    def to_k(U):
        return sfft.fftn(U, axes=spatial_axes, norm="forward")

    def duhamel_term(F):
        return 1j * sign * cumulative_duhamel(g.sym, times, F)

    iterates = [free]
    x_prev = to_x(free)
    first = duhamel_term(to_k(_power(x_prev, m)))
    delta = first
    distances, ratios = [], []
    blown_up = False
    # large data is allowed to blow up; that is reported, not raised
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(n_iter):
            dist = max(g.hs(delta[i], s_c) for i in range(len(times)))
            if not math.isfinite(dist) or dist > 1e150:
                blown_up = True
                break
            distances.append(dist)
            if len(distances) > 1:
                prev = distances[-2]
                ratios.append(dist / prev if prev > 0 else 0.0)
            nxt = iterates[-1] + delta
            iterates.append(nxt)
            if it == n_iter - 1:
                break
            x_next = to_x(nxt)
            dx = to_x(delta)
            delta = duhamel_term(to_k(_power_difference(x_next, x_prev, dx, m)))
            x_prev = x_next
    diverged = blown_up or any(
        distances[i] < distances[i + 1] < distances[i + 2] < distances[i + 3]
        for i in range(len(distances) - 3)
    )
    amp = g.hs(a0, s_c)
    return PicardRun(times, iterates, first, ContractionReport(distances, ratios, diverged, amp), g)


def contraction_threshold(
    problem: NlsProblem,
    h: float,
    n_iter: int = 5,
    lo: float = 1e-4,
    hi: float = 10.0,
    steps: int = 30,
) -> float:
    """Largest H^{s_c} amplitude (by bisection in log scale) whose Picard ratios stay <= 1/2."""
    base = problem.u0.scaled(1.0 / _hs(problem.u0, problem.s_c))

    def ok(amp: float) -> bool:
        rep = picard_iterate(problem.with_data(base.scaled(amp)), n_iter, h).report
        return (not rep.diverged) and rep.max_ratio_after_first <= 0.5 and all(
            math.isfinite(d) for d in rep.distances
        )

    if not ok(lo):
        return 0.0
    if ok(hi):
        return hi
    a, b = math.log(lo), math.log(hi)
    for _ in range(steps):
        mid = 0.5 * (a + b)
        if ok(math.exp(mid)):
            a = mid
        else:
            b = mid
    return math.exp(a)


def _hs(f: SpectralField, s: float) -> float:
    w = japanese_bracket(f.M) ** s
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


@dataclass
class InflationReport:
    s: float
    amplitude: float
    growth: float
    times: list
    ratios: list

    def to_dict(self) -> dict:
        return {"s": self.s, "amplitude": self.amplitude, "growth": self.growth}


def inflation_probe(
    sig: Signature,
    m: int,
    s: float,
    amplitude: float,
    profile: SpectralField,
    T: float,
    h: float,
    sign: int = 1,
) -> InflationReport:
    """sup_t ||u(t)||_{H^s} / ||u0||_{H^s} along split_step, data = amplitude * profile / ||profile||_{H^s}."""
    norm = _hs(profile, s)
    u0 = profile.scaled(amplitude / norm) if norm > 0 else profile
    if amplitude == 0:
        return InflationReport(s, amplitude, 1.0, [0.0, T], [1.0, 1.0])
    prob = NlsProblem(sig, m, sign, u0, T, s)
    run = split_step(prob, h)
    r = run.hs_norms / run.hs_norms[0]
    return InflationReport(s, amplitude, float(np.max(r)), run.times.tolist(), r.tolist())
