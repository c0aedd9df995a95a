"""Exact free evolution, the hyperbolic Galilean boost and Duhamel quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .field import SpectralField, evaluate
from .lattice import Cube, project


def phase(sym: np.ndarray, t: float) -> np.ndarray:
    return np.exp(-2j * np.pi * t * sym)


def evolve(f: SpectralField, t: float) -> SpectralField:
    """e^{it Delta_pm}: fhat(k) -> exp(-2 pi i t |k|_pm^2) fhat(k)."""
    if t == 0:
        return f
    return f.with_coeffs(f.coeffs * phase(f.symbol(), t))


@dataclass(frozen=True)
class BoostDescriptor:
    """Phase exp(2 pi i (x.r + t H(r))) and evaluation point x + drift."""

    center: tuple
    t: float
    phase_time: float
    drift: np.ndarray

    def phase_at(self, x: np.ndarray) -> np.ndarray:
        r = np.asarray(self.center, dtype=np.float64)
        return np.exp(2j * np.pi * (x @ r + self.t * self.phase_time))


def hamiltonian_symbol(sig, k: Sequence[int]) -> float:
    """H_eps(k) = -|k|_pm^2."""
    return -sig.symbol(k)


def boost_velocity(sig, r: Sequence[int]) -> np.ndarray:
    """The vector (-eps_1 r_1, ..., -eps_j0 r_j0, eps_{j0+1} r_{j0+1}, ..., eps_d r_d)."""
    return -sig.signs * sig.eps_array * np.asarray(r, dtype=np.float64)


def galilean_boost(f: SpectralField, cube: Cube, t: float) -> tuple[SpectralField, BoostDescriptor]:
    """Recenter cube-localised data at the origin.

    Returns ``f0`` with ``f0hat(k) = fhat(k + r)`` and a descriptor such that
    ``evolve(P_C f, t)(x) = exp(2 pi i (x.r + t H(r))) * evolve(P_{C-r} f0, t)(x + 2 t vbar)``.
    """
    if not cube.is_integral:
        raise ValueError("boost centers must be lattice points")
    r = tuple(int(c) for c in cube.center)
    f0 = f.translated(r)
    desc = BoostDescriptor(
        center=r,
        t=t,
        phase_time=hamiltonian_symbol(f.sig, r),
        drift=2.0 * t * boost_velocity(f.sig, r),
    )
    return f0, desc


def boost_sides(f: SpectralField, cube: Cube, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the boost identity at the points x (shape (..., d))."""
    lhs = evaluate(evolve(project(f, cube), t), x)
    f0, desc = galilean_boost(f, cube, t)
    recentered = evolve(project(f0, cube.translated([-c for c in desc.center])), t)
    rhs = desc.phase_at(x) * evaluate(recentered, x + desc.drift)
    return lhs, rhs


def duhamel(forcing: Callable[[float], SpectralField], t: float, n_quad: int) -> SpectralField:
    """Trapezoid approximation of int_0^t e^{i(t - tau) Delta} F(tau) dtau.

    The integrand is moved to the interaction picture w(tau) = e^{-i tau Delta} F(tau),
    integrated on n_quad equispaced nodes, and mapped back by e^{it Delta}.
    """
    if n_quad < 2:
        raise ValueError("n_quad must be at least 2")
    taus = np.linspace(0.0, t, n_quad)
    h = t / (n_quad - 1)
    acc = None
    for i, tau in enumerate(taus):
        w = evolve(forcing(tau), -tau)
        weight = 0.5 if i in (0, n_quad - 1) else 1.0
        acc = w.scaled(weight) if acc is None else acc + w.scaled(weight)
    return evolve(acc.scaled(h), t)


def cumulative_duhamel(sym: np.ndarray, times: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """Duhamel integrals at every node of a uniform time grid.

    ``forcing`` has shape (n_times, *box) holding F(t_i) coefficients; the result
    row i approximates int_0^{t_i} e^{i(t_i - tau) Delta} F(tau) dtau by the
    composite trapezoid rule in the interaction picture.
    """
    n = len(times)
    out = np.zeros_like(forcing)
    if n < 2:
        return out
    acc = np.zeros(forcing.shape[1:], dtype=np.complex128)
    prev = forcing[0] * phase(sym, -times[0])
    for i in range(1, n):
        cur = forcing[i] * phase(sym, -times[i])
        acc = acc + 0.5 * (times[i] - times[i - 1]) * (prev + cur)
        out[i] = acc * phase(sym, times[i])
        prev = cur
    return out
