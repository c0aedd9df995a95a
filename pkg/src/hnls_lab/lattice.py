"""Frequency-lattice geometry: signatures, the signed quadratic symbol,
admissibility arithmetic, cutoff profiles and Fourier projections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .field import SpectralField

Number = int | float | Fraction


def _coerce_weight(value) -> Fraction | float:
    if isinstance(value, bool):
        raise TypeError("anisotropy weight must be numeric")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return float(value)


@dataclass(frozen=True)
class Signature:
    """Torus geometry for the symbol ``sum_{j<=j0} eps_j k_j^2 - sum_{j>j0} eps_j k_j^2``.

    Weights given as ints, Fractions or strings like ``"1/2"`` are kept exact;
    floats are kept as floats and disable exact time-periodicity.
    """

    d: int
    j0: int
    eps: tuple = ()

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not 0 <= self.j0 <= self.d:
            raise ValueError(f"j0 must lie in [0, {self.d}], got {self.j0}")
        eps = tuple(self.eps) if len(self.eps) else (1,) * self.d
        eps = tuple(_coerce_weight(e) for e in eps)
        if len(eps) != self.d:
            raise ValueError(f"expected {self.d} weights, got {len(eps)}")
        for e in eps:
            if not 0 < e <= 1:
                raise ValueError(f"anisotropy weights must lie in (0, 1], got {e}")
        object.__setattr__(self, "eps", eps)

    @property
    def signs(self) -> np.ndarray:
        """+1 on the first j0 coordinates, -1 on the rest."""
        return np.array([1] * self.j0 + [-1] * (self.d - self.j0), dtype=np.int64)

    @property
    def eps_array(self) -> np.ndarray:
        return np.array([float(e) for e in self.eps])

    @property
    def is_rational(self) -> bool:
        return all(isinstance(e, Fraction) for e in self.eps)

    @property
    def is_elliptic(self) -> bool:
        return self.delta() == 0

    def delta(self) -> int:
        return min(self.j0, self.d - self.j0)

    def reflected(self) -> "Signature":
        """Signature with j0 -> d - j0 and the weight vector reversed."""
        return Signature(self.d, self.d - self.j0, tuple(reversed(self.eps)))

    def symbol(self, k: Sequence[int]) -> float:
        return float(self.symbol_exact(k)) if self.is_rational else _symbol_float(self, k)

    def symbol_exact(self, k: Sequence[int]) -> Fraction:
        if not self.is_rational:
            raise ValueError("exact symbol needs rational weights")
        _check_dim(self, k)
        return sum(
            (s * e * int(kj) ** 2 for s, e, kj in zip(self.signs.tolist(), self.eps, k)),
            Fraction(0),
        )

    def symbol_grid(self, M: Sequence[int]) -> np.ndarray:
        """Symbol values on the box prod_j [-M_j, M_j], as a float array."""
        out = np.zeros(tuple(2 * m + 1 for m in M))
        for j, (s, e, m) in enumerate(zip(self.signs, self.eps_array, M)):
            shape = [1] * self.d
            shape[j] = 2 * m + 1
            k = np.arange(-m, m + 1, dtype=np.float64)
            out = out + (s * e * k * k).reshape(shape)
        return out

    def to_dict(self) -> dict:
        return {"d": self.d, "j0": self.j0, "eps": [_weight_json(e) for e in self.eps]}

    @classmethod
    def from_dict(cls, data: dict) -> "Signature":
        eps = data.get("eps") or ()
        return cls(int(data["d"]), int(data["j0"]), tuple(eps))


def _weight_json(e):
    if isinstance(e, Fraction):
        return e.numerator if e.denominator == 1 else f"{e.numerator}/{e.denominator}"
    return e


def _check_dim(sig: Signature, k: Sequence[int]) -> None:
    if len(k) != sig.d:
        raise ValueError(f"lattice point has {len(k)} components, signature has d={sig.d}")


def _symbol_float(sig: Signature, k: Sequence[int]) -> float:
    _check_dim(sig, k)
    return float(sum(s * e * float(kj) ** 2 for s, e, kj in zip(sig.signs, sig.eps_array, k)))


def symbol(sig: Signature, k: Sequence[int]) -> float:
    """Signed quadratic form |k|_pm^2; equals -H_eps(k)."""
    return sig.symbol(k)


def delta(sig: Signature) -> int:
    return sig.delta()


def admissible_threshold(sig: Signature) -> Fraction:
    """Strict lower bound p* = 2(d + 2 - delta) / (d - delta) for admissible p."""
    return threshold_for(sig.d, sig.delta())


def threshold_for(d: int, delta_: int) -> Fraction:
    if not 0 <= delta_ <= d // 2:
        raise ValueError(f"delta must lie in [0, d/2], got {delta_}")
    return Fraction(2 * (d + 2 - delta_), d - delta_)


def worst_case_threshold(d: int) -> Fraction:
    """Threshold at the most hyperbolic split: 2 + 8/d for even d, 2 + 8/(d+1) for odd d."""
    return threshold_for(d, d // 2)


def is_admissible(sig: Signature, p) -> bool:
    if isinstance(p, float):
        return p > float(admissible_threshold(sig))
    return Fraction(p) > admissible_threshold(sig)


@dataclass(frozen=True)
class CriticalIndex:
    s_c: Fraction
    p_dm: int


def critical_index(d: int, m: int) -> CriticalIndex:
    """Critical Sobolev index d/2 - 1/m and the companion exponent m(d+2)."""
    if d < 1 or m < 1:
        raise ValueError("need d >= 1 and m >= 1")
    return CriticalIndex(Fraction(d, 2) - Fraction(1, m), m * (d + 2))


# --- cutoff profiles -------------------------------------------------------


def bump(x):
    """Even taper: 1 on [-1, 1], exp(1 - 1/(1 - (|x|-1)^2)) on 1 < |x| < 2, 0 beyond."""
    a = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(a)
    out[a <= 1.0] = 1.0
    mid = (a > 1.0) & (a < 2.0)
    y = a[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - y * y))
    return out


def sharp(x):
    a = np.abs(np.asarray(x, dtype=np.float64))
    return (a <= 1.0).astype(np.float64)


@dataclass(frozen=True)
class CutoffProfile:
    kind: str = "smooth"
    profile: Callable = field(default=bump, compare=False)

    def __post_init__(self):
        if self.kind not in ("sharp", "smooth"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if self.kind == "sharp":
            object.__setattr__(self, "profile", sharp)

    def __call__(self, x):
        return self.profile(x)

    def radius(self, N: float) -> int:
        """Largest |k| with a possibly nonzero weight phi(k/N)."""
        return int(math.floor(N)) if self.kind == "sharp" else int(math.ceil(2 * N)) - 1

    def weights(self, k: np.ndarray, N: float) -> np.ndarray:
        return self.profile(np.asarray(k, dtype=np.float64) / N)


SHARP = CutoffProfile("sharp")
SMOOTH = CutoffProfile("smooth")


def _axes(M: Sequence[int]) -> list[np.ndarray]:
    return [np.arange(-m, m + 1) for m in M]


def _outer_product(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


@dataclass(frozen=True)
class LowPass:
    """P_{<=N}: symbol prod_j phi(k_j / N)."""

    N: float
    cutoff: CutoffProfile = SMOOTH

    def multiplier(self, M: Sequence[int]) -> np.ndarray:
        return _outer_product([self.cutoff.weights(k, self.N) for k in _axes(M)])


@dataclass(frozen=True)
class Band:
    """Dyadic piece P_N = P_{<=N} - P_{<=N/2} for N >= 2; P_1 is P_{<=1}."""

    N: float
    cutoff: CutoffProfile = SMOOTH

    def multiplier(self, M: Sequence[int]) -> np.ndarray:
        outer = LowPass(self.N, self.cutoff).multiplier(M)
        if self.N <= 1:
            return outer
        return outer - LowPass(self.N / 2, self.cutoff).multiplier(M)


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube {k : |k_j - center_j| <= half_side}; side length 2 * half_side."""

    center: tuple
    half_side: Fraction

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(Fraction(c) for c in self.center))
        object.__setattr__(self, "half_side", Fraction(self.half_side))
        if self.half_side <= 0:
            raise ValueError("half_side must be positive")

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def is_integral(self) -> bool:
        return all(c.denominator == 1 for c in self.center)

    def translated(self, shift: Sequence) -> "Cube":
        return Cube(tuple(c + Fraction(s) for c, s in zip(self.center, shift)), self.half_side)

    def contains(self, k: Sequence[int]) -> bool:
        return all(abs(int(kj) - c) <= self.half_side for kj, c in zip(k, self.center))

    def axis_masks(self, M: Sequence[int]) -> list[np.ndarray]:
        # exact integer comparison |k L - c L| <= h L with a common denominator L
        masks = []
        for c, k in zip(self.center, _axes(M)):
            den = math.lcm(c.denominator, self.half_side.denominator)
            cn = int(c * den)
            hn = int(self.half_side * den)
            masks.append(np.abs(k.astype(np.int64) * den - cn) <= hn)
        return masks

    def multiplier(self, M: Sequence[int]) -> np.ndarray:
        if len(M) != self.d:
            raise ValueError("cube dimension does not match the field")
        return _outer_product([m.astype(np.float64) for m in self.axis_masks(M)])

    def integer_range(self) -> list[tuple[int, int]]:
        """Per-axis inclusive integer range covered by the cube."""
        return [
            (math.ceil(c - self.half_side), math.floor(c + self.half_side)) for c in self.center
        ]


def project(f: "SpectralField", selector) -> "SpectralField":
    """Coefficient-wise multiplication by a selector symbol (LowPass, Band or Cube)."""
    return f.with_coeffs(f.coeffs * selector.multiplier(f.M))
