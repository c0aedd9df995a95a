"""The frequency-truncated fundamental solution K_N as a product of
one-dimensional quadratic Weyl sums, with rational approximation of time,
major-arc classification and dispersive-bound ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lattice import SHARP, CutoffProfile, Signature


def weyl_sum_1d(
    N: float,
    cutoff: CutoffProfile,
    sign: int,
    eps: float,
    t: float,
    x: float,
    support: tuple[int, int] | None = None,
) -> complex:
    """sum_k phi(k/N) exp(2 pi i (x k + sign t eps k^2)).

    ``support`` overrides the summation range (inclusive), e.g. one complete
    residue block; the cutoff weights still apply.
    """
    if support is None:
        R = cutoff.radius(N)
        support = (-R, R)
    k = np.arange(support[0], support[1] + 1, dtype=np.float64)
    w = cutoff.weights(k, N)
    ph = x * k + sign * (t * float(eps)) * (k * k)
    terms = w * np.exp(2j * np.pi * ph)
    return complex(math.fsum(terms.real), math.fsum(terms.imag))


def weyl_sums_batch(N: float, cutoff: CutoffProfile, sign: int, eps: float, t, x) -> np.ndarray:
    """Vectorized weyl_sum_1d over matching arrays t, x."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    R = cutoff.radius(N)
    k = np.arange(-R, R + 1, dtype=np.float64)
    w = cutoff.weights(k, N)
    ph = x[:, None] * k[None, :] + sign * (t * float(eps))[:, None] * (k * k)[None, :]
    return np.exp(2j * np.pi * ph) @ w


def kernel(N: float, sig: Signature, cutoff: CutoffProfile, t: float, x: Sequence[float]) -> complex:
    """K_N(t, x) = sum_k exp(2 pi i (x.k + t H(k))) prod_j phi(k_j / N) by factorization.

    H(k) = -|k|_pm^2, so coordinate j carries the sign -signs[j] on t.
    """
    out = 1.0 + 0j
    for j in range(sig.d):
        out *= weyl_sum_1d(N, cutoff, -int(sig.signs[j]), sig.eps[j], t, x[j])
    return out


def kernel_batch(N, sig: Signature, cutoff: CutoffProfile, t, x) -> np.ndarray:
    """kernel() over arrays t (n,) and x (n, d)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, sig.d)
    out = np.ones(x.shape[0], dtype=np.complex128)
    for j in range(sig.d):
        out *= weyl_sums_batch(N, cutoff, -int(sig.signs[j]), sig.eps[j], t, x[:, j])
    return out


def gauss_sum(a: int, q: int, b: int = 0) -> complex:
    """Complete sum over k mod q of exp(2 pi i (a k^2 + b k) / q), phases reduced exactly."""
    k = np.arange(q, dtype=np.int64)
    r = (a * k * k + b * k) % q
    terms = np.exp(2j * np.pi * r / q)
    return complex(math.fsum(terms.real), math.fsum(terms.imag))


# --- rational approximation ----------------------------------------------


@dataclass(frozen=True)
class RationalApprox:
    a: int
    q: int
    eta: float

    def satisfies_dirichlet(self, N: int) -> bool:
        return math.gcd(self.a, self.q) == 1 and self.q < N and self.eta <= 1.0 / (self.q * N)


def _to_fraction(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def convergents(x: Fraction):
    """Continued-fraction convergents p/q of a nonnegative rational."""
    p0, q0, p1, q1 = 0, 1, 1, 0
    while True:
        a = x.numerator // x.denominator
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        yield p1, q1
        frac = x - a
        if frac == 0:
            return
        x = 1 / frac


def dirichlet_approx(eps, t, N: int) -> RationalApprox:
    """Last convergent a/q of eps*t with q < N; then |eps t - a/q| <= 1/(q N)."""
    if N < 2:
        raise ValueError("N must be at least 2")
    x = _to_fraction(eps) * _to_fraction(t)
    if x < 0:
        raise ValueError("eps * t must be nonnegative")
    best = (0, 1)
    for p, q in convergents(x):
        if q >= N:
            break
        best = (p, q)
    a, q = best
    return RationalApprox(a, q, float(abs(x - Fraction(a, q))))


def classify_major_arc(
    approx: Sequence[RationalApprox], N: float, sigma: float, eps_t: Sequence[float] | None = None
) -> bool:
    """Membership of t in the major arcs: some coordinate j has q_j <= N^{2 sigma}
    and q_j N^2 |eps_j t - a_j/q_j| <= N^{2 sigma}.

    The per-coordinate approximations are tried first; when ``eps_t`` is given
    every coprime a/q with q <= N^{2 sigma} is also searched.
    """
    level = float(N) ** (2 * sigma)
    for ap in approx:
        if ap.q <= level and ap.q * N * N * ap.eta <= level and math.gcd(ap.a, ap.q) == 1:
            return True
    if eps_t is not None:
        for x in eps_t:
            for q in range(1, int(math.floor(level)) + 1):
                a = int(round(x * q))
                if math.gcd(a, q) == 1 and q * N * N * abs(x - a / q) <= level:
                    return True
    return False


def dispersive_bound(approx: Sequence[RationalApprox], N: float) -> float:
    """prod_j N / (sqrt(q_j) (1 + N |eps_j t - a_j/q_j|^{1/2}))."""
    out = 1.0
    for ap in approx:
        out *= N / (math.sqrt(ap.q) * (1.0 + N * math.sqrt(ap.eta)))
    return out


@dataclass
class KernelSample:
    N: int
    t: float
    x: tuple
    value: complex
    approx: tuple
    major_arc: bool
    bound: float
    admissible: bool = True
    sigma: float = 0.1
    ratio: float = field(init=False)

    def __post_init__(self):
        self.ratio = abs(self.value) / self.bound

    @property
    def abs_value(self) -> float:
        return abs(self.value)


def sup_x_weyl(N, cutoff: CutoffProfile, sign: int, eps, t: float, oversample: int = 8) -> tuple[float, complex]:
    """Approximate argmax over x of |weyl_sum_1d| on a fine uniform x grid (via FFT)."""
    R = cutoff.radius(N)
    k = np.arange(-R, R + 1)
    w = cutoff.weights(k, N) * np.exp(2j * np.pi * sign * t * float(eps) * (k * k).astype(np.float64))
    G = oversample * (2 * R + 1)
    a = np.zeros(G, dtype=np.complex128)
    a[np.mod(k, G)] = w
    vals = np.fft.ifft(a) * G
    i = int(np.argmax(np.abs(vals)))
    return i / G, vals[i]


def dispersive_bound_ratio(
    N: int,
    sig: Signature,
    t: float,
    x: Sequence[float] | None = None,
    cutoff: CutoffProfile = SHARP,
    sigma: float = 0.1,
) -> KernelSample:
    """Evaluate |K_N(t, x)| against the dispersive bound at the Dirichlet approximations.

    ``x=None`` picks, coordinate by coordinate, the grid maximiser of the 1-D factor,
    which approximates sup_x |K_N(t, .)|.
    """
    approx = tuple(dirichlet_approx(e, t, N) for e in sig.eps)
    if x is None:
        x = tuple(sup_x_weyl(N, cutoff, -int(sig.signs[j]), sig.eps[j], t)[0] for j in range(sig.d))
    value = kernel(N, sig, cutoff, t, x)
    eps_t = [float(e) * t for e in sig.eps]
    major = classify_major_arc(approx, N, sigma, eps_t)
    admissible = all(ap.satisfies_dirichlet(N) for ap in approx)
    return KernelSample(
        N=N,
        t=t,
        x=tuple(float(v) for v in x),
        value=value,
        approx=approx,
        major_arc=major,
        bound=dispersive_bound(approx, N),
        admissible=admissible,
        sigma=sigma,
    )


def split_kernel(sample: KernelSample) -> tuple[complex, complex]:
    """(major part 1_T K, minor part K - 1_T K)."""
    if sample.major_arc:
        return sample.value, 0j
    return 0j, sample.value


def minor_ratio(sample: KernelSample) -> float:
    d = len(sample.x)
    return abs(split_kernel(sample)[1]) / float(sample.N) ** (d * (1 - sample.sigma))


@dataclass
class KernelSweep:
    samples: list
    max_ratio: dict
    max_minor_ratio: dict
    ratio_slope: float
    minor_slope: float

    def rows(self) -> list[dict]:
        rows = []
        for s in self.samples:
            row = {"N": s.N, "t": s.t}
            for j, xv in enumerate(s.x, 1):
                row[f"x_{j}"] = xv
            for j, ap in enumerate(s.approx, 1):
                row[f"q_{j}"] = ap.q
            for j, ap in enumerate(s.approx, 1):
                row[f"eta_{j}"] = ap.eta
            row.update(
                major_arc=int(s.major_arc),
                abs_value=s.abs_value,
                bound=s.bound,
                ratio=s.ratio,
            )
            rows.append(row)
        return rows


def _log2_slope(Ns, values) -> float:
    Ns = np.asarray(Ns, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if len(Ns) < 2:
        return 0.0
    v = np.maximum(v, np.finfo(float).tiny)
    return float(np.polyfit(np.log2(Ns), np.log2(v), 1)[0])


def kernel_sweep(
    sig: Signature,
    N_list: Sequence[int],
    n_times: int,
    rng: np.random.Generator,
    cutoff: CutoffProfile = SHARP,
    sigma: float = 0.1,
    worst_x: bool = True,
) -> KernelSweep:
    """Max dispersive ratio and max minor-arc ratio per N over random times in [0, 1]."""
    samples = []
    max_ratio, max_minor = {}, {}
    for N in N_list:
        ts = rng.random(n_times)
        xs = rng.random((n_times, sig.d))
        best, best_minor = 0.0, 0.0
        for t, x in zip(ts, xs):
            s = dispersive_bound_ratio(N, sig, float(t), None if worst_x else x, cutoff, sigma)
            samples.append(s)
            if s.admissible:
                best = max(best, s.ratio)
            best_minor = max(best_minor, minor_ratio(s))
        max_ratio[N] = best
        max_minor[N] = best_minor
    Ns = list(N_list)
    return KernelSweep(
        samples,
        max_ratio,
        max_minor,
        _log2_slope(Ns, [max_ratio[N] for N in Ns]),
        _log2_slope(Ns, [max(max_minor[N], 1e-300) for N in Ns]),
    )
