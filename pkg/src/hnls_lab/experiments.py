"""One executor per experiment kind. Executors are pure: they return tables,
a JSON-able summary and optional field checkpoints; the runner does all I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.fft as sfft

from . import config as C
from .field import SpaceTimeGrid, SpectralField, grid_points, sobolev_norm
from .lattice import SHARP, SMOOTH, Cube, Signature, critical_index, threshold_for, worst_case_threshold
from .nls import NlsProblem, contraction_threshold, inflation_probe, picard_iterate, split_step
from .propagator import boost_sides
from .strichartz import (
    GridPolicy,
    bilinear_sweep,
    make_data,
    multilinear_ratio,
    predict_exponent,
    ratio_variation,
    strichartz_sweep,
)
from .weyl_kernel import kernel_sweep


@dataclass
class ExperimentResult:
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    passed: bool = True
    fields: dict = field(default_factory=dict)


def task_seed(root: int, *key: int) -> int:
    """Counter-based child seed: the 64-bit state of SeedSequence(root, spawn_key=key)."""
    return int(np.random.SeedSequence(root, spawn_key=key).generate_state(1, np.uint64)[0])


def task_rng(root: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(root, spawn_key=key))


def build_data(spec: C.DataSpec, sig: Signature, rng: np.random.Generator) -> SpectralField:
    d = sig.d
    if spec.family == "modes":
        M = max(max(abs(v) for v in k) for k, _, _ in spec.modes)
        f = SpectralField.from_modes(sig, M, {tuple(k): complex(re, im) for k, re, im in spec.modes})
    else:
        M = spec.M
        shape = (2 * M + 1,) * d
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        if spec.decay:
            k2 = sum(np.meshgrid(*([np.arange(-M, M + 1) ** 2] * d), indexing="ij"))
            c = c * np.exp(-spec.decay * k2)
        f = SpectralField(sig, (M,) * d, c)
    if spec.norm_s is not None:
        n = sobolev_norm(f, spec.norm_s)
        f = f.scaled(spec.norm_value / n) if n > 0 else f
    return f


def _fraction_str(x) -> str:
    return str(Fraction(x)) if isinstance(x, (Fraction, int)) else repr(float(x))


# --- resource planning -------------------------------------------------------


def planned_points(exp, seed: int) -> list[int]:
    """Space-time sample counts the experiment will need, computed before running."""
    if isinstance(exp, C.StrichartzExp):
        sigs = [exp.signature.build()] + ([exp.compare_with.build()] if exp.compare_with else [])
        out = []
        for sig in sigs:
            for i, N in enumerate(exp.N_list):
                f = make_data(sig, exp.family, N, task_rng(seed, i))
                g = SpaceTimeGrid.for_field(f.trimmed(), exp.p, T=exp.T, oversample=exp.oversample, n_t=exp.n_t)
                out.append(g.points(sig.d))
        return out
    if isinstance(exp, C.BilinearExp):
        d = exp.signature.d
        G = sfft.next_fast_len(2 * (exp.N1 + max(exp.N2_list)) + 1)
        return [G**d * exp.n_t]
    if isinstance(exp, (C.SolveExp, C.PicardExp, C.InflationExp)):
        d = exp.signature.d
        M = exp.data.M if exp.data.family == "gaussian" else max(max(abs(v) for v in k) for k, _, _ in exp.data.modes)
        G = 2 * (exp.m + 1) * max(M, 1) + 1
        steps = int(round(exp.T / exp.h))
        if isinstance(exp, C.SolveExp):
            steps *= 16 * 2**exp.halvings
        return [G**d * steps]
    return [0]


# --- executors ---------------------------------------------------------------


def run_strichartz(exp: C.StrichartzExp, seed: int, limits: C.Limits) -> ExperimentResult:
    policy = GridPolicy(
        T=exp.T,
        n_t=exp.n_t,
        oversample=exp.oversample,
        rtol=exp.rtol,
        max_points=limits.max_points,
        max_seconds=limits.max_seconds,
        workers=limits.workers,
    )
    res = ExperimentResult()
    sig = exp.signature.build()
    sweep, fit = strichartz_sweep(sig, exp.p, exp.family, exp.N_list, policy, seed, exp.tolerance)
    res.tables["norms"] = sweep.rows()
    res.summary = {
        "signature": sig.to_dict(),
        "p": exp.p,
        "family": exp.family,
        "predicted_exact": _fraction_str(predict_exponent(sig, Fraction(exp.p).limit_denominator(10**6))),
        "fit": fit.to_dict(),
        "failures": sweep.failures,
    }
    res.passed = fit.verdict
    if exp.compare_with is not None:
        other = exp.compare_with.build()
        sw2, fit2 = strichartz_sweep(other, exp.p, exp.family, exp.N_list, policy, seed, exp.tolerance)
        res.tables["norms_compare"] = sw2.rows()
        gap = fit.slope - fit2.slope
        res.summary["compare"] = {"signature": other.to_dict(), "fit": fit2.to_dict(), "slope_gap": gap}
        if exp.min_gap is not None:
            res.summary["compare"]["min_gap"] = exp.min_gap
            res.passed = res.passed and gap >= exp.min_gap
    return res


def run_bilinear(exp: C.BilinearExp, seed: int, limits: C.Limits) -> ExperimentResult:
    sig = exp.signature.build()
    seeds = [task_seed(seed, i) for i in range(exp.seeds)]
    sw = bilinear_sweep(sig, exp.N1, exp.N2_list, seeds, n_t=exp.n_t, T=exp.T, predicted=exp.predicted, max_slope=exp.max_slope)
    rows = sw.rows()
    for r in rows:
        r["seed"] = str(r["seed"])
    return ExperimentResult(
        tables={"products": rows},
        summary={
            "signature": sig.to_dict(),
            "N1": exp.N1,
            "mean_norms": sw.mean_norms.tolist(),
            "max_refinement_change": float(sw.changes.max()),
            "fit": sw.fit.to_dict(),
            "max_slope": exp.max_slope,
        },
        passed=sw.fit.slope <= exp.max_slope,
    )


def run_multilinear(exp: C.MultilinearExp, seed: int, limits: C.Limits) -> ExperimentResult:
    sig = exp.signature.build()
    n_u = 2 * exp.m + 1
    patterns = None if exp.patterns == "all" else [(False,) * n_u]
    profiles = {k: tuple(v) for k, v in exp.profiles.items()}
    rows = multilinear_ratio(sig, exp.m, exp.s, profiles, exp.rescales, patterns, T=exp.T)
    var = ratio_variation(rows)
    table = [
        {
            "profile": r.profile,
            "scale": r.scale,
            "pattern": "".join("c" if b else "u" for b in r.pattern),
            "integral_re": r.integral.real,
            "integral_im": r.integral.imag,
            "denominator": r.denominator,
            "ratio": r.ratio,
        }
        for r in rows
    ]
    per_profile = {}
    for (name, pat), v in var.items():
        per_profile[name] = max(per_profile.get(name, 0.0), v)
    return ExperimentResult(
        tables={"ratios": table},
        summary={
            "signature": sig.to_dict(),
            "s": exp.s,
            "m": exp.m,
            "max_variation": per_profile,
            "threshold": exp.max_variation,
        },
        passed=all(v < exp.max_variation for v in var.values()),
    )


def run_kernel(exp: C.KernelExp, seed: int, limits: C.Limits) -> ExperimentResult:
    sig = exp.signature.build()
    cutoff = SHARP if exp.cutoff == "sharp" else SMOOTH
    sw = kernel_sweep(sig, exp.N_list, exp.n_times, task_rng(seed, 0), cutoff, exp.sigma, exp.worst_x)
    ok = (
        max(sw.max_ratio.values()) <= exp.max_ratio
        and sw.ratio_slope <= exp.max_slope
        and max(sw.max_minor_ratio.values()) <= exp.max_minor
        and sw.minor_slope <= exp.max_slope
    )
    return ExperimentResult(
        tables={"samples": sw.rows()},
        summary={
            "signature": sig.to_dict(),
            "max_ratio": {str(k): v for k, v in sw.max_ratio.items()},
            "max_minor_ratio": {str(k): v for k, v in sw.max_minor_ratio.items()},
            "ratio_slope": sw.ratio_slope,
            "minor_slope": sw.minor_slope,
            "limits": {"max_ratio": exp.max_ratio, "max_slope": exp.max_slope, "max_minor": exp.max_minor},
        },
        passed=ok,
    )


def run_galilean(exp: C.GalileanExp, seed: int, limits: C.Limits) -> ExperimentResult:
    sig = exp.signature.build()
    rng = task_rng(seed, 0)
    M = max(exp.M, exp.radius + exp.half_side)
    shape = (2 * M + 1,) * sig.d
    f = SpectralField(sig, (M,) * sig.d, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    f = f.scaled(1.0 / f.l2_norm())
    x = grid_points(exp.G, sig.d)
    rows, worst = [], 0.0
    for i in range(exp.n_centers):
        r = tuple(int(v) for v in rng.integers(-exp.radius, exp.radius + 1, size=sig.d))
        cube = Cube(r, exp.half_side)
        for t in exp.times:
            lhs, rhs = boost_sides(f, cube, t, x)
            err = float(np.max(np.abs(lhs - rhs)))
            worst = max(worst, err)
            rows.append({"center": " ".join(map(str, r)), "t": t, "max_abs_error": err})
    return ExperimentResult(
        tables={"boost": rows},
        summary={"signature": sig.to_dict(), "max_abs_error": worst, "tol": exp.tol},
        passed=worst <= exp.tol,
    )


def run_solve(exp: C.SolveExp, seed: int, limits: C.Limits) -> ExperimentResult:
    sig = exp.signature.build()
    u0 = build_data(exp.data, sig, task_rng(seed, 0))
    prob = NlsProblem(sig, exp.m, exp.sign, u0, exp.T)
    steps = [exp.h / 2**i for i in range(exp.halvings + 1)]
    runs = [split_step(prob, h) for h in steps]
    ref = split_step(prob, steps[-1] / 4, store_every=10**9).final
    errors = [(r.final - ref).l2_norm() for r in runs]
    drifts = [float(np.max(np.abs(r.energy - r.energy[0]))) for r in runs]

    def ratios(v):
        return [a / b if b > 0 else math.inf for a, b in zip(v, v[1:])]

    err_r, drift_r = ratios(errors), ratios(drifts)
    lo, hi = exp.order_range
    mass_drift = max(r.mass_drift for r in runs)
    ok = mass_drift <= exp.mass_tol and all(lo <= q <= hi for q in err_r + drift_r)
    fine = runs[-1]
    res = ExperimentResult(
        tables={
            "diagnostics": fine.diagnostics_rows(),
            "convergence": [
                {"h": h, "error": e, "energy_drift": dr, "mass_drift": r.mass_drift}
                for h, e, dr, r in zip(steps, errors, drifts, runs)
            ],
        },
        summary={
            "signature": sig.to_dict(),
            "m": exp.m,
            "sign": exp.sign,
            "mass_drift": mass_drift,
            "error_ratios": err_r,
            "energy_drift_ratios": drift_r,
            "order_range": list(exp.order_range),
            "scheme": fine.manifest,
        },
        passed=ok,
    )
    if exp.checkpoint:
        res.fields["final"] = fine.final
    return res


def run_picard(exp: C.PicardExp, seed: int, limits: C.Limits) -> ExperimentResult:
    sig = exp.signature.build()
    u0 = build_data(exp.data, sig, task_rng(seed, 0))
    prob = NlsProblem(sig, exp.m, exp.sign, u0, exp.T)
    pr = picard_iterate(prob, exp.n_iter, exp.h)
    ss = split_step(prob, exp.h, store_every=10**9)
    cross = (pr.iterate_at(exp.n_iter) - ss.final).l2_norm()
    rep = pr.report.to_dict()
    ratios_ok = all(q <= exp.max_ratio for q in pr.report.ratios)
    summary = {
        "signature": sig.to_dict(),
        "contraction": rep,
        "cross_solver_l2": cross,
        "cross_tol": exp.cross_tol,
        "max_ratio": exp.max_ratio,
    }
    if exp.threshold_search:
        summary["contraction_threshold"] = contraction_threshold(prob, exp.h)
    rows = [{"n": i, "distance": d} for i, d in enumerate(pr.report.distances)]
    return ExperimentResult(
        tables={"iterates": rows},
        summary=summary,
        passed=ratios_ok and not pr.report.diverged and cross <= exp.cross_tol,
    )


def run_inflation(exp: C.InflationExp, seed: int, limits: C.Limits) -> ExperimentResult:
    sig = exp.signature.build()
    profile = build_data(exp.data, sig, task_rng(seed, 0))
    rows, growth = [], {}
    for a in exp.amplitudes:
        rep = inflation_probe(sig, exp.m, exp.s, a, profile, exp.T, exp.h, exp.sign)
        growth[repr(a)] = rep.growth
        rows.extend({"amplitude": a, "t": t, "ratio": r} for t, r in zip(rep.times, rep.ratios))
    ok = exp.max_growth is None or max(growth.values()) <= exp.max_growth
    return ExperimentResult(
        tables={"growth": rows},
        summary={
            "signature": sig.to_dict(),
            "s": exp.s,
            "s_c": float(critical_index(sig.d, exp.m).s_c),
            "growth": growth,
            "max_growth": exp.max_growth,
        },
        passed=ok,
    )


def run_admissibility(exp: C.AdmissibilityExp, seed: int, limits: C.Limits) -> ExperimentResult:
    rows = []
    for d in exp.dims:
        for j0 in range(d + 1):
            delta = min(j0, d - j0)
            p = threshold_for(d, delta)
            rows.append(
                {
                    "d": d,
                    "j0": j0,
                    "delta": delta,
                    "p_star": str(p),
                    "p_star_float": float(p),
                    "worst_case": str(worst_case_threshold(d)),
                }
            )
    lookup = {(r["d"], r["j0"]): r["p_star"] for r in rows}
    mismatches = [list(e) for e in exp.expect if lookup.get((e[0], e[1])) != str(Fraction(e[2]))]
    return ExperimentResult(
        tables={"thresholds": rows},
        summary={"dims": exp.dims, "expect": [list(e) for e in exp.expect], "mismatches": mismatches},
        passed=not mismatches,
    )


EXECUTORS = {
    "strichartz": run_strichartz,
    "bilinear": run_bilinear,
    "multilinear": run_multilinear,
    "kernel": run_kernel,
    "galilean": run_galilean,
    "solve": run_solve,
    "picard": run_picard,
    "inflation": run_inflation,
    "admissibility-table": run_admissibility,
}
