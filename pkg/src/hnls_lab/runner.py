"""Run orchestration, output persistence, manifests and consolidated reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import KINDS, SCHEMA_VERSION, ConfigError, RunConfig, load_config, parse_config
from .experiments import EXECUTORS, planned_points, task_seed
from .field import ResourceCapExceeded
from .strichartz import SweepError

OUTPUT_ROOT_ENV = "HNLS_LAB_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SCHEMA = 2
EXIT_RESOURCE = 3


class IntegrityError(RuntimeError):
    pass


class ReportError(RuntimeError):
    pass


@dataclass
class RunOutcome:
    status: int
    directory: Path | None
    message: str = ""


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_bytes(rows: list[dict]) -> bytes:
    buf = io.StringIO(newline="")
    if rows:
        header = list(rows[0].keys())
        for r in rows[1:]:
            for k in r:
                if k not in header:
                    header.append(k)
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in header])
    return buf.getvalue().encode("utf-8")


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def _clean(o):
    # JSON has no inf/nan; encode them as strings
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def json_bytes(obj) -> bytes:
    return (json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n").encode("utf-8")


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Writer:
    """The single writer for a run directory; keeps the output inventory."""

    def __init__(self, root: Path):
        self.root = root
        self.inventory: list[dict] = []
        root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, data: bytes, kind: str) -> None:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.inventory.append(
            {"path": name, "sha256": sha256(data), "bytes": len(data), "format": kind, "schema_version": SCHEMA_VERSION}
        )


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _host() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "machine": platform.machine(),
    }


def execute(cfg: RunConfig, out_dir: Path | None = None) -> RunOutcome:
    digest = cfg.digest()
    out_dir = Path(out_dir) if out_dir is not None else output_root() / f"{cfg.name}-{cfg.kind}-{digest[:12]}"
    seeds = [task_seed(cfg.seed, i) for i in range(len(cfg.experiments))]

    # resource caps are enforced before any work starts
    for exp, seed in zip(cfg.experiments, seeds):
        need = max(planned_points(exp, seed))
        if need > cfg.limits.max_points:
            return RunOutcome(
                EXIT_RESOURCE, None, f"experiment {exp.id or exp.kind}: {need} samples exceed max_points={cfg.limits.max_points:g}"
            )

    writer = _Writer(out_dir)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.monotonic()
    checks, timing, summaries = {}, {}, []
    status = EXIT_OK
    message = ""
    for i, (exp, seed) in enumerate(zip(cfg.experiments, seeds)):
        eid = exp.id or f"{i:02d}-{exp.kind}"
        t1 = time.monotonic()
        try:
            res = EXECUTORS[exp.kind](exp, seed, cfg.limits)
            error = None
        except ResourceCapExceeded as exc:
            return RunOutcome(EXIT_RESOURCE, out_dir, f"{eid}: {exc}")
        except SweepError as exc:
            res, error = None, str(exc)
        timing[eid] = time.monotonic() - t1
        if res is None:
            summary = {"id": eid, "kind": exp.kind, "check": exp.check, "verdict": False, "error": error}
        else:
            for name, rows in res.tables.items():
                writer.write(f"{eid}/{name}.csv", csv_bytes(rows), "csv")
            for name, f in res.fields.items():
                writer.write(f"{eid}/{name}.field", f.to_bytes(), "field")
            summary = {"id": eid, "kind": exp.kind, "check": exp.check, "verdict": bool(res.passed), **res.summary}
        writer.write(f"{eid}/summary.json", json_bytes(summary), "json")
        summaries.append(summary)
        if exp.check:
            checks[eid] = summary["verdict"]
            if not summary["verdict"]:
                status = EXIT_CHECK_FAILED
                message = f"check failed: {eid}"
    manifest = {
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "config_hash": digest,
        "seed": cfg.seed,
        "task_seeds": [str(s) for s in seeds],
        "kind": cfg.kind,
        "signatures": [s["signature"] for s in summaries if "signature" in s],
        "config": cfg.canonical(),
        "timing": {"started": started, "seconds": time.monotonic() - t0, "per_experiment": timing},
        "host": _host(),
        "checks": checks,
        "status": status,
        "outputs": writer.inventory,
    }
    (out_dir / "manifest.json").write_bytes(json_bytes(manifest))
    return RunOutcome(status, out_dir, message)


def run(config_path, out_dir=None) -> RunOutcome:
    """Execute a config file; a run manifest is accepted too and reruns its embedded config."""
    if Path(config_path).name == "manifest.json":
        return rerun(config_path, out_dir)
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError) as exc:
        return RunOutcome(EXIT_SCHEMA, None, str(exc))
    return execute(cfg, out_dir)


def rerun(manifest_path, out_dir=None) -> RunOutcome:
    """Regenerate a run from the config embedded in its manifest."""
    try:
        data = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        cfg = parse_config(data["config"])
    except (ConfigError, KeyError, OSError, json.JSONDecodeError) as exc:
        return RunOutcome(EXIT_SCHEMA, None, str(exc))
    return execute(cfg, out_dir)


# --- reports -----------------------------------------------------------------


def load_manifest(run_dir: Path, verify: bool = True) -> dict:
    path = run_dir / "manifest.json"
    if not path.is_file():
        raise ReportError(f"{run_dir}: no manifest.json")
    try:
        man = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: corrupt manifest ({exc})") from exc
    if not isinstance(man, dict) or "outputs" not in man:
        raise ReportError(f"{path}: corrupt manifest")
    if int(man.get("schema_version", 0)) > SCHEMA_VERSION:
        raise ReportError(f"{path}: schema_version {man['schema_version']} is newer than supported {SCHEMA_VERSION}")
    if verify:
        for item in man["outputs"]:
            if int(item.get("schema_version", 0)) > SCHEMA_VERSION:
                raise ReportError(f"{item['path']}: schema_version too new")
            f = run_dir / item["path"]
            if not f.is_file():
                raise IntegrityError(f"{item['path']}: missing")
            if sha256(f.read_bytes()) != item["sha256"]:
                raise IntegrityError(f"{item['path']}: content hash mismatch")
    return man


def _run_dirs(directory: Path) -> list[Path]:
    if (directory / "manifest.json").exists():
        return [directory]
    dirs = sorted(p for p in directory.iterdir() if (p / "manifest.json").exists()) if directory.is_dir() else []
    if not dirs:
        raise ReportError(f"{directory}: no manifest found")
    return dirs


def _headline(s: dict) -> str:
    kind = s["kind"]
    if "error" in s:
        return f"error: {s['error']}"
    if "fit" in s:
        f = s["fit"]
        line = f"slope={f['slope']:.4f} predicted={f['predicted']:.4f}"
        if "compare" in s:
            line += f" gap={s['compare']['slope_gap']:.4f}"
        return line
    if kind == "kernel":
        return f"max_ratio={max(s['max_ratio'].values()):.3f} ratio_slope={s['ratio_slope']:.3f} minor_slope={s['minor_slope']:.3f}"
    if kind == "multilinear":
        return " ".join(f"{k}:variation={v:.3f}" for k, v in sorted(s["max_variation"].items()))
    if kind == "galilean":
        return f"max_abs_error={s['max_abs_error']:.3e}"
    if kind == "solve":
        return f"mass_drift={s['mass_drift']:.2e} error_ratios={[round(r, 3) for r in s['error_ratios']]}"
    if kind == "picard":
        c = s["contraction"]
        return f"ratios={[float('%.3g' % r) for r in c['ratios']]} cross_l2={s['cross_solver_l2']:.2e}"
    if kind == "inflation":
        return " ".join(f"eps={k}:growth={v:.3f}" for k, v in s["growth"].items())
    if kind == "admissibility-table":
        return f"dims={s['dims']} mismatches={len(s['mismatches'])}"
    return ""


def report(directory) -> dict:
    """Verify every run under ``directory`` and write summary.txt / summary.json there."""
    directory = Path(directory)
    entries = []
    for rd in _run_dirs(directory):
        man = load_manifest(rd)
        for item in man["outputs"]:
            if item["path"].endswith("summary.json"):
                s = json.loads((rd / item["path"]).read_text(encoding="utf-8"))
                entries.append((rd.name, s))
    order = {k: i for i, k in enumerate(KINDS)}
    entries.sort(key=lambda e: (order.get(e[1]["kind"], len(order)), e[0], e[1]["id"]))
    sections: dict = {}
    for run_name, s in entries:
        verdict = {"run": run_name, "id": s["id"], "check": s["check"], "verdict": s["verdict"]}
        if "fit" in s:
            verdict.update(slope=s["fit"]["slope"], predicted=s["fit"]["predicted"])
        sections.setdefault(s["kind"], []).append(verdict | {"headline": _headline(s)})
    out = {
        "schema_version": SCHEMA_VERSION,
        "sections": [{"kind": k, "rows": rows} for k, rows in sections.items()],
        "all_checks_pass": all(v["verdict"] for rows in sections.values() for v in rows if v["check"]),
    }
    lines = []
    for kind, rows in sections.items():
        lines.append(f"== {kind} ==")
        width = max(len(f"{r['run']}/{r['id']}") for r in rows)
        for r in rows:
            mark = "PASS" if r["verdict"] else "FAIL"
            tag = "check" if r["check"] else "info "
            lines.append(f"{(r['run'] + '/' + r['id']).ljust(width)}  {tag}  {mark}  {r['headline']}")
        lines.append("")
    (directory / "summary.txt").write_text("\n".join(lines), encoding="utf-8")
    (directory / "summary.json").write_bytes(json_bytes(out))
    return out
