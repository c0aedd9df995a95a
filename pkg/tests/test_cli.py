import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from hnls_lab import __version__
from hnls_lab.cli import main
from hnls_lab.config import ConfigError, load_config, parse_config
from hnls_lab.runner import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


TABLE = {"name": "table", "seed": 1, "experiments": [{"kind": "admissibility-table", "dims": [2, 3, 4, 5, 6], "expect": [[3, 1, "4"]], "check": True}]}
SMALL_SWEEP = {
    "name": "sweep",
    "seed": 42,
    "experiments": [{"kind": "strichartz", "signature": {"d": 1, "j0": 1}, "p": 6, "family": "gaussian", "N_list": [4, 8, 16], "check": False}],
}


def test_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_admissibility_table(tmp_path):
    out = run(write(tmp_path, TABLE), tmp_path / "out")
    assert out.status == 0
    rows = list(csv.DictReader((out.directory / "00-admissibility-table" / "thresholds.csv").open()))
    row = next(r for r in rows if r["d"] == "3" and r["j0"] == "1")
    assert row["p_star"] == "4"
    assert len(rows) == sum(d + 1 for d in range(2, 7))


def test_failed_expectation_exits_one(tmp_path):
    cfg = json.loads(json.dumps(TABLE))
    cfg["experiments"][0]["expect"] = [[3, 1, "5"]]
    assert run(write(tmp_path, cfg), tmp_path / "out").status == 1


@pytest.mark.parametrize(
    "bad",
    [
        {"experiments": []},
        {"experiments": [{"kind": "admissibility-table", "dims": [2], "colour": "red"}]},
        {"seed": 1, "experiments": [{"kind": "teleport"}]},
        {"experiments": [{"kind": "strichartz", "signature": {"d": 2, "j0": 1}, "p": 4, "N_list": [4, 6, 8]}]},
        {"experiments": [{"kind": "admissibility-table", "dims": [2]}, {"kind": "kernel", "signature": {"d": 1, "j0": 1}, "N_list": [4, 8]}]},
        "not json",
    ],
)
def test_schema_violations_exit_two(tmp_path, bad, capsys):
    assert main(["run", str(write(tmp_path, bad)), "--out", str(tmp_path / "o")]) == 2
    assert capsys.readouterr().err


def test_commented_config(tmp_path):
    text = '// leading comment\n{"seed": 3, // trailing\n "experiments": [{"kind": "admissibility-table", "dims": [2]}]}'
    assert load_config(write(tmp_path, text)).seed == 3


def test_shipped_configs_validate():
    for p in sorted(CONFIGS.glob("*.json")):
        load_config(p)


def test_resource_cap_exits_three(tmp_path):
    cfg = json.loads(json.dumps(SMALL_SWEEP))
    cfg["limits"] = {"max_points": 100}
    out = run(write(tmp_path, cfg), tmp_path / "o")
    assert out.status == 3 and out.directory is None


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HNLS_LAB_OUTPUT_ROOT", str(tmp_path / "root"))
    out = run(write(tmp_path, TABLE))
    assert out.directory.parent == tmp_path / "root"


def test_determinism_and_rerun_from_manifest(tmp_path):
    cfg = write(tmp_path, SMALL_SWEEP)
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    for item in json.loads((a.directory / "manifest.json").read_text())["outputs"]:
        assert (a.directory / item["path"]).read_bytes() == (b.directory / item["path"]).read_bytes()
    c = run(a.directory / "manifest.json", tmp_path / "c")
    assert c.status == 0
    assert (c.directory / "00-strichartz/norms.csv").read_bytes() == (a.directory / "00-strichartz/norms.csv").read_bytes()


def test_manifest_contents(tmp_path):
    out = run(write(tmp_path, SMALL_SWEEP), tmp_path / "a")
    man = json.loads((out.directory / "manifest.json").read_text())
    for key in ("artifact_version", "config_hash", "seed", "signatures", "kind", "timing", "host", "outputs", "config"):
        assert key in man
    assert man["signatures"] == [{"d": 1, "j0": 1, "eps": [1]}]
    assert parse_config(man["config"]).digest() == man["config_hash"]
    norms = (out.directory / "00-strichartz/norms.csv").read_text().splitlines()
    assert norms[0] == "N,norm,n_t,G,exact,refinement_change"
    # 17 significant digits round-trip exactly
    val = float(norms[1].split(",")[1])
    summary = json.loads((out.directory / "00-strichartz/summary.json").read_text())
    assert set(summary["fit"]) >= {"slope", "predicted", "residual", "tolerance", "verdict"}
    assert repr(val) == repr(float("%.17g" % val))


def test_report_sections_and_tamper(tmp_path, capsys):
    root = tmp_path / "runs"
    run(write(tmp_path, SMALL_SWEEP, "s.json"), root / "r1")
    run(write(tmp_path, TABLE, "t.json"), root / "r2")
    assert main(["report", str(root)]) == 0
    text = capsys.readouterr().out
    assert text.index("== strichartz ==") < text.index("== admissibility-table ==")
    assert "slope=" in text and "predicted=" in text
    summary = json.loads((root / "summary.json").read_text())
    assert [sec["kind"] for sec in summary["sections"]] == ["strichartz", "admissibility-table"]
    entry = summary["sections"][0]["rows"][0]
    assert {"slope", "predicted", "verdict"} <= set(entry)
    csv_path = root / "r1" / "00-strichartz" / "norms.csv"
    csv_path.write_text(csv_path.read_text().replace("4,", "5,", 1))
    assert main(["report", str(root)]) == 1
    assert "hash mismatch" in capsys.readouterr().err


def test_report_refuses_newer_schema(tmp_path):
    out = run(write(tmp_path, TABLE), tmp_path / "a")
    man_path = out.directory / "manifest.json"
    man = json.loads(man_path.read_text())
    man["schema_version"] = 99
    man_path.write_text(json.dumps(man))
    assert main(["report", str(out.directory)]) == 1


def test_report_missing_manifest(tmp_path):
    assert main(["report", str(tmp_path)]) == 1


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hnls_lab.cli", "version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == __version__
