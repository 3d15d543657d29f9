"""End-to-end checks of the ``lcbstab`` command line.

Every test drives the real entry point in a subprocess (``python -m
lcbstab``), so argument parsing, JSON emission, file layout, and exit
codes are all exercised exactly as a user sees them.

Proves:
  1. Success paths: iwp, check, gamma, synthesize, simulate (single and
     batch), lasalle, and export-fields all exit 0 and print well-formed
     JSON documents with the documented keys and frozen reference values.
  2. Exit-code contract: 1 for a method-level negative (not stabilizable
     by this construction), 2 for input/IO/validation errors, 3 for
     failed certificates (positivity loss, invariance-chain failure).
  3. File outputs: --out mirrors stdout documents byte-for-byte and
     writes controller/trajectory/field files with documented headers.
  4. Determinism: repeating an invocation reproduces stdout and written
     artifacts byte-identically.
  5. The installed ``lcb`` console script is equivalent to the module
     entry point.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

# ═══════════════════════════════════════════════════════════════════════════
# Shared fixtures
# ═══════════════════════════════════════════════════════════════════════════

# ── Shared fixtures ──


def _run(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "lcbstab", *args],
                          capture_output=True, text=True, timeout=300.0)


def _doc(proc: subprocess.CompletedProcess) -> dict:
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def ws(tmp_path_factory) -> Path:
    """Workspace with the reference system, two controllers, bad configs."""
    root = tmp_path_factory.mktemp("cli")
    p = _run("iwp", "--out", str(root / "ref"))
    assert p.returncode == 0, p.stderr
    cfg = str(root / "ref" / "system.json")
    p = _run("synthesize", "--config", cfg, "--grid", "21",
             "--out", str(root / "syn"))
    assert p.returncode == 0, p.stderr
    p = _run("synthesize", "--config", cfg, "--grid", "41",
             "--domain", "1.5", "--out", str(root / "wide"))
    assert p.returncode == 0, p.stderr

    concave = {"a": {"coeffs": [[1.0]]}, "b": {"coeffs": [[0.0]]},
               "c": {"coeffs": [[1.0]]},
               "h": {"coeffs": [[0.0], [0.0], [-0.5]]},
               "domain": {"Lx": 0.5, "Ly": 0.5, "Nx": 11, "Ny": 11}}
    (root / "concave.json").write_text(json.dumps(concave))
    (root / "broken.json").write_text("{not json")
    (root / "badfield.json").write_text(json.dumps({**concave, "a": []}))
    negmetric = {**concave, "a": {"coeffs": [[-1.0]]}}
    (root / "negmetric.json").write_text(json.dumps(negmetric))
    return root


# ═══════════════════════════════════════════════════════════════════════════
# 1. Success paths and frozen reference values
# ═══════════════════════════════════════════════════════════════════════════


def test_iwp_reference_doc(ws):
    p = _run("iwp")
    doc = _doc(p)
    assert p.returncode == 0
    assert sorted(doc) == ["a", "b", "c", "domain", "h", "periodic",
                           "suggested"]
    sug = doc["suggested"]
    assert (sug["gamma0"], sug["kappa"], sug["l"]) == (3.0, 1.0, 1.0)
    jet = sug["boundary"]
    assert (jet["s0"], jet["ds0"], jet["ddr0"]) == (1.0, 0.1, 2.0)
    print(f"\n  iwp: gamma0={sug['gamma0']}  boundary jet=({jet['s0']}, "
          f"{jet['ds0']}, {jet['ddr0']})")

    # --out wrote both the full doc and the plain system config
    sysdoc = json.loads((ws / "ref" / "system.json").read_text())
    full = json.loads((ws / "ref" / "iwp.json").read_text())
    assert sysdoc == {k: v for k, v in full.items() if k != "suggested"}, (
        "system.json must be the iwp doc minus the suggested block")


def test_check_reference_system(ws):
    p = _run("check", "--config", str(ws / "ref" / "system.json"))
    doc = _doc(p)
    assert p.returncode == 0, p.stdout
    assert doc["validation"]["ok"] is True
    assert sorted(doc["validation"]["checks"]) == [
        "a_positive", "c_positive", "h_critical_origin",
        "metric_det_positive"]
    v = doc["verdict"]
    assert v["stabilizable"] is True
    assert v["clause_bc"] == -1.0, f"clause_bc = {v['clause_bc']}"
    assert v["clause_hxx"] == -1.0, f"clause_hxx = {v['clause_hxx']}"
    print(f"\n  check: stabilizable via clause_bc = {v['clause_bc']}")


def test_gamma_reference_values(ws):
    p = _run("gamma", "--config", str(ws / "ref" / "system.json"))
    doc = _doc(p)
    assert p.returncode == 0, p.stdout
    assert sorted(doc) == ["boundary", "choice", "condpos", "gamma0"]
    assert doc["gamma0"] == 3.0, f"gamma0 = {doc['gamma0']}"
    assert doc["condpos"] == 1.0, f"condpos = {doc['condpos']}"
    assert doc["choice"]["satisfied"] == ["gbc", "c1", "l2"]
    assert doc["choice"]["margin"] == 0.5
    jet = doc["boundary"]
    assert (jet["s0"], jet["ds0"], jet["ddr0"]) == (1.0, 0.1, 3.0)
    assert (jet["r0"], jet["dr0"]) == (0.0, 0.0)
    print(f"\n  gamma: {doc['gamma0']} with ddr0 = {jet['ddr0']}")


def test_synthesize_doc_and_certificates(ws):
    doc = json.loads((ws / "syn" / "synthesis.json").read_text())
    assert sorted(doc) == ["boundary", "gamma0", "hessian_v", "kappa", "l",
                           "positivity", "residual_kinetic",
                           "residual_potential"]
    assert (doc["gamma0"], doc["kappa"], doc["l"]) == (3.0, 1.0, 1.0)
    assert doc["residual_kinetic"]["max_abs"] < 1e-4, (
        f"kinetic residual {doc['residual_kinetic']['max_abs']:.3e}")
    assert doc["residual_potential"]["max_abs"] < 1e-2, (
        f"potential residual {doc['residual_potential']['max_abs']:.3e}")
    pos = doc["positivity"]
    assert pos["ok"] is True
    assert pos["v_origin"] == 0.0
    assert abs(pos["delta_min"] - 0.9318361239976666) < 1e-9
    hv = doc["hessian_v"]
    assert (hv["vxx"], hv["vxy"], hv["vyy"]) == (3.0, -1.0, 0.5)
    assert hv["det"] == 0.5 and hv["pos_def"] is True
    assert (ws / "syn" / "controller.json").exists()
    print(f"\n  synthesize: residuals k={doc['residual_kinetic']['max_abs']:.2e}"
          f" p={doc['residual_potential']['max_abs']:.2e}, "
          f"hess v = ({hv['vxx']}, {hv['vxy']}, {hv['vyy']})")


def test_simulate_single_ic(ws):
    out = ws / "sim"
    p = _run("simulate", "--controller", str(ws / "wide" / "controller.json"),
             "--ic", "0.1,-0.1,0.05,0.1", "--t-final", "5", "--dt", "0.01",
             "--decimate", "50", "--out", str(out))
    doc = _doc(p)
    assert p.returncode == 0, p.stdout
    assert doc["ic"] == [0.1, -0.1, 0.05, 0.1]
    assert doc["truncated"] is False and doc["marker"] is None
    assert abs(doc["final_norm"] - 0.29963987317789414) < 1e-6, (
        f"final_norm = {doc['final_norm']}")
    dec = doc["decrease"]
    assert dec["n_samples"] == 501
    assert dec["max_increase"] < 1e-3, (
        f"max V increase {dec['max_increase']:.3e} beyond bilinear slack")
    print(f"\n  simulate: |z(5)| = {doc['final_norm']:.6f}, "
          f"max increase {dec['max_increase']:.2e}")


def test_simulate_batch(ws):
    p = _run("simulate", "--controller", str(ws / "wide" / "controller.json"),
             "--batch", "3", "--radius", "0.05", "--t-final", "5",
             "--dt", "0.01")
    doc = _doc(p)
    assert p.returncode == 0, p.stdout
    assert doc["n_runs"] == 3
    assert [r["index"] for r in doc["runs"]] == [0, 1, 2]
    for r in doc["runs"]:
        assert sorted(r) == ["converged", "decrease", "error", "final_norm",
                             "final_state", "ic", "index", "n_steps",
                             "truncated"]
        assert r["error"] is None and r["truncated"] is False
    print(f"\n  batch: {doc['n_runs']} runs, "
          f"norms {[round(r['final_norm'], 4) for r in doc['runs']]}")


def test_lasalle_verdict_true(ws):
    p = _run("lasalle", "--controller", str(ws / "wide" / "controller.json"))
    doc = _doc(p)
    assert p.returncode == 0, p.stdout
    assert doc["verdict"] is True
    assert doc["l1_ok"] is True and doc["l2_ok"] is True
    assert doc["gradL0_nonzero"] is True
    assert (doc["s1_count"], doc["s2_count"], doc["s3_count"]) == (51, 3, 1)
    assert abs(doc["K0"] - (-0.025)) < 1e-3, f"K0 = {doc['K0']}"
    assert abs(doc["l2_forbidden"] - 2.3323968758462645) < 1e-6
    print(f"\n  lasalle: verdict={doc['verdict']}, counts="
          f"{doc['s1_count']}/{doc['s2_count']}/{doc['s3_count']}, "
          f"K0 = {doc['K0']:.6f}")


def test_export_fields_csv(ws):
    out = ws / "fx"
    p = _run("export-fields", "--controller",
             str(ws / "syn" / "controller.json"), "--out", str(out))
    doc = _doc(p)
    assert p.returncode == 0, p.stdout
    assert sorted(doc) == ["delta", "grid", "v"]
    assert doc["grid"] == {"Lx": 0.5, "Ly": 0.5, "Nx": 21, "Ny": 21}
    for name in ("delta.csv", "v.csv"):
        lines = (out / name).read_text().splitlines()
        assert lines[0] == "x,y,value", f"{name} header = {lines[0]!r}"
        assert len(lines) == 1 + 21 * 21, f"{name} has {len(lines)} lines"
        first = lines[1].split(",")
        assert float(first[0]) == -0.5 and float(first[1]) == -0.5
    print(f"\n  export-fields: 2 CSVs with {21 * 21} rows each")


# ═══════════════════════════════════════════════════════════════════════════
# 2. Exit-code contract
# ═══════════════════════════════════════════════════════════════════════════


def test_exit1_not_stabilizable(ws):
    p = _run("check", "--config", str(ws / "concave.json"))
    doc = _doc(p)
    assert p.returncode == 1, f"exit {p.returncode}"
    assert doc["verdict"]["stabilizable"] is False
    assert doc["verdict"]["clause_bc"] == 0.0
    assert doc["verdict"]["clause_hxx"] == -1.0

    p = _run("gamma", "--config", str(ws / "concave.json"))
    doc = _doc(p)
    assert p.returncode == 1, f"exit {p.returncode}"
    assert doc["error"] == "NotStabilizable"
    assert "clause_bc" in doc["message"]
    print(f"\n  exit 1: {doc['error']}: {doc['message']}")


@pytest.mark.parametrize("label,args,fragment", [
    ("missing config file", ("check", "--config", "nope.json"),
     "cannot read system config"),
    ("broken json", ("check", "--config", "{BROKEN}"), "cannot read"),
    ("bad field spec", ("check", "--config", "{BADFIELD}"),
     "field spec must be a non-empty object"),
    ("missing --config", ("check",), "--config is required"),
    ("missing controller file",
     ("simulate", "--controller", "missing.json", "--ic", "0,0,0,0"),
     "controller file"),
    ("missing --ic", ("simulate", "--controller", "{CTRL}"),
     "--ic (or --batch N) is required"),
    ("short --ic", ("simulate", "--controller", "{CTRL}", "--ic", "1,2,3"),
     "--ic expects x,y,px,py"),
    ("negative dt",
     ("simulate", "--controller", "{CTRL}", "--ic", "0,0,0,0", "--dt", "-1"),
     "outside (0, 0.1]"),
    ("even grid",
     ("synthesize", "--config", "{CFG}", "--grid", "20"),
     "must be an odd integer"),
])
def test_exit2_input_errors(ws, label, args, fragment):
    subst = {"{BROKEN}": str(ws / "broken.json"),
             "{BADFIELD}": str(ws / "badfield.json"),
             "{CTRL}": str(ws / "wide" / "controller.json"),
             "{CFG}": str(ws / "ref" / "system.json")}
    argv = [subst.get(a, a) for a in args]
    p = _run(*argv)
    doc = _doc(p)
    assert p.returncode == 2, f"{label}: exit {p.returncode}, doc {doc}"
    assert fragment in doc["message"], (
        f"{label}: message {doc['message']!r} lacks {fragment!r}")


def test_exit2_hypothesis_violation(ws):
    p = _run("check", "--config", str(ws / "negmetric.json"))
    doc = _doc(p)
    assert p.returncode == 2, f"exit {p.returncode}"
    assert doc["verdict"] is None
    assert doc["validation"]["ok"] is False
    assert doc["validation"]["checks"]["a_positive"]["ok"] is False
    print(f"\n  exit 2: hypotheses fail, worst a = "
          f"{doc['validation']['checks']['a_positive']['worst_value']}")


def test_exit3_positivity_loss(ws):
    p = _run("synthesize", "--config", str(ws / "ref" / "system.json"),
             "--grid", "21", "--s1", "10")
    doc = _doc(p)
    assert p.returncode == 3, f"exit {p.returncode}"
    assert doc["error"] == "PositivityLoss"
    assert "delta lost positivity" in doc["message"]
    print(f"\n  exit 3: {doc['message']}")


def test_exit3_lasalle_failure(ws):
    flat = ws / "flat"
    p = _run("synthesize", "--config", str(ws / "ref" / "system.json"),
             "--grid", "21", "--s1", "0", "--out", str(flat))
    assert p.returncode == 0, "flat-slope synthesis itself succeeds"
    p = _run("lasalle", "--controller", str(flat / "controller.json"))
    doc = _doc(p)
    assert p.returncode == 3, f"exit {p.returncode}"
    assert doc["verdict"] is False
    assert doc["K0"] == 0.0 and doc["l1_ok"] is False
    print(f"\n  exit 3: lasalle verdict {doc['verdict']} (K0 = {doc['K0']})")


# ═══════════════════════════════════════════════════════════════════════════
# 3. File outputs mirror stdout
# ═══════════════════════════════════════════════════════════════════════════


def test_out_mirrors_stdout(ws):
    out = ws / "mirror"
    p = _run("check", "--config", str(ws / "ref" / "system.json"),
             "--out", str(out))
    assert p.returncode == 0
    assert (out / "check.json").read_text() == p.stdout

    p = _run("lasalle", "--controller", str(ws / "wide" / "controller.json"),
             "--out", str(out))
    assert p.returncode == 0
    assert (out / "lasalle.json").read_text() == p.stdout
    print("\n  --out files match stdout byte-for-byte")


def test_trajectory_csv_decimation(ws):
    lines = (ws / "sim" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,px,py,V,mu,lambda,dVdt"
    # 501 samples decimated by 50 keep indices 0, 50, ..., 500: 11 rows
    assert len(lines) == 1 + 11, f"{len(lines)} lines"
    t_first = float(lines[1].split(",")[0])
    t_last = float(lines[-1].split(",")[0])
    assert t_first == 0.0
    assert abs(t_last - 5.0) < 1e-12, f"last kept t = {t_last}"
    print(f"\n  trajectory.csv: {len(lines) - 1} rows, t in [0, {t_last}]")


# ═══════════════════════════════════════════════════════════════════════════
# 4. Determinism
# ═══════════════════════════════════════════════════════════════════════════


def test_byte_determinism(ws):
    cfg = str(ws / "ref" / "system.json")
    p1 = _run("synthesize", "--config", cfg, "--grid", "21",
              "--out", str(ws / "det1"))
    p2 = _run("synthesize", "--config", cfg, "--grid", "21",
              "--out", str(ws / "det2"))
    assert p1.returncode == p2.returncode == 0
    assert p1.stdout == p2.stdout, "synthesize stdout must be reproducible"
    b1 = (ws / "det1" / "controller.json").read_bytes()
    b2 = (ws / "det2" / "controller.json").read_bytes()
    assert b1 == b2, "persisted controllers must be byte-identical"

    args = ("simulate", "--controller", str(ws / "wide" / "controller.json"),
            "--ic", "0.1,-0.1,0.05,0.1", "--t-final", "2", "--dt", "0.01")
    s1, s2 = _run(*args), _run(*args)
    assert s1.stdout == s2.stdout, "simulate stdout must be reproducible"
    print(f"\n  determinism: {len(b1)} controller bytes reproduced")


# ═══════════════════════════════════════════════════════════════════════════
# 5. Console script parity
# ═══════════════════════════════════════════════════════════════════════════


def test_console_script_parity(ws):
    exe = shutil.which("lcb")
    assert exe is not None, "console script lcb must be on PATH"
    p_mod = _run("iwp")
    p_scr = subprocess.run([exe, "iwp"], capture_output=True, text=True,
                           timeout=300.0)
    assert p_scr.returncode == 0
    assert p_scr.stdout == p_mod.stdout, "lcb must match python -m lcbstab"
    print(f"\n  console script: {exe} matches module entry point")
