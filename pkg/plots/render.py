"""Render figures from trajectory and field CSV files.

This script is deliberately decoupled from the synthesis package: its only
interface is the CSV files themselves.

Inputs:
  --traj  trajectory CSV with header t,x,y,px,py,V,mu,lambda,dVdt
          (one integrator sample per row); renders the state history and
          configuration path (trajectory.png/.svg) and the Lyapunov-value
          history with its dissipation rate (lyapunov.png/.svg).
  --field scalar-field CSV with header x,y,value covering a complete
          rectangular grid; may be given repeatedly.  Each file renders a
          filled contour map named after the file stem (<stem>.png/.svg).
          Strictly positive fields use a sequential colormap; sign-changing
          fields use a diverging one centered at zero.
  --out   output directory (created if needed).

Exit codes: 0 on success, 2 on input errors (missing file, malformed
header, incomplete grid, or no inputs given).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

TRAJ_COLUMNS = ("t", "x", "y", "px", "py", "V", "mu", "lambda", "dVdt")
FIELD_COLUMNS = ("x", "y", "value")
_DPI = 150


def read_trajectory(path) -> dict[str, np.ndarray]:
    """Parse a trajectory CSV into named columns, validating the header."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"trajectory CSV {path} is empty")
        header = [h.strip() for h in header]
        missing = [c for c in TRAJ_COLUMNS if c not in header]
        if missing:
            raise ValueError(
                f"trajectory CSV {path} missing columns: {missing}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"trajectory CSV {path} has no data rows")
    arr = np.asarray(rows, dtype=float)
    return {name: arr[:, header.index(name)] for name in TRAJ_COLUMNS}


def read_field(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a field CSV into (X, Y, values) 2-D arrays on its grid."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FIELD_COLUMNS:
            raise ValueError(
                f"field CSV {path} must have header {','.join(FIELD_COLUMNS)},"
                f" got {header}")
        rows = [(float(a), float(b), float(v)) for a, b, v in reader]
    xs = sorted({r[0] for r in rows})
    ys = sorted({r[1] for r in rows})
    if len(xs) * len(ys) != len(rows):
        raise ValueError(f"field CSV {path} is not a complete grid "
                         f"({len(rows)} rows for {len(xs)}x{len(ys)} nodes)")
    values = np.empty((len(xs), len(ys)))
    xi = {v: k for k, v in enumerate(xs)}
    yi = {v: k for k, v in enumerate(ys)}
    for xv, yv, val in rows:
        values[xi[xv], yi[yv]] = val
    X, Y = np.meshgrid(np.asarray(xs), np.asarray(ys), indexing="ij")
    return X, Y, values


def choose_colormap(values: np.ndarray) -> tuple[str, float, float]:
    """Sequential map on the data range if strictly positive, else a
    diverging map on symmetric limits about zero."""
    lo, hi = float(np.min(values)), float(np.max(values))
    if lo > 0.0:
        return "viridis", lo, hi
    m = max(abs(lo), abs(hi)) or 1.0
    return "coolwarm", -m, m


def _save(fig, outdir: Path, stem: str) -> list[Path]:
    paths = []
    for ext in ("png", "svg"):
        p = outdir / f"{stem}.{ext}"
        fig.savefig(p, dpi=_DPI, bbox_inches="tight")
        paths.append(p)
    plt.close(fig)
    return paths


def plot_trajectory(data: dict[str, np.ndarray], outdir: Path) -> list[Path]:
    """State history and configuration path from one trajectory."""
    t = data["t"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for name, style in (("x", "-"), ("y", "-"), ("px", "--"), ("py", "--")):
        ax1.plot(t, data[name], style, label=name, linewidth=1.2)
    ax1.set_xlabel("t")
    ax1.set_ylabel("state")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(True, alpha=0.3)
    ax1.set_title("state history")

    ax2.plot(data["x"], data["y"], "-", linewidth=1.2)
    ax2.plot(data["x"][:1], data["y"][:1], "o", label="start")
    ax2.plot(data["x"][-1:], data["y"][-1:], "s", label="end")
    ax2.set_xlabel("x")
    ax2.set_ylabel("y")
    ax2.legend(loc="best", fontsize=8)
    ax2.grid(True, alpha=0.3)
    ax2.set_title("configuration path")
    fig.tight_layout()
    return _save(fig, outdir, "trajectory")


def plot_lyapunov(data: dict[str, np.ndarray], outdir: Path) -> list[Path]:
    """Lyapunov value and dissipation rate along the trajectory."""
    t, V, mu = data["t"], data["V"], data["mu"]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    log_ok = np.all(V > 0.0) and np.all(mu >= 0.0) and np.any(mu > 0.0)
    plot = ax.semilogy if log_ok else ax.plot
    plot(t, V, "-", label="V", linewidth=1.4)
    if log_ok:
        pos = mu > 0.0
        ax.semilogy(t[pos], mu[pos], "--", label="mu = -dV/dt", linewidth=1.0)
    else:
        ax.plot(t, mu, "--", label="mu = -dV/dt", linewidth=1.0)
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    ax.set_title("Lyapunov decrease")
    fig.tight_layout()
    return _save(fig, outdir, "lyapunov")


def plot_field(path, outdir: Path) -> list[Path]:
    """Filled contour map of one field CSV, named after the file stem."""
    X, Y, values = read_field(path)
    cmap, vmin, vmax = choose_colormap(values)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    cs = ax.contourf(X, Y, values, levels=31, cmap=cmap,
                     vmin=vmin, vmax=vmax)
    ax.contour(X, Y, values, levels=11, colors="k", linewidths=0.3,
               alpha=0.4)
    fig.colorbar(cs, ax=ax, label="value")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")
    ax.set_title(Path(path).stem)
    fig.tight_layout()
    return _save(fig, outdir, Path(path).stem)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render trajectory and scalar-field CSV files to "
                    "PNG and SVG figures.")
    parser.add_argument("--traj", default=None,
                        help="trajectory CSV (t,x,y,px,py,V,mu,lambda,dVdt)")
    parser.add_argument("--field", action="append", default=[],
                        help="field CSV (x,y,value); repeatable")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    if args.traj is None and not args.field:
        print("error: nothing to render (give --traj and/or --field)",
              file=sys.stderr)
        return 2

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        if args.traj is not None:
            data = read_trajectory(args.traj)
            written += plot_trajectory(data, outdir)
            written += plot_lyapunov(data, outdir)
        for field in args.field:
            written += plot_field(field, outdir)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
