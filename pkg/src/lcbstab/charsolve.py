"""Method-of-characteristics solver for the kinetic and potential equations.

Both first-order PDEs

    (a - b*gamma) delta_x + (b - c*gamma) delta_y = B * delta
    (a - b*gamma) v_x     + (b - c*gamma) v_y     = h_x * delta

share the characteristic field A = (a - b*gamma, b - c*gamma).  Every grid
node is traced backward to its foot point on the x-axis (where the boundary
data lives) with fixed-step RK4 plus an event refinement for the y = 0
crossing, and the transported quantities are integrated along the same
trace, so no intermediate interpolation enters the solution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (CharacteristicDegeneracy, ConfigError, OutOfDomain,
                     PositivityLoss, TraceEscape)
from .model import Rectangle, SmoothField2D, SystemSpec2D

EPS_EVENT = 1e-12
INFLATE_FACTOR = 2.0
DEFAULT_DT = 1e-3
DEFAULT_MAX_STEPS = 100_000
_GBC_TOL = 1e-9

FIELD_CSV_HEADER = ("x", "y", "value")


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Scalar field sampled on the domain grid.

    Bilinear interpolation for values; x/y derivatives come from central
    finite differences of the sample grid (second-order one-sided at the
    edges) and are themselves interpolated bilinearly.  Queries outside the
    rectangle raise OutOfDomain through the public accessors; the private
    core clamps instead, which integrators use for transient sub-step
    evaluations near the boundary.
    """

    domain: Rectangle
    values: np.ndarray
    gx: np.ndarray
    gy: np.ndarray

    @classmethod
    def from_values(cls, domain: Rectangle, values: np.ndarray) -> "FieldGrid":
        values = np.asarray(values, dtype=float)
        if values.shape != (domain.Nx, domain.Ny):
            raise ConfigError(f"grid shape {values.shape} does not match "
                              f"domain ({domain.Nx}, {domain.Ny})")
        if not np.all(np.isfinite(values)):
            raise ConfigError("field grid contains non-finite values")
        gx, gy = np.gradient(values, domain.xs, domain.ys, edge_order=2)
        for arr in (values, gx, gy):
            arr.setflags(write=False)
        return cls(domain=domain, values=values, gx=gx, gy=gy)

    # -- interpolation core ---------------------------------------------------

    def _interp(self, grid: np.ndarray, x, y):
        d = self.domain
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = np.clip((x + d.Lx) / d.hx, 0.0, d.Nx - 1.0)
        w = np.clip((y + d.Ly) / d.hy, 0.0, d.Ny - 1.0)
        i = np.minimum(u.astype(int), d.Nx - 2)
        j = np.minimum(w.astype(int), d.Ny - 2)
        tx = u - i
        ty = w - j
        out = ((1.0 - tx) * (1.0 - ty) * grid[i, j]
               + tx * (1.0 - ty) * grid[i + 1, j]
               + (1.0 - tx) * ty * grid[i, j + 1]
               + tx * ty * grid[i + 1, j + 1])
        if out.ndim == 0:
            return float(out)
        return out

    def _require_inside(self, x, y) -> None:
        ok = self.domain.contains(x, y, pad=1e-9)
        if not np.all(ok):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            bad = np.argmin(np.broadcast_to(ok, np.broadcast_shapes(x.shape, y.shape)))
            xb = np.broadcast_to(x, np.broadcast_shapes(x.shape, y.shape)).flat[bad]
            yb = np.broadcast_to(y, np.broadcast_shapes(x.shape, y.shape)).flat[bad]
            raise OutOfDomain(f"query point ({float(xb)}, {float(yb)}) outside "
                              f"[-{self.domain.Lx}, {self.domain.Lx}] x "
                              f"[-{self.domain.Ly}, {self.domain.Ly}]")

    def value(self, x, y, check: bool = True):
        if check:
            self._require_inside(x, y)
        return self._interp(self.values, x, y)

    def dx(self, x, y, check: bool = True):
        if check:
            self._require_inside(x, y)
        return self._interp(self.gx, x, y)

    def dy(self, x, y, check: bool = True):
        if check:
            self._require_inside(x, y)
        return self._interp(self.gy, x, y)

    def min_value(self) -> float:
        return float(np.min(self.values))

    def hessian_origin(self) -> tuple[float, float, float]:
        """Second central differences of the grid at the center node."""
        d = self.domain
        ic, jc = (d.Nx - 1) // 2, (d.Ny - 1) // 2
        V = self.values
        vxx = (V[ic + 1, jc] - 2.0 * V[ic, jc] + V[ic - 1, jc]) / d.hx ** 2
        vyy = (V[ic, jc + 1] - 2.0 * V[ic, jc] + V[ic, jc - 1]) / d.hy ** 2
        vxy = (V[ic + 1, jc + 1] - V[ic + 1, jc - 1]
               - V[ic - 1, jc + 1] + V[ic - 1, jc - 1]) / (4.0 * d.hx * d.hy)
        return float(vxx), float(vxy), float(vyy)

    # -- CSV ------------------------------------------------------------------

    def to_csv(self, path) -> None:
        """Row-major dump with header x,y,value (floats via repr)."""
        with open(path, "w", newline="") as f:
            f.write(",".join(FIELD_CSV_HEADER) + "\n")
            xs, ys = self.domain.xs, self.domain.ys
            for i in range(self.domain.Nx):
                xi = repr(float(xs[i]))
                for j in range(self.domain.Ny):
                    f.write(f"{xi},{float(ys[j])!r},{float(self.values[i, j])!r}\n")

    @classmethod
    def from_csv(cls, path) -> "FieldGrid":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != FIELD_CSV_HEADER:
                raise ConfigError(f"bad field CSV header in {path}: {header}")
            rows = [(float(a), float(b), float(v)) for a, b, v in reader]
        xs = sorted({row[0] for row in rows})
        ys = sorted({row[1] for row in rows})
        nx, ny = len(xs), len(ys)
        if nx * ny != len(rows):
            raise ConfigError(f"field CSV {path} is not a complete grid")
        domain = Rectangle(Lx=max(abs(xs[0]), xs[-1]), Ly=max(abs(ys[0]), ys[-1]),
                           Nx=nx, Ny=ny)
        values = np.empty((nx, ny))
        x_index = {v: k for k, v in enumerate(xs)}
        y_index = {v: k for k, v in enumerate(ys)}
        for xv, yv, val in rows:
            values[x_index[xv], y_index[yv]] = val
        return cls.from_values(domain, values)


@dataclass(frozen=True, eq=False)
class AnalyticField:
    """Closed-form scalar field with the same accessor surface as FieldGrid."""

    domain: Rectangle
    fn: object
    fn_dx: object
    fn_dy: object

    def _require_inside(self, x, y) -> None:
        ok = self.domain.contains(x, y, pad=1e-9)
        if not np.all(ok):
            raise OutOfDomain("query point outside the working rectangle")

    def value(self, x, y, check: bool = True):
        if check:
            self._require_inside(x, y)
        return self.fn(x, y)

    def dx(self, x, y, check: bool = True):
        if check:
            self._require_inside(x, y)
        return self.fn_dx(x, y)

    def dy(self, x, y, check: bool = True):
        if check:
            self._require_inside(x, y)
        return self.fn_dy(x, y)

    def min_value(self) -> float:
        X, Y = self.domain.meshgrid()
        return float(np.min(self.fn(X, Y)))

    def hessian_origin(self) -> tuple[float, float, float]:
        step = 1e-4
        f = self.fn
        vxx = (f(step, 0.0) - 2.0 * f(0.0, 0.0) + f(-step, 0.0)) / step ** 2
        vyy = (f(0.0, step) - 2.0 * f(0.0, 0.0) + f(0.0, -step)) / step ** 2
        vxy = (f(step, step) - f(step, -step) - f(-step, step)
               + f(-step, -step)) / (4.0 * step ** 2)
        return float(vxx), float(vxy), float(vyy)


@dataclass(frozen=True)
class CharacteristicTrace:
    """One backward trace from a seed to its foot on the x-axis."""

    seed: tuple[float, float]
    foot: tuple[float, float]
    tau: float
    steps: int
    delta: float | None = None
    v: float | None = None


@dataclass(frozen=True)
class _Transport:
    foot_x: np.ndarray
    w: np.ndarray
    J: np.ndarray
    tau: np.ndarray
    steps: np.ndarray


def _transport(sys: SystemSpec2D, gamma0: float, X: np.ndarray, Y: np.ndarray,
               domain: Rectangle, dt: float = DEFAULT_DT,
               max_steps: int | None = None,
               tol_gbc: float = _GBC_TOL) -> _Transport:
    """Trace every seed to the x-axis, accumulating the transport integrals.

    Integrates the joint system (x', y', w', J') =
    eps * (A1, A2, B, h_x * exp(w)) with A = (a - b*gamma, b - c*gamma) and
    eps the per-trace sign pointing toward y = 0.  On return, delta(seed) =
    s(foot)*exp(-w) and v(seed) = r(foot) - s(foot)*exp(-w)*J.
    """
    if max_steps is None:
        max_steps = DEFAULT_MAX_STEPS
    gamma0 = float(gamma0)
    X = np.asarray(X, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    n = X.size

    lim_x = INFLATE_FACTOR * domain.Lx
    lim_y = INFLATE_FACTOR * domain.Ly

    af, bf, cf = sys.a, sys.b, sys.c
    Bf = sys.B_field(gamma0)
    hxf = sys.h.d_dx

    def rhs(x, y, w):
        a_v = af(x, y)
        b_v = bf(x, y)
        c_v = cf(x, y)
        A2 = b_v - gamma0 * c_v
        if np.min(np.abs(A2)) < tol_gbc:
            k = int(np.argmin(np.abs(A2)))
            raise CharacteristicDegeneracy(
                f"|b - c*gamma| = {np.min(np.abs(A2))} below {tol_gbc} near "
                f"({float(np.ravel(x)[k] if np.ndim(x) else x)}, "
                f"{float(np.ravel(y)[k] if np.ndim(y) else y)})")
        A1 = a_v - gamma0 * b_v
        return A1, A2, Bf(x, y), hxf(x, y) * np.exp(w)

    def rk4(x, y, w, J, eps, h):
        k1x, k1y, k1w, k1j = rhs(x, y, w)
        hx2 = 0.5 * h * eps
        k2x, k2y, k2w, k2j = rhs(x + hx2 * k1x, y + hx2 * k1y, w + hx2 * k1w)
        k3x, k3y, k3w, k3j = rhs(x + hx2 * k2x, y + hx2 * k2y, w + hx2 * k2w)
        hx1 = h * eps
        k4x, k4y, k4w, k4j = rhs(x + hx1 * k3x, y + hx1 * k3y, w + hx1 * k3w)
        c = h * eps / 6.0
        return (x + c * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
                y + c * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
                w + c * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
                J + c * (k1j + 2.0 * k2j + 2.0 * k3j + k4j))

    x = X.copy()
    y = Y.copy()
    w = np.zeros(n)
    J = np.zeros(n)
    tau = np.zeros(n)
    steps = np.zeros(n, dtype=int)

    active = np.abs(Y) > EPS_EVENT
    if active.any():
        eta_seed = bf(X, Y) - gamma0 * cf(X, Y)
        eta_seed = np.broadcast_to(eta_seed, X.shape)
        if np.min(np.abs(eta_seed[active])) < tol_gbc:
            raise CharacteristicDegeneracy(
                "characteristic field is tangent to the boundary at a seed")
        eps_all = -np.sign(Y) * np.sign(eta_seed)
    else:
        eps_all = np.zeros(n)

    for _ in range(max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        x0, y0, w0, J0 = x[idx], y[idx], w[idx], J[idx]
        eps = eps_all[idx]
        x1, y1, w1, J1 = rk4(x0, y0, w0, J0, eps, dt)

        crossed = y0 * y1 <= 0.0
        if crossed.any():
            c_idx = idx[crossed]
            xc, yc, wc, Jc = x0[crossed], y0[crossed], w0[crossed], J0[crossed]
            ec = eps[crossed]
            # secant refinement of the crossing fraction theta in (0, 1]
            th_prev = np.ones(yc.shape)
            g_prev = y1[crossed]
            th = yc / (yc - g_prev)
            for _ in range(60):
                xs_, ys_, ws_, Js_ = rk4(xc, yc, wc, Jc, ec * th, dt)
                g = ys_
                done = np.abs(g) <= EPS_EVENT
                if done.all():
                    break
                denom = g - g_prev
                safe = np.abs(denom) > 0.0
                th_next = np.where(safe & ~done,
                                   th - g * (th - th_prev) / np.where(safe, denom, 1.0),
                                   th)
                th_next = np.clip(th_next, 0.0, 1.0)
                th_prev, g_prev = th, g
                th = th_next
            else:
                raise TraceEscape("y = 0 event refinement did not converge",
                                  point=(float(xc[0]), float(yc[0])))
            x[c_idx], y[c_idx] = xs_, ys_
            w[c_idx], J[c_idx] = ws_, Js_
            tau[c_idx] += th * dt
            steps[c_idx] += 1
            active[c_idx] = False

        if (~crossed).any():
            k_idx = idx[~crossed]
            x[k_idx] = x1[~crossed]
            y[k_idx] = y1[~crossed]
            w[k_idx] = w1[~crossed]
            J[k_idx] = J1[~crossed]
            tau[k_idx] += dt
            steps[k_idx] += 1
            esc = (np.abs(x[k_idx]) > lim_x) | (np.abs(y[k_idx]) > lim_y)
            if esc.any():
                b = k_idx[np.argmax(esc)]
                raise TraceEscape("characteristic left the inflated domain",
                                  point=(float(x[b]), float(y[b])))
    else:
        if active.any():
            b = int(np.argmax(active))
            raise TraceEscape(f"trace exceeded max_steps = {max_steps}",
                              point=(float(x[b]), float(y[b])))

    return _Transport(foot_x=x, w=w, J=J, tau=tau, steps=steps)


def trace_to_boundary(sys: SystemSpec2D, gamma0: float, seed,
                      dt: float = DEFAULT_DT, max_steps: int | None = None,
                      s: SmoothField2D | None = None,
                      r: SmoothField2D | None = None) -> CharacteristicTrace:
    """Trace a single seed point to the x-axis.

    When boundary profiles are supplied the transported values of delta
    (and v, if r is given too) are attached to the returned trace.
    """
    sx, sy = float(seed[0]), float(seed[1])
    res = _transport(sys, gamma0, np.array([sx]), np.array([sy]),
                     domain=sys.domain, dt=dt, max_steps=max_steps)
    foot_x = float(res.foot_x[0])
    delta = v = None
    if s is not None:
        delta = float(s(foot_x, 0.0) * np.exp(-res.w[0]))
        if r is not None:
            v = float(r(foot_x, 0.0) - s(foot_x, 0.0) * np.exp(-res.w[0]) * res.J[0])
    return CharacteristicTrace(seed=(sx, sy), foot=(foot_x, 0.0),
                               tau=float(res.tau[0]), steps=int(res.steps[0]),
                               delta=delta, v=v)


def solve_kinetic(sys: SystemSpec2D, gamma0: float, s: SmoothField2D,
                  domain: Rectangle | None = None, dt: float = DEFAULT_DT,
                  max_steps: int | None = None) -> FieldGrid:
    """Solve the kinetic transport equation for delta on the grid."""
    domain = domain or sys.domain
    X, Y = domain.meshgrid()
    res = _transport(sys, gamma0, X.ravel(), Y.ravel(), domain=domain,
                     dt=dt, max_steps=max_steps)
    delta = (np.asarray(s(res.foot_x, 0.0)) * np.exp(-res.w)).reshape(X.shape)
    if np.min(delta) <= 0.0:
        k = np.unravel_index(int(np.argmin(delta)), delta.shape)
        raise PositivityLoss("delta lost positivity", node=k,
                             value=float(delta[k]))
    return FieldGrid.from_values(domain, delta)


def solve_potential(sys: SystemSpec2D, gamma0: float, delta: FieldGrid,
                    r: SmoothField2D, domain: Rectangle | None = None,
                    dt: float = DEFAULT_DT, *,
                    s: SmoothField2D | None = None,
                    max_steps: int | None = None) -> FieldGrid:
    """Solve the potential transport equation for v on the grid.

    delta is re-transported analytically along each trace rather than
    interpolated from its grid; pass the kinetic boundary profile s to keep
    that re-transport exact (without it, the foot values fall back to the
    delta grid's boundary row).
    """
    domain = domain or delta.domain
    X, Y = domain.meshgrid()
    res = _transport(sys, gamma0, X.ravel(), Y.ravel(), domain=domain,
                     dt=dt, max_steps=max_steps)
    if s is not None:
        delta_foot = np.asarray(s(res.foot_x, 0.0), dtype=float)
    else:
        delta_foot = np.asarray(
            delta.value(np.clip(res.foot_x, -domain.Lx, domain.Lx), 0.0),
            dtype=float)
    v = (np.asarray(r(res.foot_x, 0.0)) - delta_foot * np.exp(-res.w) * res.J)
    return FieldGrid.from_values(domain, v.reshape(X.shape))


def solve_fields(sys: SystemSpec2D, gamma0: float, boundary,
                 domain: Rectangle | None = None, dt: float = DEFAULT_DT,
                 max_steps: int | None = None) -> tuple[FieldGrid, FieldGrid]:
    """Solve both transport equations in a single pass over the traces."""
    domain = domain or sys.domain
    X, Y = domain.meshgrid()
    res = _transport(sys, gamma0, X.ravel(), Y.ravel(), domain=domain,
                     dt=dt, max_steps=max_steps)
    s_foot = np.asarray(boundary.s(res.foot_x, 0.0), dtype=float)
    decay = np.exp(-res.w)
    delta = (s_foot * decay).reshape(X.shape)
    v = np.asarray(boundary.r(res.foot_x, 0.0), dtype=float) - s_foot * decay * res.J
    if np.min(delta) <= 0.0:
        k = np.unravel_index(int(np.argmin(delta)), delta.shape)
        raise PositivityLoss("delta lost positivity", node=k,
                             value=float(delta[k]))
    return (FieldGrid.from_values(domain, delta),
            FieldGrid.from_values(domain, v.reshape(X.shape)))


@dataclass(frozen=True)
class ResidualReport:
    max_abs: float
    node: tuple[int, int]
    point: tuple[float, float]

    def to_dict(self) -> dict:
        return {"max_abs": self.max_abs, "node": list(self.node),
                "point": list(self.point)}


def _residual_grid(sys: SystemSpec2D, gamma0: float, X, Y):
    a = np.asarray(sys.a(X, Y), dtype=float)
    b = np.asarray(sys.b(X, Y), dtype=float)
    c = np.asarray(sys.c(X, Y), dtype=float)
    zeta = a - gamma0 * b
    eta = b - gamma0 * c
    return zeta, eta


def _interior_report(R: np.ndarray, domain: Rectangle) -> ResidualReport:
    inner = np.abs(R[1:-1, 1:-1])
    k = np.unravel_index(int(np.argmax(inner)), inner.shape)
    node = (int(k[0]) + 1, int(k[1]) + 1)
    return ResidualReport(max_abs=float(inner[k]), node=node,
                          point=(float(domain.xs[node[0]]),
                                 float(domain.ys[node[1]])))


def residual_kinetic(sys: SystemSpec2D, gamma0: float,
                     delta: FieldGrid) -> ResidualReport:
    """Max-abs kinetic-equation residual over interior nodes."""
    X, Y = delta.domain.meshgrid()
    zeta, eta = _residual_grid(sys, gamma0, X, Y)
    B = np.asarray(sys.B_field(gamma0)(X, Y), dtype=float)
    R = zeta * delta.gx + eta * delta.gy - B * delta.values
    return _interior_report(R, delta.domain)


def residual_potential(sys: SystemSpec2D, gamma0: float, delta: FieldGrid,
                       v: FieldGrid) -> ResidualReport:
    """Max-abs potential-equation residual over interior nodes."""
    X, Y = v.domain.meshgrid()
    zeta, eta = _residual_grid(sys, gamma0, X, Y)
    hx = np.asarray(sys.h.d_dx(X, Y), dtype=float)
    R = zeta * v.gx + eta * v.gy - hx * delta.values
    return _interior_report(R, v.domain)


@dataclass(frozen=True)
class PositivityReport:
    delta_ok: bool
    delta_min: float
    delta_argmin: tuple[int, int]
    v_origin: float
    v_origin_ok: bool
    v_ok: bool
    v_min_off_origin: float
    v_argmin: tuple[int, int]
    positive_subrect: tuple[float, float]

    @property
    def ok(self) -> bool:
        return self.delta_ok and self.v_origin_ok and self.v_ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "delta_ok": self.delta_ok,
                "delta_min": self.delta_min,
                "delta_argmin": list(self.delta_argmin),
                "v_origin": self.v_origin, "v_origin_ok": self.v_origin_ok,
                "v_ok": self.v_ok, "v_min_off_origin": self.v_min_off_origin,
                "v_argmin": list(self.v_argmin),
                "positive_subrect": list(self.positive_subrect)}


def positivity_report(delta: FieldGrid, v: FieldGrid,
                      tol: float = 1e-9) -> PositivityReport:
    """Positivity certificate: delta > 0 everywhere, v > 0 off the origin.

    When the full rectangle fails, the report carries the largest centered
    sub-rectangle (scanned by shrinking both half-widths proportionally) on
    which positivity does hold.
    """
    d = delta.domain
    ic, jc = (d.Nx - 1) // 2, (d.Ny - 1) // 2

    k_dmin = np.unravel_index(int(np.argmin(delta.values)), delta.values.shape)
    delta_ok = bool(delta.values[k_dmin] > 0.0)

    v_vals = v.values
    v0 = float(v_vals[ic, jc])
    masked = v_vals.copy()
    masked[ic, jc] = np.inf
    k_vmin = np.unravel_index(int(np.argmin(masked)), masked.shape)
    v_ok = bool(masked[k_vmin] > 0.0)
    v_origin_ok = bool(abs(v0) <= tol)

    def window_ok(kx: int, ky: int) -> bool:
        sl = (slice(ic - kx, ic + kx + 1), slice(jc - ky, jc + ky + 1))
        dw = delta.values[sl]
        vw = v_vals[sl].copy()
        vw[kx, ky] = np.inf
        return bool(np.min(dw) > 0.0 and np.min(vw) > 0.0 and abs(v0) <= tol)

    kx_max, ky_max = ic, jc
    best = (0.0, 0.0)
    for kx in range(kx_max, 0, -1):
        ky = max(1, round(kx * ky_max / kx_max))
        if window_ok(kx, ky):
            best = (kx * d.hx, ky * d.hy)
            break

    return PositivityReport(
        delta_ok=delta_ok, delta_min=float(delta.values[k_dmin]),
        delta_argmin=(int(k_dmin[0]), int(k_dmin[1])),
        v_origin=v0, v_origin_ok=v_origin_ok, v_ok=v_ok,
        v_min_off_origin=float(masked[k_vmin]),
        v_argmin=(int(k_vmin[0]), int(k_vmin[1])),
        positive_subrect=best)
