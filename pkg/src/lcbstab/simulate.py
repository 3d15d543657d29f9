"""Closed-loop integration and Lyapunov-decrease certification.

Fixed-step RK4 on the controlled vector field, with per-sample diagnostics
(V, mu, lambda) recorded so that both defining properties of the design —
V non-increasing and dV/dt = -mu — can be verified directly from data.
Batch runs integrate many initial conditions in numpy lockstep and keep only
streaming summaries, which is what makes long-horizon multi-start
certification affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IntegrationBlowup, OutOfDomain
from .feedback import Controller, State, _coords

TRAJ_HEADER = ("t", "x", "y", "px", "py", "V", "mu", "lambda", "dVdt")
DEFAULT_T_FINAL = 200.0
DEFAULT_RADIUS = 1e-3
TOL_MONO = 1e-9


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled closed-loop run with Lyapunov diagnostics."""

    t: np.ndarray
    states: np.ndarray  # (n, 4) rows (x, y, px, py)
    V: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    truncated: bool = False
    marker: str | None = None

    def __post_init__(self):
        n = self.t.size
        if self.states.shape != (n, 4):
            raise ConfigError("trajectory arrays are inconsistent")
        if n >= 2 and not np.all(np.diff(self.t) > 0.0):
            raise ConfigError("time stamps must be strictly increasing")

    @property
    def dVdt(self) -> np.ndarray:
        if self.t.size < 2:
            return np.zeros_like(self.V)
        return np.gradient(self.V, self.t)

    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def final_norm(self) -> float:
        return float(np.linalg.norm(self.states[-1]))

    def to_csv(self, path, decimate: int = 1) -> None:
        """Write t,x,y,px,py,V,mu,lambda,dVdt rows, keeping the last sample."""
        if decimate < 1:
            raise ConfigError(f"decimate must be >= 1, got {decimate}")
        n = self.t.size
        idx = list(range(0, n, decimate))
        if idx[-1] != n - 1:
            idx.append(n - 1)
        dvdt = self.dVdt
        with open(path, "w", newline="") as f:
            f.write(",".join(TRAJ_HEADER) + "\n")
            for k in idx:
                x, y, px, py = self.states[k]
                row = (self.t[k], x, y, px, py, self.V[k], self.mu[k],
                       self.lam[k], dvdt[k])
                f.write(",".join(repr(float(val)) for val in row) + "\n")


@dataclass(frozen=True)
class DecreaseReport:
    """Monotonicity and dV/dt = -mu audit of a trajectory."""

    monotone_ok: bool
    max_increase: float
    max_identity_residual: float
    identity_ok: bool
    tol: float
    tol_mono: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.identity_ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "monotone_ok": self.monotone_ok,
                "max_increase": self.max_increase,
                "max_identity_residual": self.max_identity_residual,
                "identity_ok": self.identity_ok, "tol": self.tol,
                "tol_mono": self.tol_mono, "n_samples": self.n_samples}


def _rhs(ctrl: Controller, x, y, px, py, open_loop: bool):
    if open_loop:
        Hx, Hy, Hpx, Hpy = ctrl._hamiltonian_gradient(x, y, px, py)
        return Hpx, Hpy, -Hx, -Hy
    return ctrl._closed_loop_batch(x, y, px, py, check=False)


def _rk4(ctrl: Controller, x, y, px, py, dt: float, open_loop: bool):
    k1 = _rhs(ctrl, x, y, px, py, open_loop)
    h2 = 0.5 * dt
    k2 = _rhs(ctrl, x + h2 * k1[0], y + h2 * k1[1],
              px + h2 * k1[2], py + h2 * k1[3], open_loop)
    k3 = _rhs(ctrl, x + h2 * k2[0], y + h2 * k2[1],
              px + h2 * k2[2], py + h2 * k2[3], open_loop)
    k4 = _rhs(ctrl, x + dt * k3[0], y + dt * k3[1],
              px + dt * k3[2], py + dt * k3[3], open_loop)
    c = dt / 6.0
    return (x + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            px + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            py + c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]))


def integrate(ctrl: Controller, ic, t_final: float, dt: float = 1e-3,
              open_loop: bool = False) -> Trajectory:
    """Fixed-step RK4 run from ic, truncating (with marker) on domain exit."""
    x0, y0, px0, py0 = _coords(ic)
    domain = ctrl.delta.domain
    if not domain.contains(x0, y0, pad=1e-9):
        raise OutOfDomain(f"initial condition ({x0}, {y0}) outside the field domain")
    if not dt > 0.0:
        raise ConfigError(f"dt must be positive, got {dt}")
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise ConfigError(f"t_final = {t_final} shorter than one step")

    ts = [0.0]
    states = [(x0, y0, px0, py0)]
    x, y, px, py = (np.array([v]) for v in (x0, y0, px0, py0))
    truncated = False
    marker = None
    for k in range(1, n_steps + 1):
        xn, yn, pxn, pyn = _rk4(ctrl, x, y, px, py, dt, open_loop)
        vals = np.concatenate([xn, yn, pxn, pyn])
        if not np.all(np.isfinite(vals)):
            raise IntegrationBlowup(
                "non-finite state during integration",
                last_state=tuple(float(v[0]) for v in (x, y, px, py)),
                t=(k - 1) * dt)
        if not domain.contains(float(xn[0]), float(yn[0]), pad=1e-9):
            truncated = True
            marker = "OutOfDomain"
            break
        x, y, px, py = xn, yn, pxn, pyn
        ts.append(k * dt)
        states.append((float(x[0]), float(y[0]), float(px[0]), float(py[0])))

    arr = np.array(states)
    t = np.array(ts)
    xs, ys, pxs, pys = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    V = np.asarray(ctrl.lyapunov_value((xs, ys, pxs, pys), check=False),
                   dtype=float)
    mu = np.asarray(ctrl.mu_value((xs, ys, pxs, pys)), dtype=float)
    if open_loop:
        lam = np.zeros_like(V)
    else:
        lam = np.asarray(ctrl._lambda_batch(xs, ys, pxs, pys, check=False),
                         dtype=float)
    return Trajectory(t=t, states=arr, V=V, mu=mu, lam=lam,
                      truncated=truncated, marker=marker)


def verify_decrease(traj: Trajectory, tol: float = 1e-5,
                    tol_mono: float = TOL_MONO) -> DecreaseReport:
    """Audit V(t_{k+1}) <= V(t_k) + tol_mono and |dV/dt + mu| <= tol."""
    n = traj.t.size
    if n < 3:
        raise ConfigError("trajectory must have at least 3 samples")
    diffs = np.diff(traj.V)
    max_inc = float(np.max(diffs))
    resid = traj.dVdt[1:-1] + traj.mu[1:-1]
    max_resid = float(np.max(np.abs(resid)))
    return DecreaseReport(monotone_ok=bool(max_inc <= tol_mono),
                          max_increase=max_inc,
                          max_identity_residual=max_resid,
                          identity_ok=bool(max_resid <= tol),
                          tol=tol, tol_mono=tol_mono, n_samples=n)


@dataclass(frozen=True)
class RunSummary:
    """Streaming summary of one batch run (no stored trajectory)."""

    index: int
    ic: tuple[float, float, float, float]
    error: str | None
    truncated: bool
    n_steps: int
    final_state: tuple[float, float, float, float] | None
    final_norm: float | None
    converged: bool
    decrease: DecreaseReport | None

    def to_dict(self) -> dict:
        return {"index": self.index, "ic": list(self.ic),
                "error": self.error, "truncated": self.truncated,
                "n_steps": self.n_steps,
                "final_state": (None if self.final_state is None
                                else list(self.final_state)),
                "final_norm": self.final_norm, "converged": self.converged,
                "decrease": (None if self.decrease is None
                             else self.decrease.to_dict())}


def sample_ball_ics(n: int, radius: float = 0.2, seed: int = 42) -> list[State]:
    """n points uniform in the phase-space ball of the given radius."""
    if n < 0:
        raise ConfigError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, 4))
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0.0] = 1.0
    scale = radius * rng.random(n) ** 0.25
    pts = g / norms[:, None] * scale[:, None]
    return [State(*map(float, p)) for p in pts]


def batch_simulate(ctrl: Controller, ics, t_final: float = DEFAULT_T_FINAL,
                   dt: float = 1e-3, radius: float = DEFAULT_RADIUS,
                   tol: float = 1e-5, tol_mono: float = TOL_MONO) -> list[RunSummary]:
    """Lockstep RK4 over many initial conditions with streaming audits.

    Per-run failures (bad IC, domain exit, blow-up) are collected in the
    summaries without aborting the batch.
    """
    ics = list(ics)
    domain = ctrl.delta.domain
    coords = []
    errors: dict[int, tuple[str, tuple]] = {}
    for i, ic in enumerate(ics):
        try:
            c = tuple(float(v) for v in _coords(ic))
        except (TypeError, ValueError):
            errors[i] = ("ConfigError: malformed initial condition",
                         (math.nan,) * 4)
            continue
        if not all(math.isfinite(v) for v in c):
            errors[i] = ("ConfigError: non-finite initial condition", c)
        elif not domain.contains(c[0], c[1], pad=1e-9):
            errors[i] = ("OutOfDomain: initial condition outside field domain", c)
        else:
            coords.append((i, c))

    results: list[RunSummary | None] = [None] * len(ics)
    for i, (msg, ic_t) in errors.items():
        results[i] = RunSummary(index=i, ic=ic_t, error=msg, truncated=False,
                                n_steps=0, final_state=None, final_norm=None,
                                converged=False, decrease=None)
    if not coords:
        return [r for r in results if r is not None]

    idx = np.array([i for i, _ in coords])
    arr = np.array([c for _, c in coords])
    m = arr.shape[0]
    x, y, px, py = arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy()

    n_steps = int(round(t_final / dt))
    active = np.ones(m, dtype=bool)
    truncated = np.zeros(m, dtype=bool)
    blown = np.zeros(m, dtype=bool)
    steps_done = np.zeros(m, dtype=int)

    def v_mu(xv, yv, pv, qv):
        V = np.asarray(ctrl.lyapunov_value((xv, yv, pv, qv), check=False),
                       dtype=float)
        mu = np.asarray(ctrl.mu_value((xv, yv, pv, qv)), dtype=float)
        return V, mu

    V_pp, _ = v_mu(x, y, px, py)      # V at k-2
    V_p = V_pp.copy()                 # V at k-1
    mu_p = np.asarray(ctrl.mu_value((x, y, px, py)), dtype=float)
    max_inc = np.full(m, -np.inf)
    max_resid = np.zeros(m)
    n_audited = np.ones(m, dtype=int)

    for k in range(1, n_steps + 1):
        if not active.any():
            break
        sub = np.nonzero(active)[0]
        xn, yn, pxn, pyn = _rk4(ctrl, x[sub], y[sub], px[sub], py[sub], dt,
                                open_loop=False)
        finite = (np.isfinite(xn) & np.isfinite(yn)
                  & np.isfinite(pxn) & np.isfinite(pyn))
        inside = domain.contains(xn, yn, pad=1e-9) & finite
        bad = ~inside
        if bad.any():
            b = sub[bad]
            blown[b] |= ~finite[bad]
            truncated[b] |= finite[bad]
            active[b] = False
            sub = sub[inside]
            if sub.size == 0:
                continue
            xn, yn, pxn, pyn = xn[inside], yn[inside], pxn[inside], pyn[inside]
        x[sub], y[sub], px[sub], py[sub] = xn, yn, pxn, pyn
        steps_done[sub] = k

        V_k, mu_k = v_mu(xn, yn, pxn, pyn)
        max_inc[sub] = np.maximum(max_inc[sub], V_k - V_p[sub])
        if k >= 2:
            resid = np.abs((V_k - V_pp[sub]) / (2.0 * dt) + mu_p[sub])
            max_resid[sub] = np.maximum(max_resid[sub], resid)
        V_pp[sub] = V_p[sub]
        V_p[sub] = V_k
        mu_p[sub] = mu_k
        n_audited[sub] += 1

    for row, i in enumerate(idx):
        err = None
        if blown[row]:
            err = "IntegrationBlowup: non-finite state"
        final = (float(x[row]), float(y[row]), float(px[row]), float(py[row]))
        fnorm = float(np.linalg.norm(final))
        mi = float(max_inc[row])
        if not math.isfinite(mi):
            mi = 0.0
        report = DecreaseReport(
            monotone_ok=bool(mi <= tol_mono),
            max_increase=mi,
            max_identity_residual=float(max_resid[row]),
            identity_ok=bool(max_resid[row] <= tol),
            tol=tol, tol_mono=tol_mono, n_samples=int(n_audited[row]))
        results[int(i)] = RunSummary(
            index=int(i), ic=tuple(map(float, arr[row])), error=err,
            truncated=bool(truncated[row]), n_steps=int(steps_done[row]),
            final_state=final, final_norm=fnorm,
            converged=bool(err is None and not truncated[row]
                           and fnorm <= radius),
            decrease=report)
    return [r for r in results if r is not None]
