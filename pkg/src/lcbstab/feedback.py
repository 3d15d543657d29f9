"""Controller assembly: Lyapunov function, dissipation rate, and feedback.

The Lyapunov candidate is

    V = 1/2 * (p . VV . p) + v,   VV = [[delta + gamma^2*l, gamma*l],
                                        [gamma*l,           l      ]],

which is positive-definite whenever delta > 0 and l > 0 (det VV = delta*l).
The feedback acting along p_y enforces dV/dt = -mu with
mu = kappa*(gamma*p_x + p_y)^2*l^2:

    lambda = -kappa*d*l - {V,H}/(d*l),    d = gamma*p_x + p_y,

with the removable singularity at d = 0 evaluated as the p_y-derivative of
the bracket (central finite difference).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .charsolve import DEFAULT_DT, FieldGrid, solve_fields
from .errors import ConfigError
from .model import Rectangle, SystemSpec2D, system_from_config, system_to_config
from .stabilize import (DEFAULT_MARGIN, BoundaryData, choose_boundary,
                        choose_gamma)

EPS_DEN = 1e-6
FD_STEP_SCALE = 1e-6


@dataclass(frozen=True)
class State:
    """Point of the four-dimensional phase space."""

    x: float
    y: float
    px: float
    py: float

    def __post_init__(self):
        for name in ("x", "y", "px", "py"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"state coordinate {name} is not finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.px, self.py])

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def _coords(state):
    """Unpack a State or any 4-sequence (scalars or lockstep arrays)."""
    if isinstance(state, State):
        return state.x, state.y, state.px, state.py
    x, y, px, py = state
    return x, y, px, py


@dataclass(frozen=True, eq=False)
class Controller:
    """Immutable bundle (system, gamma, delta, v, l, kappa).

    delta and v may be grid fields from the transport solver or any object
    with the same value/dx/dy accessor surface (e.g. closed-form fields);
    every evaluation below is pure.
    """

    system: SystemSpec2D
    gamma0: float
    delta: object
    v: object
    l: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        if not self.l > 0.0:
            raise ConfigError(f"l = {self.l} must be positive")
        if self.kappa < 0.0:
            raise ConfigError(f"kappa = {self.kappa} must be nonnegative")
        if self.delta.min_value() <= 0.0:
            raise ConfigError("delta must be positive on the domain")

    # -- scalar building blocks ------------------------------------------------

    def reconstruct_V_matrix(self, x: float, y: float,
                             check: bool = True) -> tuple[np.ndarray, bool]:
        """Kinetic-form matrix VV at (x, y) and its definiteness verdict."""
        g, l = self.gamma0, self.l
        d = float(self.delta.value(x, y, check))
        VV = np.array([[d + g * g * l, g * l], [g * l, l]])
        verdict = bool(VV[0, 0] > 0.0 and d * l > 0.0)
        return VV, verdict

    def lyapunov_value(self, state, check: bool = True):
        x, y, px, py = _coords(state)
        g, l = self.gamma0, self.l
        dv = self.delta.value(x, y, check)
        vv = self.v.value(x, y, check=False)
        return 0.5 * ((dv + g * g * l) * px * px
                      + 2.0 * g * l * px * py + l * py * py) + vv

    def lyapunov_gradient(self, state, check: bool = True):
        """(V_x, V_y, V_px, V_py): analytic in p, grid-difference in (x, y)."""
        x, y, px, py = _coords(state)
        g, l = self.gamma0, self.l
        dv = self.delta.value(x, y, check)
        ddx = self.delta.dx(x, y, check=False)
        ddy = self.delta.dy(x, y, check=False)
        vdx = self.v.dx(x, y, check=False)
        vdy = self.v.dy(x, y, check=False)
        Vx = 0.5 * ddx * px * px + vdx
        Vy = 0.5 * ddy * px * px + vdy
        Vpx = (dv + g * g * l) * px + g * l * py
        Vpy = l * (g * px + py)
        return Vx, Vy, Vpx, Vpy

    def mu_value(self, state):
        _, _, px, py = _coords(state)
        d = self.gamma0 * px + py
        return self.kappa * d * d * self.l * self.l

    def hamiltonian_value(self, state):
        x, y, px, py = _coords(state)
        s = self.system
        a = s.a(x, y)
        b = s.b(x, y)
        c = s.c(x, y)
        return 0.5 * (a * px * px + 2.0 * b * px * py + c * py * py) + s.h(x, y)

    # Both {V,H} and the Hamiltonian gradient are polynomials in (px, py)
    # once the fields are evaluated at (x, y).  The field lookups (the
    # expensive part) are therefore hoisted into _system_fields /
    # _lyap_fields so that the integrator pays for them once per stage,
    # while the finite-difference limit branch below re-evaluates only the
    # cheap polynomial combine.

    def _system_fields(self, x, y):
        s = self.system
        return (s.a(x, y), s.b(x, y), s.c(x, y),
                s.a.d_dx(x, y), s.b.d_dx(x, y), s.c.d_dx(x, y),
                s.a.d_dy(x, y), s.b.d_dy(x, y), s.c.d_dy(x, y),
                s.h.d_dx(x, y), s.h.d_dy(x, y))

    def _lyap_fields(self, x, y, check: bool = True):
        return (self.delta.value(x, y, check),
                self.delta.dx(x, y, check=False),
                self.delta.dy(x, y, check=False),
                self.v.dx(x, y, check=False),
                self.v.dy(x, y, check=False))

    @staticmethod
    def _H_grad_at(sf, px, py):
        a, b, c, ax, bx, cx, ay, by, cy, hx, hy = sf
        Hx = 0.5 * (ax * px * px + 2.0 * bx * px * py + cx * py * py) + hx
        Hy = 0.5 * (ay * px * px + 2.0 * by * px * py + cy * py * py) + hy
        return Hx, Hy, a * px + b * py, b * px + c * py

    def _bracket_at(self, sf, lf, px, py):
        g, l = self.gamma0, self.l
        dv, ddx, ddy, vdx, vdy = lf
        Hx, Hy, Hpx, Hpy = self._H_grad_at(sf, px, py)
        Vx = 0.5 * ddx * px * px + vdx
        Vy = 0.5 * ddy * px * px + vdy
        Vpx = (dv + g * g * l) * px + g * l * py
        Vpy = l * (g * px + py)
        return Vx * Hpx + Vy * Hpy - Vpx * Hx - Vpy * Hy

    def _hamiltonian_gradient(self, x, y, px, py):
        return self._H_grad_at(self._system_fields(x, y), px, py)

    def _bracket(self, x, y, px, py, check: bool = True):
        return self._bracket_at(self._system_fields(x, y),
                                self._lyap_fields(x, y, check), px, py)

    def poisson_bracket_VH(self, state, check: bool = True):
        """{V,H} = V_x H_px + V_y H_py - V_px H_x - V_py H_y."""
        x, y, px, py = _coords(state)
        return self._bracket(x, y, px, py, check)

    # -- feedback --------------------------------------------------------------

    def _lambda_batch(self, x, y, px, py, check: bool = True,
                      sf=None, lf=None):
        g, l, k = self.gamma0, self.l, self.kappa
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        if sf is None:
            sf = self._system_fields(x, y)
        if lf is None:
            lf = self._lyap_fields(x, y, check)
        d = g * px + py
        br = np.asarray(self._bracket_at(sf, lf, px, py), dtype=float)
        near = np.abs(d) < EPS_DEN
        den = np.where(near, 1.0, d) * l
        lam = -k * d * l - br / den
        if np.any(near):
            step = FD_STEP_SCALE * np.maximum(1.0, np.hypot(px, py))
            br_p = self._bracket_at(sf, lf, px, py + step)
            br_m = self._bracket_at(sf, lf, px, py - step)
            dbr = (np.asarray(br_p) - np.asarray(br_m)) / (2.0 * step)
            lam = np.where(near, -k * d * l - dbr / l, lam)
        return lam

    def lambda_value(self, state, check: bool = True) -> float:
        """Feedback gain; continuous across the mu = 0 set."""
        x, y, px, py = _coords(state)
        return float(self._lambda_batch(x, y, px, py, check))

    def lambda_quotient(self, state, check: bool = True) -> float:
        """Generic-branch value; caller guarantees |gamma*px + py| >> 0."""
        x, y, px, py = _coords(state)
        d = self.gamma0 * px + py
        br = self._bracket(x, y, px, py, check)
        return float(-self.kappa * d * self.l - br / (d * self.l))

    def lambda_limit(self, state, check: bool = True) -> float:
        """Removable-singularity branch: -kappa*d*l - (1/l)*d{V,H}/dp_y."""
        x, y, px, py = _coords(state)
        d = self.gamma0 * px + py
        step = FD_STEP_SCALE * max(1.0, math.hypot(px, py))
        dbr = (self._bracket(x, y, px, py + step, check)
               - self._bracket(x, y, px, py - step, check=False)) / (2.0 * step)
        return float(-self.kappa * d * self.l - dbr / self.l)

    def K_L_values(self, x: float, y: float, check: bool = True):
        """Chain coefficients K = (b_x - g*c_x)*delta - (b*delta_x + c*delta_y)/2
        and L = b*v_x + c*v_y."""
        s = self.system
        g = self.gamma0
        b, c = s.b(x, y), s.c(x, y)
        bx, cx = s.b.d_dx(x, y), s.c.d_dx(x, y)
        dv = self.delta.value(x, y, check)
        K = (bx - g * cx) * dv - (b * self.delta.dx(x, y, check=False)
                                  + c * self.delta.dy(x, y, check=False)) / 2.0
        L = b * self.v.dx(x, y, check=False) + c * self.v.dy(x, y, check=False)
        return K, L

    def lambda_on_set(self, x: float, y: float, px: float,
                      check: bool = True) -> float:
        """Closed-form feedback on p_y = -gamma*p_x (constant gamma).

        lambda = ((B*gamma + C)/2 + K/l)*p_x^2 + gamma*h_x + h_y - L/l.
        """
        s = self.system
        g, l = self.gamma0, self.l
        B = s.B_field(g)(x, y)
        C = s.C_field(g)(x, y)
        K, L = self.K_L_values(x, y, check)
        return float((0.5 * (B * g + C) + K / l) * px * px
                     + g * s.h.d_dx(x, y) + s.h.d_dy(x, y) - L / l)

    # -- closed loop -----------------------------------------------------------

    def _closed_loop_batch(self, x, y, px, py, check: bool = True):
        sf = self._system_fields(x, y)
        lf = self._lyap_fields(x, y, check)
        Hx, Hy, Hpx, Hpy = self._H_grad_at(sf, px, py)
        lam = self._lambda_batch(x, y, px, py, sf=sf, lf=lf)
        return Hpx, Hpy, -Hx, -Hy + lam

    def closed_loop_field(self, state, check: bool = True):
        """(x', y', px', py') = (H_px, H_py, -H_x, -H_y + lambda)."""
        x, y, px, py = _coords(state)
        out = self._closed_loop_batch(x, y, px, py, check)
        return tuple(float(c) for c in out)


def synthesize_controller(sys: SystemSpec2D, kappa: float = 1.0,
                          l: float = 1.0, margin: float = DEFAULT_MARGIN,
                          domain: Rectangle | None = None,
                          dt: float = DEFAULT_DT,
                          gamma0: float | None = None,
                          boundary=None,
                          max_steps: int | None = None):
    """Full synthesis pipeline; returns (Controller, info dict).

    gamma and boundary data are chosen constructively unless supplied; the
    transport equations are then solved on the grid and the controller
    assembled.  Residual/positivity reporting is left to the caller (the
    fields are exposed on the returned controller).
    """
    if gamma0 is None:
        choice = choose_gamma(sys, boundary_guess=boundary, margin=margin)
        gamma0 = choice.gamma0
    if boundary is None:
        boundary, gamma0 = choose_boundary(sys, gamma0, margin=margin)
    elif not isinstance(boundary, BoundaryData):
        raise ConfigError("boundary must be BoundaryData")
    delta, v = solve_fields(sys, gamma0, boundary, domain=domain, dt=dt,
                            max_steps=max_steps)
    ctrl = Controller(system=sys, gamma0=float(gamma0), delta=delta, v=v,
                      l=float(l), kappa=float(kappa))
    info = {"gamma0": float(gamma0), "boundary": boundary.to_dict(),
            "l": float(l), "kappa": float(kappa)}
    return ctrl, info


def save_controller(ctrl: Controller, path) -> None:
    """Persist gamma/kappa/l, the field grids, and the system config."""
    if not isinstance(ctrl.delta, FieldGrid) or not isinstance(ctrl.v, FieldGrid):
        raise ConfigError("only grid-backed controllers can be persisted")
    doc = {
        "gamma": float(ctrl.gamma0),
        "kappa": float(ctrl.kappa),
        "l": float(ctrl.l),
        "grid": ctrl.delta.domain.to_dict(),
        "delta": [[float(v) for v in row] for row in ctrl.delta.values],
        "v": [[float(v) for v in row] for row in ctrl.v.values],
        "system": system_to_config(ctrl.system),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_controller(path) -> Controller:
    with open(path) as f:
        doc = json.load(f)
    try:
        grid = Rectangle.from_dict(doc["grid"])
        sys = system_from_config(doc["system"])
        delta = FieldGrid.from_values(grid, np.array(doc["delta"], dtype=float))
        v = FieldGrid.from_values(grid, np.array(doc["v"], dtype=float))
        return Controller(system=sys, gamma0=float(doc["gamma"]),
                          delta=delta, v=v, l=float(doc["l"]),
                          kappa=float(doc["kappa"]))
    except KeyError as exc:
        raise ConfigError(f"controller file {path} is missing key {exc}") from exc
