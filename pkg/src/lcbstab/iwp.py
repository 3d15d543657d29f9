"""Inertia wheel pendulum: constructors, closed-form oracles, constraints.

The plant has constant inverse inertia (a, b, c) and potential
h = M*(1 + cos x), so both transport equations integrate in closed form:
with Upsilon = (a - b*gamma)/(b - c*gamma) and u = x - Upsilon*y,

    delta(x, y) = s(u)
    v(x, y)     = (M*s(u)/(a - b*gamma)) * (cos x - cos u) + r(u).

These serve as the oracle against which the grid solver is validated, and
the printed-inequality constraints specialize the general synthesis
inequalities to this plant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .charsolve import AnalyticField
from .errors import ConfigError, SingularQuotient
from .feedback import Controller, synthesize_controller
from .model import DEFAULT_DOMAIN, Rectangle, SmoothField2D, SystemSpec2D
from .stabilize import BoundaryData, choose_gamma

REFERENCE_ABCM = (2.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class IwpParams:
    a: float
    b: float
    c: float
    M: float

    def __post_init__(self):
        for name in ("a", "b", "c", "M"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} = {getattr(self, name)} must be positive")
        if not self.a * self.c - self.b ** 2 > 0.0:
            raise ConfigError(
                f"inertia determinant a*c - b^2 = {self.a * self.c - self.b ** 2}"
                " must be positive")

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "M": self.M}


def iwp_system(p: IwpParams, domain: Rectangle | None = None) -> SystemSpec2D:
    """Constant-inertia plant with the wrapped pendulum potential."""
    return SystemSpec2D(
        a=SmoothField2D.constant(p.a),
        b=SmoothField2D.constant(p.b),
        c=SmoothField2D.constant(p.c),
        h=SmoothField2D.pendulum_potential(p.M),
        domain=domain or DEFAULT_DOMAIN,
        periodic=True,
    )


def _zeta_eta(p: IwpParams, gamma0: float) -> tuple[float, float]:
    return p.a - p.b * gamma0, p.b - p.c * gamma0


def _require_oracle_pre(p: IwpParams, gamma0: float) -> None:
    if not gamma0 > p.a / p.b:
        raise ConfigError(f"gamma = {gamma0} must exceed a/b = {p.a / p.b}")
    if abs(gamma0 - p.b / p.c) < 1e-12:
        raise ConfigError(f"gamma = {gamma0} coincides with b/c = {p.b / p.c}")


def oracle_delta(p: IwpParams, gamma0: float, s: SmoothField2D, x, y):
    """Closed-form kinetic solution delta = s(x - Upsilon*y)."""
    _require_oracle_pre(p, gamma0)
    zeta, eta = _zeta_eta(p, gamma0)
    u = np.asarray(x, dtype=float) - (zeta / eta) * np.asarray(y, dtype=float)
    return s(u, 0.0)


def oracle_v(p: IwpParams, gamma0: float, s: SmoothField2D,
             r: SmoothField2D, x, y):
    """Closed-form potential solution on the same characteristics."""
    _require_oracle_pre(p, gamma0)
    zeta, eta = _zeta_eta(p, gamma0)
    x = np.asarray(x, dtype=float)
    u = x - (zeta / eta) * np.asarray(y, dtype=float)
    return (p.M * s(u, 0.0) / zeta) * (np.cos(x) - np.cos(u)) + r(u, 0.0)


def _profile_1d(f: SmoothField2D):
    """Restrict an x-only field to a fast single-variable evaluator."""
    if f.coeffs.shape[1] != 1:
        raise ConfigError("boundary profile must not depend on y")
    coef = f.coeffs[:, 0].copy()
    ca, sa = f.cos_amp, f.sin_amp

    def ev(u):
        out = npoly.polyval(u, coef)
        if ca != 0.0:
            out = out + ca * np.cos(u)
        if sa != 0.0:
            out = out + sa * np.sin(u)
        return out

    return ev


def iwp_oracle_fields(p: IwpParams, gamma0: float, s: SmoothField2D,
                      r: SmoothField2D,
                      domain: Rectangle | None = None
                      ) -> tuple[AnalyticField, AnalyticField]:
    """The closed-form solutions as fields with exact partial derivatives."""
    _require_oracle_pre(p, gamma0)
    zeta, eta = _zeta_eta(p, gamma0)
    ups = zeta / eta
    s1d, ds1d = _profile_1d(s), _profile_1d(s.d_dx)
    r1d, dr1d = _profile_1d(r), _profile_1d(r.d_dx)
    domain = domain or DEFAULT_DOMAIN
    M = p.M

    def u_of(x, y):
        return np.asarray(x, dtype=float) - ups * np.asarray(y, dtype=float)

    def d_val(x, y):
        return s1d(u_of(x, y))

    def d_dx(x, y):
        return ds1d(u_of(x, y))

    def d_dy(x, y):
        return -ups * ds1d(u_of(x, y))

    def v_val(x, y):
        u = u_of(x, y)
        x = np.asarray(x, dtype=float)
        return (M * s1d(u) / zeta) * (np.cos(x) - np.cos(u)) + r1d(u)

    def v_dx(x, y):
        u = u_of(x, y)
        x = np.asarray(x, dtype=float)
        return ((M / zeta) * (ds1d(u) * (np.cos(x) - np.cos(u))
                              + s1d(u) * (np.sin(u) - np.sin(x)))
                + dr1d(u))

    def v_dy(x, y):
        u = u_of(x, y)
        cosdiff = np.cos(np.asarray(x, dtype=float)) - np.cos(u)
        return -ups * ((M / zeta) * (ds1d(u) * cosdiff + s1d(u) * np.sin(u))
                       + dr1d(u))

    delta = AnalyticField(domain=domain, fn=d_val, fn_dx=d_dx, fn_dy=d_dy)
    v = AnalyticField(domain=domain, fn=v_val, fn_dx=v_dx, fn_dy=v_dy)
    return delta, v


def f1_lower_bound(p: IwpParams, gamma0: float, s0: float) -> float:
    """Strict lower bound -M*s0/(a - b*gamma) for r''(0)."""
    zeta, _ = _zeta_eta(p, gamma0)
    if zeta == 0.0:
        raise SingularQuotient("a - b*gamma vanishes")
    return -p.M * s0 / zeta


def f2_forbidden_gamma(p: IwpParams, gamma0: float, s0: float,
                       r2: float, tol: float = 1e-12) -> float:
    """Forbidden gamma value for this plant in closed form.

    Equals the general Hessian-quotient forbidden value specialized to
    constant inertia and the wrapped potential.
    """
    zeta, eta = _zeta_eta(p, gamma0)
    a, b, c, M = p.a, p.b, p.c, p.M
    core = M * s0 + zeta * r2
    num = (eta ** 2 * a * b * r2 - eta * core * (a * c + b * b)
           + b * c * zeta * M * s0 + b * c * zeta ** 2 * r2)
    den = (eta ** 2 * b * b * r2 - 2.0 * eta * core * b * c
           + c * c * zeta * M * s0 + c * c * zeta ** 2 * r2)
    if abs(den) < tol:
        raise SingularQuotient(f"forbidden-value denominator {den} is singular")
    return num / den


@dataclass(frozen=True)
class IwpConstraintReport:
    gamma_lower: float
    gamma_ok: bool
    f1_bound: float
    f1_ok: bool
    s1_ok: bool
    f2_forbidden: float | None
    f2_ok: bool

    @property
    def ok(self) -> bool:
        return self.gamma_ok and self.f1_ok and self.s1_ok and self.f2_ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "gamma_lower": self.gamma_lower,
                "gamma_ok": self.gamma_ok, "f1_bound": self.f1_bound,
                "f1_ok": self.f1_ok, "s1_ok": self.s1_ok,
                "f2_forbidden": self.f2_forbidden, "f2_ok": self.f2_ok}


def iwp_constraints(p: IwpParams, gamma0: float, s0: float, s1: float,
                    r2: float, tol: float = 1e-9) -> IwpConstraintReport:
    """Check every printed inequality for this plant (report, never raises)."""
    gamma_lower = p.a / p.b
    gamma_ok = bool(gamma0 > gamma_lower + tol)
    try:
        f1 = f1_lower_bound(p, gamma0, s0)
        f1_ok = bool(r2 > f1 + tol)
    except SingularQuotient:
        f1 = float("nan")
        f1_ok = False
    s1_ok = bool(abs(s1) > tol)
    try:
        f2 = f2_forbidden_gamma(p, gamma0, s0, r2)
        f2_ok = bool(abs(gamma0 - f2) > tol)
    except SingularQuotient:
        f2 = None
        f2_ok = False
    return IwpConstraintReport(gamma_lower=float(gamma_lower),
                               gamma_ok=gamma_ok, f1_bound=float(f1),
                               f1_ok=f1_ok, s1_ok=s1_ok, f2_forbidden=f2,
                               f2_ok=f2_ok)


@dataclass(frozen=True)
class ReferenceInstance:
    """The fully pinned worked instance used across tests and docs.

    (a, b, c, M) = (2, 1, 1, 1), gamma = 3, s = 1 + 0.1x, r = x^2,
    kappa = 1, l = 1 on the default rectangle.
    """

    params: IwpParams
    system: SystemSpec2D
    gamma0: float
    boundary: BoundaryData
    kappa: float = 1.0
    l: float = 1.0

    def oracle_fields(self, domain: Rectangle | None = None):
        return iwp_oracle_fields(self.params, self.gamma0, self.boundary.s,
                                 self.boundary.r,
                                 domain=domain or self.system.domain)

    def controller(self, backing: str = "grid",
                   domain: Rectangle | None = None, dt: float = 1e-3,
                   kappa: float | None = None, l: float | None = None) -> Controller:
        kappa = self.kappa if kappa is None else kappa
        l = self.l if l is None else l
        if backing == "oracle":
            delta, v = self.oracle_fields(domain)
            return Controller(system=self.system, gamma0=self.gamma0,
                              delta=delta, v=v, l=l, kappa=kappa)
        if backing != "grid":
            raise ConfigError(f"unknown backing {backing!r}")
        ctrl, _ = synthesize_controller(self.system, kappa=kappa, l=l,
                                        domain=domain, dt=dt,
                                        gamma0=self.gamma0,
                                        boundary=self.boundary)
        return ctrl


def reference_instance(domain: Rectangle | None = None) -> ReferenceInstance:
    """Construct the pinned instance, with gamma chosen constructively."""
    p = IwpParams(*REFERENCE_ABCM)
    sys = iwp_system(p, domain=domain)
    gamma0 = choose_gamma(sys).gamma0
    s = SmoothField2D.linear_x(1.0, 0.1)
    r = SmoothField2D([[0.0], [0.0], [1.0]])
    boundary = BoundaryData(s=s, r=r, s0=1.0, ds0=0.1, r0=0.0, dr0=0.0,
                            ddr0=2.0)
    return ReferenceInstance(params=p, system=sys, gamma0=gamma0,
                             boundary=boundary)
