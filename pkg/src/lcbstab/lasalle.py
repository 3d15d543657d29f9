"""Asymptotic-stability certificate via the sampled invariance chain.

On the dissipation-free set p_y = -gamma*p_x, trajectories of the closed
loop can only persist where a cascade of scalar equations holds:

    S1:  K(x, y) p_x^2 - L(x, y) = 0
    S2:  S1  and  (d/dt of the S1 equation) / p_x = 0
    S3:  S2  and  h_x(x, y) = 0

with K = (b_x - gamma*c_x)*delta - (b*delta_x + c*delta_y)/2 and
L = b*v_x + c*v_y.  The scalar certificates K(0) != 0, grad L(0) != 0 and
the forbidden-gamma clearance collapse the chain to the origin; the scan
corroborates this by flagging every grid sample that satisfies the chain
equations within tolerance and measuring how far the flagged set spreads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconclusiveScan
from .feedback import Controller
from .model import SystemSpec2D
from .stabilize import BoundaryData, gamma_forbidden_l2, l1_forbidden_ratio

DEFAULT_CHAIN_TOL = 1e-3
DEFAULT_CHAIN_RADIUS = 5e-2
DEFAULT_PX_SAMPLES = 41
SCALAR_TOL = 1e-4
_MAX_LISTED = 4096


@dataclass(frozen=True)
class LaSalleReport:
    K0: float
    gradL0: tuple[float, float]
    M: tuple[tuple[float, float], tuple[float, float]]
    l1_ok: bool
    l2_ok: bool
    gradL0_nonzero: bool
    l2_forbidden: float | None
    s1_count: int
    s2_count: int
    s3_count: int
    max_s2_distance: float
    max_s3_distance: float
    chain_samples: tuple
    tol: float
    chain_radius: float
    verdict: bool

    def to_dict(self) -> dict:
        return {
            "K0": self.K0, "gradL0": list(self.gradL0),
            "M": [list(row) for row in self.M],
            "l1_ok": self.l1_ok, "l2_ok": self.l2_ok,
            "gradL0_nonzero": self.gradL0_nonzero,
            "l2_forbidden": self.l2_forbidden,
            "s1_count": self.s1_count, "s2_count": self.s2_count,
            "s3_count": self.s3_count,
            "max_s2_distance": self.max_s2_distance,
            "max_s3_distance": self.max_s3_distance,
            "chain_samples": [list(s) for s in self.chain_samples],
            "tol": self.tol, "chain_radius": self.chain_radius,
            "verdict": self.verdict,
        }


def K_L_values(ctrl: Controller, x: float, y: float):
    """Chain coefficients (K, L) at a point (grid-differenced fields)."""
    return ctrl.K_L_values(x, y)


def l1_check(sys: SystemSpec2D, gamma0: float, boundary: BoundaryData,
             tol: float = 1e-9) -> tuple[float, bool]:
    """Forbidden slope ratio for s'(0)/s(0); ok iff the boundary clears it.

    Clearing the ratio is equivalent to K(0) != 0.
    """
    ratio = l1_forbidden_ratio(sys, gamma0)
    ok = bool(abs(boundary.ds0 / boundary.s0 - ratio) > tol)
    return float(ratio), ok


def delta_y_origin(sys: SystemSpec2D, gamma0: float,
                   boundary: BoundaryData) -> float:
    """delta_y(0) = (B(0)*s0 - zeta*s'(0)) / eta from the kinetic equation."""
    a0, b0, c0 = sys.origin_metric()
    zeta = a0 - b0 * gamma0
    eta = b0 - c0 * gamma0
    B0 = float(sys.B_field(gamma0)(0.0, 0.0))
    return (B0 * boundary.s0 - zeta * boundary.ds0) / eta


def K0_from_boundary(sys: SystemSpec2D, gamma0: float,
                     boundary: BoundaryData) -> float:
    """Closed-form K(0) from the boundary jet (no solved fields needed)."""
    a0, b0, c0 = sys.origin_metric()
    bx0 = float(sys.b.d_dx(0.0, 0.0))
    cx0 = float(sys.c.d_dx(0.0, 0.0))
    dy0 = delta_y_origin(sys, gamma0, boundary)
    return float((bx0 - gamma0 * cx0) * boundary.s0
                 - (b0 * boundary.ds0 + c0 * dy0) / 2.0)


def l2_from_M(sys: SystemSpec2D, gamma0: float, s0: float, r2: float,
              tol: float = 1e-9) -> tuple[float, bool]:
    """Forbidden gamma from the origin Hessian quotient, with the verdict."""
    forbidden = gamma_forbidden_l2(sys, gamma0, s0, r2)
    return float(forbidden), bool(abs(gamma0 - forbidden) > tol)


def _l2_from_matrix(sys: SystemSpec2D, gamma0: float, M: np.ndarray,
                    tol: float = 1e-9):
    a0, b0, c0 = sys.origin_metric()
    ab = np.array([a0, b0])
    bc = np.array([b0, c0])
    den = float(bc @ M @ bc)
    if abs(den) < 1e-12:
        return None, False
    forbidden = float(ab @ M @ bc) / den
    return forbidden, bool(abs(gamma0 - forbidden) > tol)


def chain_scan(ctrl: Controller, sys: SystemSpec2D | None = None,
               tol: float = DEFAULT_CHAIN_TOL,
               chain_radius: float = DEFAULT_CHAIN_RADIUS,
               n_px: int = DEFAULT_PX_SAMPLES, px_max: float = 1.0,
               scalar_tol: float = SCALAR_TOL) -> LaSalleReport:
    """Sample the chain equations over grid x momentum and assemble the report.

    The verdict combines the scalar certificates (K(0) != 0, grad L(0) != 0,
    forbidden-gamma clearance) with localization: every sample passing all
    three chain equations must lie within chain_radius of the origin.
    """
    sys = sys or ctrl.system
    g = ctrl.gamma0
    domain = ctrl.delta.domain
    X, Y = domain.meshgrid()

    a = np.asarray(sys.a(X, Y), dtype=float)
    b = np.asarray(sys.b(X, Y), dtype=float)
    c = np.asarray(sys.c(X, Y), dtype=float)
    bx = np.asarray(sys.b.d_dx(X, Y), dtype=float)
    cx = np.asarray(sys.c.d_dx(X, Y), dtype=float)
    zeta = a - g * b
    eta = b - g * c
    B = np.asarray(sys.B_field(g)(X, Y), dtype=float)
    hx = np.asarray(sys.h.d_dx(X, Y), dtype=float)

    dv = np.asarray(ctrl.delta.value(X, Y, check=False), dtype=float)
    ddx = np.asarray(ctrl.delta.dx(X, Y, check=False), dtype=float)
    ddy = np.asarray(ctrl.delta.dy(X, Y, check=False), dtype=float)
    vdx = np.asarray(ctrl.v.dx(X, Y, check=False), dtype=float)
    vdy = np.asarray(ctrl.v.dy(X, Y, check=False), dtype=float)

    K = (bx - g * cx) * dv - (b * ddx + c * ddy) / 2.0
    L = b * vdx + c * vdy
    Kx, Ky = np.gradient(K, domain.xs, domain.ys, edge_order=2)
    Lx, Ly = np.gradient(L, domain.xs, domain.ys, edge_order=2)
    le_a = zeta * Kx + eta * Ky - K * B
    le_b = -(zeta * Lx + eta * Ly + 2.0 * K * hx)

    px = np.linspace(-px_max, px_max, n_px)
    px2 = px * px
    s1 = np.abs(K[..., None] * px2 - L[..., None]) <= tol
    le = le_a[..., None] * px2 + le_b[..., None]
    s2 = s1 & (np.abs(le * px) <= tol)
    s3 = s2 & (np.abs(hx)[..., None] <= tol)

    s1_count = int(np.count_nonzero(s1))
    if s1_count == 0:
        raise InconclusiveScan(
            f"no sample satisfies the first chain equation at tol = {tol}")

    dist2 = (X * X + Y * Y)[..., None] + (1.0 + g * g) * px2
    dist = np.sqrt(dist2)

    def _subset(mask):
        if not mask.any():
            return 0, 0.0, ()
        count = int(np.count_nonzero(mask))
        dmax = float(np.max(dist[mask]))
        return count, dmax, mask

    s2_count, max_s2, _ = _subset(s2)
    s3_count, max_s3, _ = _subset(s3)

    samples = []
    if s3.any():
        ii, jj, kk = np.nonzero(s3)
        order = np.argsort(dist[ii, jj, kk])[::-1]
        for n in order[:_MAX_LISTED]:
            i, j, k = ii[n], jj[n], kk[n]
            samples.append((float(X[i, j]), float(Y[i, j]), float(px[k]),
                            float(dist[i, j, k])))

    K0, _ = ctrl.K_L_values(0.0, 0.0, check=False)
    vxx, vxy, vyy = ctrl.v.hessian_origin()
    M = np.array([[vxx, vxy], [vxy, vyy]])
    a0, b0, c0 = sys.origin_metric()
    gradL0 = M @ np.array([b0, c0])

    l1_ok = bool(abs(K0) > scalar_tol)
    grad_ok = bool(np.linalg.norm(gradL0) > scalar_tol)
    l2_forbidden, l2_ok = _l2_from_matrix(sys, g, M)

    verdict = bool(l1_ok and l2_ok and grad_ok
                   and s3_count > 0 and max_s3 <= chain_radius)

    return LaSalleReport(
        K0=float(K0), gradL0=(float(gradL0[0]), float(gradL0[1])),
        M=((float(vxx), float(vxy)), (float(vxy), float(vyy))),
        l1_ok=l1_ok, l2_ok=l2_ok, gradL0_nonzero=grad_ok,
        l2_forbidden=l2_forbidden,
        s1_count=s1_count, s2_count=s2_count, s3_count=s3_count,
        max_s2_distance=max_s2, max_s3_distance=max_s3,
        chain_samples=tuple(samples), tol=tol, chain_radius=chain_radius,
        verdict=verdict)
