"""Two-degree-of-freedom simple Hamiltonian plants in an actuator-adapted chart.

The plant is

    H(x, y, p_x, p_y) = 1/2 (a p_x^2 + 2 b p_x p_y + c p_y^2) + h(x, y)

where (a, b, c) are the entries of the inverse mass matrix and h is the
potential, all expressed in coordinates centered at the equilibrium with the
actuated direction along y.  Fields are closed-form (bivariate polynomial
plus an optional cos(x)/sin(x) pair), so every derivative up to second order
used downstream is exact rather than finite-differenced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConfigError, EvaluationError

MAX_POLY_DEGREE = 8


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SmoothField2D:
    """Bivariate polynomial plus an optional single-frequency trig pair in x.

    value(x, y) = sum_ij coeffs[i, j] x^i y^j + cos_amp*cos(x) + sin_amp*sin(x)

    ``coeffs[i, j]`` multiplies x^i y^j (row index = x power).  The class is
    closed under d/dx, d/dy and linear combination, which keeps every
    derivative the synthesis formulas need in closed form.
    """

    coeffs: np.ndarray = field(default_factory=lambda: _freeze([[0.0]]))
    cos_amp: float = 0.0
    sin_amp: float = 0.0

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 2:
            raise ConfigError("polynomial coefficient table must be 2-D")
        if c.shape[0] > MAX_POLY_DEGREE + 1 or c.shape[1] > MAX_POLY_DEGREE + 1:
            raise ConfigError(
                f"polynomial degree exceeds {MAX_POLY_DEGREE}: table shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ConfigError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", _freeze(c))
        object.__setattr__(self, "cos_amp", float(self.cos_amp))
        object.__setattr__(self, "sin_amp", float(self.sin_amp))
        const = None
        if c.size == 1 and self.cos_amp == 0.0 and self.sin_amp == 0.0:
            const = float(c[0, 0])
        object.__setattr__(self, "_const", const)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, x, y):
        if self._const is not None:
            # Constant fields are evaluated as scalars regardless of input
            # shape; all arithmetic downstream broadcasts.
            return self._const
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        if self.coeffs.size == 1:
            out = np.full(shape, self.coeffs[0, 0])
        else:
            out = npoly.polyval2d(np.broadcast_to(x, shape),
                                  np.broadcast_to(y, shape), self.coeffs)
        if self.cos_amp != 0.0:
            out = out + self.cos_amp * np.cos(x)
        if self.sin_amp != 0.0:
            out = out + self.sin_amp * np.sin(x)
        if out.ndim == 0:
            return float(out)
        return out

    # -- calculus -----------------------------------------------------------

    @cached_property
    def d_dx(self) -> "SmoothField2D":
        """Exact partial derivative with respect to x, as a field."""
        if self.coeffs.shape[0] == 1:
            dc = np.zeros((1, 1))
        else:
            dc = npoly.polyder(self.coeffs, m=1, axis=0)
        # d/dx (A cos x + B sin x) = B cos x - A sin x
        return SmoothField2D(dc, cos_amp=self.sin_amp, sin_amp=-self.cos_amp)

    @cached_property
    def d_dy(self) -> "SmoothField2D":
        """Exact partial derivative with respect to y, as a field."""
        if self.coeffs.shape[1] == 1:
            dc = np.zeros((1, 1))
        else:
            dc = npoly.polyder(self.coeffs, m=1, axis=1)
        return SmoothField2D(dc)

    # -- algebra (closed under linear combination) --------------------------

    def __add__(self, other: "SmoothField2D") -> "SmoothField2D":
        if not isinstance(other, SmoothField2D):
            return NotImplemented
        nx = max(self.coeffs.shape[0], other.coeffs.shape[0])
        ny = max(self.coeffs.shape[1], other.coeffs.shape[1])
        c = np.zeros((nx, ny))
        c[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        c[: other.coeffs.shape[0], : other.coeffs.shape[1]] += other.coeffs
        return SmoothField2D(c, cos_amp=self.cos_amp + other.cos_amp,
                             sin_amp=self.sin_amp + other.sin_amp)

    def __mul__(self, scalar: float) -> "SmoothField2D":
        if isinstance(scalar, SmoothField2D):
            return NotImplemented
        k = float(scalar)
        return SmoothField2D(self.coeffs * k, cos_amp=self.cos_amp * k,
                             sin_amp=self.sin_amp * k)

    __rmul__ = __mul__

    def __sub__(self, other: "SmoothField2D") -> "SmoothField2D":
        return self + other * (-1.0)

    def __neg__(self) -> "SmoothField2D":
        return self * (-1.0)

    # -- construction / serialization ---------------------------------------

    @classmethod
    def constant(cls, value: float) -> "SmoothField2D":
        return cls([[float(value)]])

    @classmethod
    def linear_x(cls, c0: float, c1: float) -> "SmoothField2D":
        """c0 + c1*x, a one-variable profile used for boundary data."""
        return cls([[c0], [c1]])

    @classmethod
    def pendulum_potential(cls, amplitude: float) -> "SmoothField2D":
        """amplitude * (1 + cos x)."""
        m = float(amplitude)
        return cls([[m]], cos_amp=m)

    @classmethod
    def from_dict(cls, spec: dict) -> "SmoothField2D":
        """Build from a config fragment.

        Accepted keys: ``coeffs`` (dense table, row = x power), ``trig``
        ({"M": m} meaning m*(1+cos x)), and the lossless extension keys
        ``cos`` / ``sin`` for bare trig amplitudes.
        """
        if not isinstance(spec, dict) or not spec:
            raise ConfigError(f"field spec must be a non-empty object, got {spec!r}")
        unknown = set(spec) - {"coeffs", "trig", "cos", "sin"}
        if unknown:
            raise ConfigError(f"unknown field spec keys: {sorted(unknown)}")
        coeffs = np.atleast_2d(np.asarray(spec.get("coeffs", [[0.0]]), dtype=float))
        cos_amp = float(spec.get("cos", 0.0))
        sin_amp = float(spec.get("sin", 0.0))
        if "trig" in spec:
            m = float(spec["trig"]["M"])
            base = np.zeros((max(coeffs.shape[0], 1), max(coeffs.shape[1], 1)))
            base[: coeffs.shape[0], : coeffs.shape[1]] = coeffs
            base[0, 0] += m
            coeffs = base
            cos_amp += m
        return cls(coeffs, cos_amp=cos_amp, sin_amp=sin_amp)

    def to_dict(self) -> dict:
        """Inverse of from_dict, preferring the compact trig form."""
        c = self.coeffs
        m = self.cos_amp
        if (m != 0.0 and self.sin_amp == 0.0 and c.shape == (1, 1)
                and c[0, 0] == m):
            return {"trig": {"M": m}}
        out: dict = {"coeffs": [[float(v) for v in row] for row in c]}
        if self.cos_amp != 0.0:
            out["cos"] = self.cos_amp
        if self.sin_amp != 0.0:
            out["sin"] = self.sin_amp
        return out


@dataclass(frozen=True)
class Rectangle:
    """Centered chart rectangle [-Lx, Lx] x [-Ly, Ly] with an odd node grid."""

    Lx: float
    Ly: float
    Nx: int = 101
    Ny: int = 101

    def __post_init__(self) -> None:
        if not (self.Lx > 0 and self.Ly > 0):
            raise ConfigError(f"half-widths must be positive, got ({self.Lx}, {self.Ly})")
        for n, name in ((self.Nx, "Nx"), (self.Ny, "Ny")):
            if int(n) != n or n < 3 or n % 2 == 0:
                raise ConfigError(f"{name} must be an odd integer >= 3, got {n}")
        object.__setattr__(self, "Lx", float(self.Lx))
        object.__setattr__(self, "Ly", float(self.Ly))
        object.__setattr__(self, "Nx", int(self.Nx))
        object.__setattr__(self, "Ny", int(self.Ny))

    @cached_property
    def xs(self) -> np.ndarray:
        return _freeze(np.linspace(-self.Lx, self.Lx, self.Nx))

    @cached_property
    def ys(self) -> np.ndarray:
        return _freeze(np.linspace(-self.Ly, self.Ly, self.Ny))

    @property
    def hx(self) -> float:
        return 2.0 * self.Lx / (self.Nx - 1)

    @property
    def hy(self) -> float:
        return 2.0 * self.Ly / (self.Ny - 1)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    def contains(self, x, y, pad: float = 0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = (np.abs(x) <= self.Lx + pad) & (np.abs(y) <= self.Ly + pad)
        if ok.ndim == 0:
            return bool(ok)
        return ok

    def inflated(self, factor: float) -> "Rectangle":
        return Rectangle(self.Lx * factor, self.Ly * factor, self.Nx, self.Ny)

    def to_dict(self) -> dict:
        return {"Lx": self.Lx, "Ly": self.Ly, "Nx": self.Nx, "Ny": self.Ny}

    @classmethod
    def from_dict(cls, spec: dict) -> "Rectangle":
        try:
            return cls(float(spec["Lx"]), float(spec["Ly"]),
                       int(spec["Nx"]), int(spec["Ny"]))
        except KeyError as exc:
            raise ConfigError(f"domain spec missing key {exc}") from exc


DEFAULT_DOMAIN = Rectangle(0.5, 0.5, 101, 101)


@dataclass(frozen=True, eq=False)
class SystemSpec2D:
    """Open-loop plant: inverse-mass fields a, b, c and potential h."""

    a: SmoothField2D
    b: SmoothField2D
    c: SmoothField2D
    h: SmoothField2D
    domain: Rectangle = DEFAULT_DOMAIN
    periodic: bool = False

    def metric_det(self, x, y):
        """Determinant a*c - b^2 of the inverse mass matrix."""
        return self.a(x, y) * self.c(x, y) - self.b(x, y) ** 2

    def B_field(self, gamma0: float) -> SmoothField2D:
        """a_x - 2*gamma*b_x + gamma^2*c_x as a closed-form field."""
        g = float(gamma0)
        return self.a.d_dx + self.b.d_dx * (-2.0 * g) + self.c.d_dx * (g * g)

    def C_field(self, gamma0: float) -> SmoothField2D:
        """a_y - 2*gamma*b_y + gamma^2*c_y as a closed-form field."""
        g = float(gamma0)
        return self.a.d_dy + self.b.d_dy * (-2.0 * g) + self.c.d_dy * (g * g)

    def origin_metric(self) -> tuple[float, float, float]:
        return (float(self.a(0.0, 0.0)), float(self.b(0.0, 0.0)),
                float(self.c(0.0, 0.0)))


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    worst_value: float
    worst_point: tuple[float, float]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "worst_value": self.worst_value,
                "worst_point": list(self.worst_point)}


@dataclass(frozen=True)
class ValidationReport:
    """Per-check verdicts with the worst offending sample of each check."""

    checks: dict

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"ok": self.ok,
                "checks": {k: v.to_dict() for k, v in self.checks.items()}}


def _eval_checked(fld: SmoothField2D, name: str, X: np.ndarray, Y: np.ndarray):
    vals = np.broadcast_to(np.asarray(fld(X, Y), dtype=float), X.shape)
    if not np.all(np.isfinite(vals)):
        bad = np.unravel_index(int(np.argmin(np.isfinite(vals))), vals.shape)
        raise EvaluationError(name, (X[bad], Y[bad]), vals[bad])
    return vals


def validate_system(sys: SystemSpec2D, tol: float = 1e-9) -> ValidationReport:
    """Check the standing hypotheses on every grid node.

    Positivity of a, c and of the metric determinant a*c - b^2, and the
    critical-point condition grad h(0,0) = 0 (within tol).
    """
    X, Y = sys.domain.meshgrid()
    a = _eval_checked(sys.a, "a", X, Y)
    b = _eval_checked(sys.b, "b", X, Y)
    c = _eval_checked(sys.c, "c", X, Y)
    _eval_checked(sys.h, "h", X, Y)
    det = a * c - b * b

    checks = {}
    for name, vals in (("a_positive", a), ("c_positive", c),
                       ("metric_det_positive", det)):
        k = np.unravel_index(int(np.argmin(vals)), vals.shape)
        checks[name] = CheckResult(ok=bool(vals[k] > tol),
                                   worst_value=float(vals[k]),
                                   worst_point=(float(X[k]), float(Y[k])))

    hx0 = float(sys.h.d_dx(0.0, 0.0))
    hy0 = float(sys.h.d_dy(0.0, 0.0))
    worst = hx0 if abs(hx0) >= abs(hy0) else hy0
    checks["h_critical_origin"] = CheckResult(
        ok=bool(abs(hx0) <= tol and abs(hy0) <= tol),
        worst_value=float(worst), worst_point=(0.0, 0.0))
    return ValidationReport(checks=checks)


def hessian_h_origin(sys: SystemSpec2D) -> tuple[float, float, float]:
    """Exact (h_xx, h_xy, h_yy) at the origin."""
    h = sys.h
    return (float(h.d_dx.d_dx(0.0, 0.0)),
            float(h.d_dx.d_dy(0.0, 0.0)),
            float(h.d_dy.d_dy(0.0, 0.0)))


# -- JSON config ------------------------------------------------------------

def system_to_config(sys: SystemSpec2D) -> dict:
    return {
        "a": sys.a.to_dict(),
        "b": sys.b.to_dict(),
        "c": sys.c.to_dict(),
        "h": sys.h.to_dict(),
        "domain": sys.domain.to_dict(),
        "periodic": bool(sys.periodic),
    }


def system_from_config(doc: dict) -> SystemSpec2D:
    if not isinstance(doc, dict):
        raise ConfigError("system config must be a JSON object")
    missing = {"a", "b", "c", "h", "domain"} - set(doc)
    if missing:
        raise ConfigError(f"system config missing keys: {sorted(missing)}")
    return SystemSpec2D(
        a=SmoothField2D.from_dict(doc["a"]),
        b=SmoothField2D.from_dict(doc["b"]),
        c=SmoothField2D.from_dict(doc["c"]),
        h=SmoothField2D.from_dict(doc["h"]),
        domain=Rectangle.from_dict(doc["domain"]),
        periodic=bool(doc.get("periodic", False)),
    )


def load_system(path) -> SystemSpec2D:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read system config {path}: {exc}") from exc
    return system_from_config(doc)


def save_system(sys: SystemSpec2D, path) -> None:
    Path(path).write_text(json.dumps(system_to_config(sys), indent=2,
                                     sort_keys=True) + "\n")
