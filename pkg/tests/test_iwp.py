"""Constant-inertia pendulum-wheel plant: oracles and printed inequalities.

Proves:
  1. Parameter validation enforces positivity and a positive inertia
     determinant, and the plant constructor wires the wrapped potential.
  2. The closed-form kinetic/potential solutions take frozen values, solve
     both transport equations exactly (zero residual), and expose exact
     partial derivatives.
  3. The specialized inequality report (gamma window, r''(0) bound, slope,
     forbidden quotient) passes on the reference choice and fails each
     clause for the matching degenerate input.
  4. The plant-specific forbidden-gamma closed form equals the general
     Hessian-quotient value across random instances.
  5. The pinned reference instance reproduces its frozen numbers and builds
     controllers on either backing.
"""

from __future__ import annotations

import numpy as np
import pytest

from lcbstab.charsolve import AnalyticField, FieldGrid
from lcbstab.errors import ConfigError, SingularQuotient
from lcbstab.iwp import (REFERENCE_ABCM, IwpParams, f1_lower_bound,
                         f2_forbidden_gamma, iwp_constraints,
                         iwp_oracle_fields, iwp_system, oracle_delta,
                         oracle_v, reference_instance)
from lcbstab.model import Rectangle, SmoothField2D, hessian_h_origin
from lcbstab.stabilize import gamma_forbidden_l2

# ── Shared fixtures ────────────────────────────────────────────────────────────

_P = IwpParams(2.0, 1.0, 1.0, 1.0)
_REF = reference_instance()
_S = SmoothField2D.linear_x(1.0, 0.1)
_R = SmoothField2D([[0.0], [0.0], [1.0]])


def _random_params(rng) -> IwpParams:
    a, c = rng.uniform(0.5, 3.0, 2)
    b = float(rng.uniform(0.1, 0.95)) * float(np.sqrt(a * c))
    return IwpParams(float(a), b, float(c), float(rng.uniform(0.5, 2.0)))


# ═══════════════════════════════════════════════════════════════════════════════
# Group 1 — Parameters and plant construction
# ═══════════════════════════════════════════════════════════════════════════════


def test_params_validation():
    with pytest.raises(ConfigError, match="must be positive"):
        IwpParams(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigError, match="must be positive"):
        IwpParams(2.0, 1.0, 1.0, -1.0)
    with pytest.raises(ConfigError, match="determinant"):
        IwpParams(1.0, 1.0, 1.0, 1.0)
    assert _P.to_dict() == {"a": 2.0, "b": 1.0, "c": 1.0, "M": 1.0}


def test_plant_wiring():
    sys = iwp_system(_P)
    assert sys.periodic
    assert sys.a(0.3, -0.2) == 2.0
    assert sys.b(0.0, 0.0) == 1.0 and sys.c(0.1, 0.1) == 1.0
    assert sys.h(0.0, 0.0) == 2.0                      # M*(1 + cos 0)
    assert abs(sys.h(np.pi, 0.0)) < 1e-15
    hxx, hxy, hyy = (float(x) for x in np.ravel(hessian_h_origin(sys)))
    assert (hxx, hxy, hyy) == (-1.0, 0.0, 0.0)


# ═══════════════════════════════════════════════════════════════════════════════
# Group 2 — Closed-form solutions
# ═══════════════════════════════════════════════════════════════════════════════


def test_oracle_values_frozen():
    d = float(oracle_delta(_P, 3.0, _S, 0.2, 0.2))
    v = float(oracle_v(_P, 3.0, _S, _R, 0.2, 0.2))
    print(f"\n  delta(0.2, 0.2) = {d!r}, v(0.2, 0.2) = {v!r}")
    assert d == 1.01
    assert abs(v - 0.02508696331115197) < 1e-15


def test_oracle_requires_gamma_above_the_window():
    with pytest.raises(ConfigError, match="must exceed a/b"):
        oracle_delta(_P, 1.5, _S, 0.0, 0.0)
    with pytest.raises(ConfigError, match="must exceed a/b"):
        oracle_v(_P, 2.0, _S, _R, 0.0, 0.0)


def test_oracle_fields_solve_the_equations_exactly():
    """zeta*f_x + eta*f_y equals B*delta resp. h_x*delta pointwise."""
    delta, v = iwp_oracle_fields(_P, 3.0, _S, _R)
    zeta, eta = 2.0 - 3.0, 1.0 - 3.0
    rng = np.random.default_rng(17)
    xs = rng.uniform(-0.45, 0.45, 200)
    ys = rng.uniform(-0.45, 0.45, 200)
    kin = zeta * delta.dx(xs, ys) + eta * delta.dy(xs, ys)   # B = 0 here
    hx = -np.sin(xs)                                          # h = M(1 + cos x)
    pot = zeta * v.dx(xs, ys) + eta * v.dy(xs, ys) - hx * delta.value(xs, ys)
    print(f"\n  kinetic residual {np.max(np.abs(kin)):.2e}, "
          f"potential residual {np.max(np.abs(pot)):.2e}")
    assert float(np.max(np.abs(kin))) < 1e-14
    assert float(np.max(np.abs(pot))) < 1e-14


def test_oracle_fields_restrict_profiles_to_one_variable():
    with pytest.raises(ConfigError, match="depend on y"):
        iwp_oracle_fields(_P, 3.0, SmoothField2D([[1.0, 0.5]]), _R)
    with pytest.raises(ConfigError, match="depend on y"):
        iwp_oracle_fields(_P, 3.0, _S, SmoothField2D([[0.0, 0.0, 1.0]]))


def test_oracle_fields_boundary_restriction():
    """On y = 0 the solutions reduce to the boundary profiles themselves."""
    delta, v = iwp_oracle_fields(_P, 3.0, _S, _R)
    xs = np.linspace(-0.5, 0.5, 11)
    assert np.allclose(delta.value(xs, 0.0), 1.0 + 0.1 * xs, atol=1e-15)
    assert np.allclose(v.value(xs, 0.0), xs ** 2, atol=1e-15)


# ═══════════════════════════════════════════════════════════════════════════════
# Group 3 — Inequality report
# ═══════════════════════════════════════════════════════════════════════════════


def test_constraints_pass_on_the_reference_choice():
    rep = iwp_constraints(_P, 3.0, s0=1.0, s1=0.1, r2=2.0)
    print(f"\n  {rep.to_dict()}")
    assert rep.ok
    assert rep.gamma_lower == 2.0 and rep.gamma_ok
    assert rep.f1_bound == 1.0 and rep.f1_ok
    assert rep.s1_ok
    assert abs(rep.f2_forbidden - 2.2) < 1e-12 and rep.f2_ok


def test_each_constraint_fails_for_its_degenerate_input():
    low_gamma = iwp_constraints(_P, 1.5, 1.0, 0.1, 2.0)
    assert not low_gamma.gamma_ok and not low_gamma.ok

    flat_r = iwp_constraints(_P, 3.0, 1.0, 0.1, r2=1.0)   # bound is exactly 1
    assert not flat_r.f1_ok and not flat_r.ok

    flat_s = iwp_constraints(_P, 3.0, 1.0, s1=0.0, r2=2.0)
    assert not flat_s.s1_ok and not flat_s.ok

    # s0 = 0 collapses the forbidden value onto gamma itself
    zero_scale = iwp_constraints(_P, 3.0, s0=0.0, s1=0.1, r2=2.0)
    assert abs(zero_scale.f2_forbidden - 3.0) < 1e-12
    assert not zero_scale.f2_ok and not zero_scale.ok

    singular = iwp_constraints(_P, 3.0, 1.0, 0.1, r2=-3.0)
    assert singular.f2_forbidden is None and not singular.f2_ok


def test_f1_bound_value_and_guard():
    assert f1_lower_bound(_P, 3.0, 1.0) == 1.0            # -M*s0/(a - b*gamma)
    with pytest.raises(SingularQuotient, match="vanishes"):
        f1_lower_bound(_P, 2.0, 1.0)                      # gamma = a/b


def test_f2_singular_denominator_raises():
    with pytest.raises(SingularQuotient, match="denominator"):
        f2_forbidden_gamma(_P, 3.0, 1.0, -3.0)


# ═══════════════════════════════════════════════════════════════════════════════
# Group 4 — Plant-specific closed form vs the general quotient
# ═══════════════════════════════════════════════════════════════════════════════


def test_f2_matches_general_forbidden_value():
    rng = np.random.default_rng(29)
    checked = 0
    worst = 0.0
    while checked < 20:
        p = _random_params(rng)
        gamma = p.a / p.b + float(rng.uniform(0.5, 2.0))
        s0 = float(rng.uniform(0.5, 2.0))
        r2 = float(rng.uniform(0.5, 4.0))
        sys = iwp_system(p)
        try:
            general = gamma_forbidden_l2(sys, gamma, s0, r2)
            special = f2_forbidden_gamma(p, gamma, s0, r2)
        except SingularQuotient:
            continue
        worst = max(worst, abs(general - special) / max(1.0, abs(general)))
        checked += 1
    print(f"\n  closed form vs general quotient over {checked} draws: {worst:.2e}")
    assert worst < 1e-10


# ═══════════════════════════════════════════════════════════════════════════════
# Group 5 — Pinned reference instance
# ═══════════════════════════════════════════════════════════════════════════════


def test_reference_instance_frozen_values():
    assert REFERENCE_ABCM == (2.0, 1.0, 1.0, 1.0)
    assert _REF.params == _P
    assert _REF.gamma0 == 3.0
    assert _REF.kappa == 1.0 and _REF.l == 1.0
    b = _REF.boundary
    assert (b.s0, b.ds0, b.r0, b.dr0, b.ddr0) == (1.0, 0.1, 0.0, 0.0, 2.0)
    assert b.s(0.3, 0.0) == pytest.approx(1.03)
    assert b.r(0.3, 0.0) == pytest.approx(0.09)
    assert _REF.system.domain.Lx == 0.5 and _REF.system.domain.Nx == 101


def test_reference_controllers_on_both_backings():
    oc = _REF.controller(backing="oracle")
    assert isinstance(oc.delta, AnalyticField)
    assert oc.gamma0 == 3.0 and oc.kappa == 1.0 and oc.l == 1.0

    gc = _REF.controller(backing="grid", domain=Rectangle(0.5, 0.5, 21, 21),
                         kappa=2.5, l=0.5)
    assert isinstance(gc.delta, FieldGrid) and isinstance(gc.v, FieldGrid)
    assert gc.kappa == 2.5 and gc.l == 0.5
    # both backings evaluate the same Lyapunov data at the nodes
    assert abs(gc.delta.value(0.2, 0.2) - oc.delta.value(0.2, 0.2)) < 1e-12

    with pytest.raises(ConfigError, match="unknown backing"):
        _REF.controller(backing="exact")


def test_reference_oracle_fields_default_domain():
    delta, v = _REF.oracle_fields()
    assert delta.domain is _REF.system.domain
    wide = Rectangle(2.0, 2.0, 51, 51)
    d2, _ = _REF.oracle_fields(domain=wide)
    assert d2.domain is wide
    assert d2.value(1.5, 1.0) == pytest.approx(1.0 + 0.1 * (1.5 - 0.5))
