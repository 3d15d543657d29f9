"""Stabilizing feedback synthesis for 2-DOF simple Hamiltonian plants.

Given a plant H = 1/2 (a p_x^2 + 2 b p_x p_y + c p_y^2) + h(x, y) actuated
along y only, the toolkit decides whether an asymptotically stabilizing
feedback with a simple (kinetic + potential) Lyapunov function exists,
constructs one by solving a pair of first-order transport equations along
characteristics, and certifies the result: positivity of the solved fields,
positive-definiteness at the origin, exact dissipation dV/dt = -mu along
closed-loop trajectories, and localization of the invariance chain.
"""

from .charsolve import (AnalyticField, CharacteristicTrace, FieldGrid,
                        positivity_report, residual_kinetic,
                        residual_potential, solve_fields, solve_kinetic,
                        solve_potential, trace_to_boundary)
from .errors import (CharacteristicDegeneracy, ConfigError, EvaluationError,
                     GbcViolation, InconclusiveScan, IntegrationBlowup,
                     LcbError, NotStabilizable, OutOfDomain, PositivityLoss,
                     SingularQuotient, TraceEscape)
from .feedback import (Controller, State, load_controller, save_controller,
                       synthesize_controller)
from .iwp import (IwpParams, ReferenceInstance, f1_lower_bound,
                  f2_forbidden_gamma, iwp_constraints, iwp_oracle_fields,
                  iwp_system, oracle_delta, oracle_v, reference_instance)
from .lasalle import (LaSalleReport, chain_scan, l1_check, l2_from_M)
from .model import (DEFAULT_DOMAIN, Rectangle, SmoothField2D, SystemSpec2D,
                    hessian_h_origin, load_system, save_system,
                    validate_system)
from .simulate import (DecreaseReport, RunSummary, Trajectory, batch_simulate,
                       integrate, sample_ball_ics, verify_decrease)
from .stabilize import (BoundaryData, GammaChoice, StabilizabilityVerdict,
                        brute_force_gamma_exists, check_condpos2,
                        choose_boundary, choose_gamma, condpos_value,
                        gamma_forbidden_l2, hessian_v_origin,
                        l1_forbidden_ratio, make_boundary, pr2_lower_bound)

__version__ = "0.1.0"

__all__ = [
    "AnalyticField", "BoundaryData", "CharacteristicDegeneracy",
    "CharacteristicTrace", "ConfigError", "Controller", "DecreaseReport",
    "DEFAULT_DOMAIN", "EvaluationError", "FieldGrid", "GammaChoice",
    "GbcViolation", "InconclusiveScan", "IntegrationBlowup", "IwpParams",
    "LaSalleReport", "LcbError", "NotStabilizable", "OutOfDomain",
    "PositivityLoss", "Rectangle", "ReferenceInstance", "RunSummary",
    "SingularQuotient", "SmoothField2D", "StabilizabilityVerdict", "State",
    "SystemSpec2D", "TraceEscape", "Trajectory", "batch_simulate",
    "brute_force_gamma_exists", "chain_scan", "check_condpos2",
    "choose_boundary", "choose_gamma", "condpos_value", "f1_lower_bound",
    "f2_forbidden_gamma", "gamma_forbidden_l2", "hessian_h_origin",
    "hessian_v_origin", "integrate", "iwp_constraints", "iwp_oracle_fields",
    "iwp_system", "l1_check", "l1_forbidden_ratio", "l2_from_M",
    "load_controller", "load_system", "make_boundary", "oracle_delta",
    "oracle_v", "positivity_report", "pr2_lower_bound", "reference_instance",
    "residual_kinetic", "residual_potential", "sample_ball_ics",
    "save_controller", "save_system", "solve_fields", "solve_kinetic",
    "solve_potential", "synthesize_controller", "trace_to_boundary",
    "validate_system", "verify_decrease",
]
