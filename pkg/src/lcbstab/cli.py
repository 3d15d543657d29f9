"""Command-line orchestration: check, gamma, synthesize, simulate, lasalle.

Exit codes: 0 success; 1 method-level negative result (e.g. the plant is not
stabilizable by this construction); 2 input/IO/validation error; 3 a
certificate failed (positivity, invariance-chain, or integration failure).

Every command prints its JSON document to stdout and, when --out is given,
also writes the same document (plus any bulk CSV) under that directory.
Outputs are deterministic: same inputs and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .charsolve import (positivity_report, residual_kinetic,
                        residual_potential)
from .errors import (ConfigError, EvaluationError, InconclusiveScan,
                     IntegrationBlowup, LcbError, NotStabilizable,
                     OutOfDomain, PositivityLoss)
from .feedback import (State, load_controller, save_controller,
                       synthesize_controller)
from .iwp import reference_instance
from .lasalle import chain_scan
from .model import Rectangle, load_system, system_to_config, validate_system
from .simulate import batch_simulate, integrate, sample_ball_ics, verify_decrease
from .stabilize import (check_condpos2, choose_boundary, choose_gamma,
                        condpos_value, hessian_v_origin, make_boundary)

log = logging.getLogger("lcbstab")

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_CERTIFICATE = 3


@dataclass(frozen=True)
class RunConfig:
    """Validated numeric overrides shared by the subcommands."""

    grid: int | None = None
    domain: float | None = None
    dt: float = 1e-3
    kappa: float = 1.0
    l: float = 1.0
    margin: float = 0.5
    t_final: float = 200.0
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.1:
            raise ConfigError(f"dt = {self.dt} outside (0, 0.1]")
        if not self.kappa > 0.0:
            raise ConfigError(f"kappa = {self.kappa} must be positive")
        if not self.l > 0.0:
            raise ConfigError(f"l = {self.l} must be positive")
        if self.grid is not None and (self.grid < 3 or self.grid % 2 == 0):
            raise ConfigError(f"grid = {self.grid} must be an odd integer >= 3")
        if self.domain is not None and not self.domain > 0.0:
            raise ConfigError(f"domain half-width {self.domain} must be positive")
        if not self.t_final > 0.0:
            raise ConfigError(f"t_final = {self.t_final} must be positive")

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        def pick(name, default):
            val = getattr(args, name, None)
            return default if val is None else val

        return cls(grid=getattr(args, "grid", None),
                   domain=getattr(args, "domain", None),
                   dt=pick("dt", 1e-3),
                   kappa=pick("kappa", 1.0),
                   l=pick("l", 1.0),
                   margin=pick("margin", 0.5),
                   t_final=pick("t_final", 200.0),
                   seed=pick("seed", 42))

    def rectangle(self, base: Rectangle) -> Rectangle:
        if self.grid is None and self.domain is None:
            return base
        n = self.grid if self.grid is not None else base.Nx
        L = self.domain if self.domain is not None else base.Lx
        return Rectangle(L, L, n, n)


def _emit(doc: dict, out: str | None, name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if out is not None:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / name).write_text(text)


def _parse_ic(text: str) -> State:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--ic expects x,y,px,py, got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"--ic has a non-numeric entry: {text!r}") from exc
    return State(*vals)


def _load_sys(args):
    if getattr(args, "config", None) is None:
        raise ConfigError("--config is required for this command")
    return load_system(args.config)


def cmd_check(args) -> int:
    sys2 = _load_sys(args)
    validation = validate_system(sys2)
    if not validation.ok:
        _emit({"validation": validation.to_dict(), "verdict": None},
              args.out, "check.json")
        log.error("system hypotheses violated")
        return EXIT_INPUT
    verdict = check_condpos2(sys2)
    _emit({"validation": validation.to_dict(), "verdict": verdict.to_dict()},
          args.out, "check.json")
    return EXIT_OK if verdict.stabilizable else EXIT_NEGATIVE


def cmd_gamma(args) -> int:
    sys2 = _load_sys(args)
    cfg = RunConfig.from_args(args)
    choice = choose_gamma(sys2, margin=cfg.margin)
    boundary, gamma0 = choose_boundary(sys2, choice.gamma0, margin=cfg.margin)
    doc = {"choice": choice.to_dict(), "gamma0": gamma0,
           "condpos": condpos_value(sys2, gamma0),
           "boundary": boundary.to_dict()}
    _emit(doc, args.out, "gamma.json")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    sys2 = _load_sys(args)
    cfg = RunConfig.from_args(args)
    domain = cfg.rectangle(sys2.domain)

    boundary = None
    gamma0 = args.gamma
    if args.s1 is not None or args.r2 is not None:
        if gamma0 is None:
            gamma0 = choose_gamma(sys2, margin=cfg.margin).gamma0
        base, gamma0 = choose_boundary(sys2, gamma0, margin=cfg.margin)
        s1 = args.s1 if args.s1 is not None else base.ds0
        r2 = args.r2 if args.r2 is not None else base.ddr0
        boundary = make_boundary(sys2, base.s0, s1, r2)

    ctrl, info = synthesize_controller(sys2, kappa=cfg.kappa, l=cfg.l,
                                       margin=cfg.margin, domain=domain,
                                       dt=cfg.dt, gamma0=gamma0,
                                       boundary=boundary)
    res_k = residual_kinetic(sys2, ctrl.gamma0, ctrl.delta)
    res_p = residual_potential(sys2, ctrl.gamma0, ctrl.delta, ctrl.v)
    pos = positivity_report(ctrl.delta, ctrl.v)
    jet = info["boundary"]
    try:
        hb = make_boundary(sys2, jet["s0"], jet["ds0"], jet["ddr0"])
        hess = hessian_v_origin(sys2, ctrl.gamma0, hb).to_dict()
    except LcbError:
        hess = None

    doc = {"gamma0": ctrl.gamma0, "kappa": ctrl.kappa, "l": ctrl.l,
           "boundary": info["boundary"],
           "residual_kinetic": res_k.to_dict(),
           "residual_potential": res_p.to_dict(),
           "positivity": pos.to_dict(),
           "hessian_v": hess}
    _emit(doc, args.out, "synthesis.json")
    if args.out is not None:
        save_controller(ctrl, Path(args.out) / "controller.json")
    if not pos.ok:
        log.error("positivity certificate failed")
        return EXIT_CERTIFICATE
    return EXIT_OK


def _load_ctrl(args):
    if getattr(args, "controller", None) is None:
        raise ConfigError("--controller is required for this command")
    path = Path(args.controller)
    if not path.exists():
        raise ConfigError(f"controller file {path} does not exist")
    return load_controller(path)


def cmd_simulate(args) -> int:
    ctrl = _load_ctrl(args)
    cfg = RunConfig.from_args(args)
    if args.kappa is not None and args.kappa != ctrl.kappa:
        from .feedback import Controller
        ctrl = Controller(system=ctrl.system, gamma0=ctrl.gamma0,
                          delta=ctrl.delta, v=ctrl.v, l=ctrl.l,
                          kappa=args.kappa)
    if args.batch is not None:
        ics = sample_ball_ics(args.batch, radius=args.radius, seed=cfg.seed)
        summaries = batch_simulate(ctrl, ics, t_final=cfg.t_final, dt=cfg.dt)
        n_conv = sum(1 for s in summaries if s.converged)
        doc = {"n_runs": len(summaries), "n_converged": n_conv,
               "runs": [s.to_dict() for s in summaries]}
        _emit(doc, args.out, "batch.json")
        return EXIT_OK
    if args.ic is None:
        raise ConfigError("--ic (or --batch N) is required")
    ic = _parse_ic(args.ic)
    traj = integrate(ctrl, ic, t_final=cfg.t_final, dt=cfg.dt)
    report = verify_decrease(traj) if traj.t.size >= 3 else None
    doc = {"ic": list(ic.as_array()), "t_final": cfg.t_final, "dt": cfg.dt,
           "truncated": traj.truncated, "marker": traj.marker,
           "final_state": [float(v) for v in traj.final_state()],
           "final_norm": traj.final_norm(),
           "decrease": report.to_dict() if report else None}
    _emit(doc, args.out, "simulate.json")
    if args.out is not None:
        traj.to_csv(Path(args.out) / "trajectory.csv", decimate=args.decimate)
    return EXIT_OK


def cmd_lasalle(args) -> int:
    ctrl = _load_ctrl(args)
    report = chain_scan(ctrl)
    _emit(report.to_dict(), args.out, "lasalle.json")
    return EXIT_OK if report.verdict else EXIT_CERTIFICATE


def cmd_iwp(args) -> int:
    inst = reference_instance()
    doc = system_to_config(inst.system)
    doc["suggested"] = {"gamma0": inst.gamma0, "kappa": inst.kappa,
                        "l": inst.l,
                        "boundary": inst.boundary.to_dict()}
    _emit(doc, args.out, "iwp.json")
    if args.out is not None:
        cfg_only = system_to_config(inst.system)
        (Path(args.out) / "system.json").write_text(
            json.dumps(cfg_only, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_export_fields(args) -> int:
    ctrl = _load_ctrl(args)
    out = Path(args.out if args.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    ctrl.delta.to_csv(out / "delta.csv")
    ctrl.v.to_csv(out / "v.csv")
    doc = {"delta": str(out / "delta.csv"), "v": str(out / "v.csv"),
           "grid": ctrl.delta.domain.to_dict()}
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lcb",
        description="Stabilizing feedback synthesis for 2-DOF simple "
                    "Hamiltonian plants, with certificates.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, controller=False, sim=False):
        sp.add_argument("--out", default=None, help="output directory")
        if config:
            sp.add_argument("--config", default=None,
                            help="system config JSON path")
        if controller:
            sp.add_argument("--controller", default=None,
                            help="controller JSON path")
        sp.add_argument("--grid", type=int, default=None,
                        help="override grid nodes per axis (odd)")
        sp.add_argument("--domain", type=float, default=None,
                        help="override domain half-width")
        sp.add_argument("--dt", type=float, default=1e-3)
        sp.add_argument("--margin", type=float, default=0.5)
        sp.add_argument("--seed", type=int, default=42)
        if sim:
            sp.add_argument("--t-final", dest="t_final", type=float,
                            default=200.0)
            sp.add_argument("--ic", default=None, help="x,y,px,py")
            sp.add_argument("--decimate", type=int, default=1)
            sp.add_argument("--batch", type=int, default=None,
                            help="sample N initial conditions instead of --ic")
            sp.add_argument("--radius", type=float, default=0.2,
                            help="sampling ball radius for --batch")

    sp = sub.add_parser("check", help="decide stabilizability")
    common(sp, config=True)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("gamma", help="choose gamma and boundary data")
    common(sp, config=True)
    sp.set_defaults(func=cmd_gamma)

    sp = sub.add_parser("synthesize", help="solve the matching equations "
                                           "and assemble the controller")
    common(sp, config=True)
    sp.add_argument("--kappa", type=float, default=1.0)
    sp.add_argument("--l", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=None,
                    help="override the constructive gamma")
    sp.add_argument("--s1", type=float, default=None,
                    help="override s'(0) in the boundary data")
    sp.add_argument("--r2", type=float, default=None,
                    help="override r''(0) in the boundary data")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("simulate", help="integrate the closed loop")
    common(sp, controller=True, sim=True)
    sp.add_argument("--kappa", type=float, default=None,
                    help="override the stored gain")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("lasalle", help="run the invariance-chain scan")
    common(sp, controller=True)
    sp.set_defaults(func=cmd_lasalle)

    sp = sub.add_parser("iwp", help="emit the inertia wheel pendulum "
                                    "reference configuration")
    common(sp)
    sp.set_defaults(func=cmd_iwp)

    sp = sub.add_parser("export-fields", help="dump delta and v grids as CSV")
    common(sp, controller=True)
    sp.set_defaults(func=cmd_export_fields)
    return p


def _setup_logging() -> None:
    level = os.environ.get("LCB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NotStabilizable as exc:
        log.error("not stabilizable by this construction: %s", exc)
        sys.stdout.write(json.dumps({"error": "NotStabilizable",
                                     "message": str(exc)}, sort_keys=True) + "\n")
        return EXIT_NEGATIVE
    except (PositivityLoss, InconclusiveScan, IntegrationBlowup) as exc:
        log.error("certificate failure: %s", exc)
        sys.stdout.write(json.dumps({"error": type(exc).__name__,
                                     "message": str(exc)}, sort_keys=True) + "\n")
        return EXIT_CERTIFICATE
    except (ConfigError, EvaluationError, OutOfDomain, OSError,
            json.JSONDecodeError) as exc:
        log.error("input error: %s", exc)
        sys.stdout.write(json.dumps({"error": type(exc).__name__,
                                     "message": str(exc)}, sort_keys=True) + "\n")
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
