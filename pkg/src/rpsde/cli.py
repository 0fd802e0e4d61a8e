"""Command-line front end.

    rpsde simulate --config run.json --out results/
    rpsde converge --config study.json --assert-order 0.5 --band 0.1
    rpsde diagnose | measure | floquet --config ...

Configs are flat JSON objects; every key is listed in ``RunConfig`` and
unknown keys are rejected.  Exit codes: 0 success, 2 invalid config or
failed condition, 3 divergence, 4 order assertion failed, 5 no real
Floquet logarithm.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis, floquet, noise, parallel, problems, pullback
from .errors import (ConditionError, ConfigError, DegenerateFitError, DivergenceError,
                     DomainError, GridAlignmentError, LogarithmExistenceError, RpsError)
from .model import validate
from .schemes import KINDS, SchemeConfig, integrate

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_ASSERT, EXIT_FLOQUET = 0, 2, 3, 4, 5
DESK_DT_LIST = [2.5e-4, 5e-4, 1e-3, 2e-3, 4e-3]


@dataclass
class RunConfig:
    problem: str = "example1"
    # linear family: dX = (a X + amplitude sin(2 pi t/tau)) dt + c X dW; mathieu uses a as a0
    a: Optional[float] = None
    c: Optional[float] = None
    amplitude: Optional[float] = None
    tau: Optional[float] = None
    b: Optional[float] = None
    matrix: Optional[list] = None
    scheme: str = "euler-maruyama"
    dt: float = 0.01
    dt_fine: Optional[float] = None
    seeds: Optional[list] = None
    base_seed: int = 0
    n_seeds: int = 1000
    k_max: int = 3
    tol: float = 1e-3
    r: float = 0.0
    xi: float = 0.5
    warm_restart: bool = False
    include_linear_remainder: bool = False
    t_min: Optional[float] = None
    t_max: Optional[float] = None
    dt_list: list = field(default_factory=lambda: list(DESK_DT_LIST))
    reference_dt: Optional[float] = None
    truncation_T: Optional[float] = None
    t_grid: Optional[list] = None
    t_grid_step: Optional[float] = None
    t_grid_max: Optional[float] = None
    diag_seeds: int = 1
    window: list = field(default_factory=lambda: [-5.0, 0.0])
    start: Optional[float] = None
    n_boot: int = 500
    self_test: bool = False
    truth_seed_offset: int = 1_000_000
    floquet_h: Optional[float] = None
    assert_order: Optional[float] = None
    band: Optional[float] = None

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.check_types()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return dataclasses.asdict(self)

    def dump(self, path):
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def check_types(self):
        for name in ("dt", "tol", "r", "xi"):
            if not isinstance(getattr(self, name), (int, float)) or isinstance(
                    getattr(self, name), bool):
                raise ConfigError(f"{name} must be a number")
        for name in ("n_seeds", "k_max", "base_seed", "n_boot", "diag_seeds"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{name} must be an integer")
        if self.scheme not in KINDS:
            raise ConfigError(f"scheme must be one of {KINDS}")
        if self.problem not in problems.BUILTINS:
            raise ConfigError(f"problem must be one of {problems.BUILTINS}")
        if self.n_seeds < 1 and not self.seeds:
            raise ConfigError("need at least one seed")

    def seed_list(self, offset=0):
        seeds = self.seeds if self.seeds else range(self.base_seed, self.base_seed + self.n_seeds)
        return [int(s) + offset for s in seeds]


def _opt(value, default):
    return default if value is None else value


def build_problem(cfg):
    """Returns ``(sde_problem, oracle_or_None)`` for the configured builtin."""
    name = cfg.problem
    if name in ("example1", "linear"):
        base = dict(a=-math.pi, c=1.0, amplitude=1.0, tau=2.0)
        if name == "linear":
            base.update({k: v for k, v in (("a", cfg.a), ("c", cfg.c), ("amplitude", cfg.amplitude),
                                           ("tau", cfg.tau)) if v is not None})
        elif any(v is not None for v in (cfg.a, cfg.c, cfg.amplitude, cfg.tau)):
            raise ConfigError("example1 is fixed; use problem 'linear' to change a, c, amplitude, tau")
        a, c = base["a"], base["c"]
        if not a + 0.5 * c * c < 0:
            # fall through to validate() for the condition diagnosis
            from .model import SdeProblem
            amp, tau = base["amplitude"], base["tau"]
            w = 2 * math.pi / tau
            sde = SdeProblem(m=1, d=1, tau=tau, f=lambda t, x: amp * np.sin(w * t) * np.ones_like(x),
                             g=lambda t, x: c * np.asarray(x)[..., None], A=[[a]],
                             beta1=0.0, beta2=abs(c), C1=abs(amp), name=name)
            return sde, None
        lp = problems.linear_family(name=name, **base)
        return lp.to_problem(), lp
    if name == "nonlinear":
        kw = {k: v for k, v in (("a", cfg.a), ("b", cfg.b), ("c", cfg.c), ("tau", cfg.tau))
              if v is not None}
        return problems.nonlinear(**kw), None
    if name == "mathieu":
        kw = {k: v for k, v in (("a0", cfg.a), ("c", cfg.c), ("amplitude", cfg.amplitude),
                                ("tau", cfg.tau)) if v is not None}
        return problems.mathieu(**kw), None
    if cfg.matrix is None:
        raise ConfigError("constant_matrix needs 'matrix'")
    return problems.constant_matrix(cfg.matrix, tau=_opt(cfg.tau, 1.0), c=_opt(cfg.c, 0.0)), None


def _check_alignment(tau, dt, dt_fine):
    if dt <= 0 or dt_fine <= 0:
        raise ConfigError("dt and dt_fine must be positive")
    try:
        noise.grid_steps(tau, dt, "tau / dt")
    except GridAlignmentError:
        raise ConfigError(f"alignment rule: tau/dt must be an integer (tau={tau}, dt={dt})")
    try:
        noise.grid_steps(dt, dt_fine, "dt / dt_fine")
    except GridAlignmentError:
        raise ConfigError(f"alignment rule: dt/dt_fine must be an integer "
                          f"(dt={dt}, dt_fine={dt_fine})")


def _reduce_periodic(problem, cfg, scheme_dt):
    """Floquet-reduce a periodic-A(t) problem; returns (z_problem, transform)."""
    h = _opt(cfg.floquet_h, scheme_dt)
    data = floquet.floquet_data(problem.A_of_t, problem.tau, h)
    return floquet.lf_transform(problem, data)


def _write_json(path, payload):
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _setup_run(cfg):
    problem, lp = build_problem(cfg)
    dt_fine = _opt(cfg.dt_fine, cfg.dt)
    transform = None
    if problem.periodic_linear:
        _check_alignment(2 * problem.tau, cfg.dt, dt_fine)
        transform = _reduce_periodic(problem, cfg, cfg.dt)
        problem = transform.problem
    else:
        _check_alignment(problem.tau, cfg.dt, dt_fine)
    report = validate(problem)
    scheme = SchemeConfig.build(cfg.scheme, cfg.dt, dt_fine, tau=problem.tau,
                                dt_max=report.dt_max,
                                include_linear_remainder=cfg.include_linear_remainder)
    return problem, lp, transform, scheme, dt_fine


def cmd_simulate(cfg, out, threads=1, seed_offset=0):
    problem, _, transform, scheme, dt_fine = _setup_run(cfg)
    seeds = cfg.seed_list(seed_offset)
    t_min = _opt(cfg.t_min, -cfg.k_max * problem.tau)
    t_max = _opt(cfg.t_max, max(cfg.r, 0.0))
    paths = [noise.build_path(s, problem.d, dt_fine, 0.0, t_min, t_max) for s in seeds]
    xi = np.atleast_1d(np.asarray(cfg.xi, dtype=float))
    if transform is not None:
        xi = transform.to_z(-cfg.k_max * problem.tau, xi)
    res = pullback.pullback_rps(problem, scheme, paths, cfg.r, cfg.k_max, cfg.tol, xi,
                                threads=threads, warm_restart=cfg.warm_restart)
    traj = integrate(problem, scheme, paths[0], -res.k_used * problem.tau, cfg.r, xi)
    extra = {"proxy_metrics": None, "problem": problem.name, "scheme": scheme.kind}
    if transform is not None:
        traj = floquet.map_back(transform.floquet, traj)
        res.values = res.values @ transform.floquet.S(cfg.r).T
        extra["floquet_mapped"] = True
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    res.write_json(os.path.join(out, "pullback.json"), extra)
    return EXIT_OK


def cmd_converge(cfg, out, threads=1, seed_offset=0, assert_order=None, band=None):
    if len(cfg.dt_list) < 3:
        raise ConfigError("converge needs at least 3 step sizes in dt_list to fit an order")
    problem, lp, transform, _, _ = _setup_run(dataclasses.replace(cfg, dt=max(cfg.dt_list),
                                                                  dt_fine=None))
    if transform is not None:
        raise ConfigError("converge supports constant-A problems only")
    target = lp if lp is not None else problem
    dt_fine = cfg.dt_fine
    for dt in cfg.dt_list:
        _check_alignment(problem.tau, dt, _opt(dt_fine, dt))
    table = analysis.strong_error_study(
        target, cfg.scheme, cfg.dt_list, r=cfg.r, pullback_depth=cfg.k_max, dt_fine=dt_fine,
        seeds=cfg.seed_list(seed_offset), xi=cfg.xi, truncation_T=cfg.truncation_T,
        reference_dt=cfg.reference_dt, threads=threads)
    fit = analysis.fit_order(table)
    table.to_csv(os.path.join(out, "error_table.csv"))
    assert_order = _opt(assert_order, cfg.assert_order)
    band = _opt(band, cfg.band)
    payload = {"fit": fit.to_dict(), "study": table.meta, "proxy_metrics": None}
    status = EXIT_OK
    if assert_order is not None:
        band = _opt(band, 0.1)
        ok = abs(fit.slope - assert_order) <= band
        payload["assertion"] = {"order": assert_order, "band": band, "passed": ok}
        if not ok:
            status = EXIT_ASSERT
    _write_json(os.path.join(out, "fit.json"), payload)
    return status


def _diag_t_grid(cfg, tau, dt):
    if cfg.t_grid is not None:
        return np.asarray(cfg.t_grid, dtype=float)
    step = _opt(cfg.t_grid_step, 5 * dt)
    top = _opt(cfg.t_grid_max, 3 * tau)
    n = noise.grid_steps(top, step, "t_grid_max / t_grid_step")
    return np.arange(n + 1) * step


def cmd_diagnose(cfg, out, threads=1, seed_offset=0):
    problem, _, transform, scheme, dt_fine = _setup_run(cfg)
    if transform is not None:
        raise ConfigError("diagnose supports constant-A problems only")
    tau = problem.tau
    t_grid = _diag_t_grid(cfg, tau, cfg.dt)
    start = _opt(cfg.start, -cfg.k_max * tau)
    a, b = cfg.window
    t_min = _opt(cfg.t_min, min(start - tau, -cfg.k_max * tau - float(t_grid.max())))
    t_max = _opt(cfg.t_max, max(b, 0.0))
    seeds = cfg.seed_list(seed_offset)[:max(1, cfg.diag_seeds)]
    paths = [noise.build_path(s, problem.d, dt_fine, 0.0, t_min, t_max) for s in seeds]
    pair = pullback.shifted_pair(problem, scheme, paths[0], (a, b), start, cfg.xi)
    series = pullback.periodicity_diagnostic(problem, scheme, paths, t_grid, cfg.k_max, cfg.xi,
                                             threads)
    pair.to_csv(os.path.join(out, "fig1_pair.csv"))
    series.to_csv(os.path.join(out, "fig2_series.csv"))
    defect = series.periodicity_defect(tau)
    tol = 10 * cfg.tol
    _write_json(os.path.join(out, "diagnose.json"), {
        "max_periodicity_defect": defect, "pair_max_defect": pair.max_defect,
        "diagnostic_tolerance": tol, "periodic": defect < tol,
        "seeds": seeds, "proxy_metrics": None})
    return EXIT_OK


def cmd_measure(cfg, out, threads=1, seed_offset=0):
    problem, lp, transform, _, _ = _setup_run(dataclasses.replace(cfg, dt=max(cfg.dt_list),
                                                                  dt_fine=None))
    if transform is not None:
        raise ConfigError("measure supports constant-A problems only")
    if lp is None and cfg.reference_dt is None:
        raise ConfigError(f"problem {problem.name!r} has no exact oracle; set reference_dt")
    study = analysis.periodic_measure_convergence(
        lp if lp is not None else problem, cfg.scheme, cfg.r, cfg.dt_list,
        n_seeds=cfg.n_seeds, pullback_depth=cfg.k_max, dt_fine=cfg.dt_fine,
        base_seed=cfg.base_seed + seed_offset, truth_seed_offset=cfg.truth_seed_offset,
        n_boot=cfg.n_boot, xi=cfg.xi, truncation_T=cfg.truncation_T,
        reference_dt=cfg.reference_dt, self_test=cfg.self_test, threads=threads)
    study.to_csv(os.path.join(out, "measure.csv"))
    _write_json(os.path.join(out, "measure.json"),
                {"study": study.meta, "proxy_metrics": analysis.PROXY_NOTE,
                 "rows": [dataclasses.asdict(r) for r in study.rows]})
    return EXIT_OK


def cmd_floquet(cfg, out, threads=1, seed_offset=0):
    problem, _ = build_problem(cfg)
    if not problem.periodic_linear:
        raise ConfigError("floquet needs a periodic-A(t) problem (mathieu or constant_matrix)")
    h = _opt(cfg.floquet_h, cfg.dt)
    data = floquet.floquet_data(problem.A_of_t, problem.tau, h)
    data.write_json(os.path.join(out, "floquet.json"))
    eye = np.eye(data.m)
    report = {
        "B": data.B.tolist(), "C": data.C.tolist(), "gamma": data.gamma,
        "log_residual": data.residual,
        "S_periodicity_defect": float(np.max(np.abs(data.s_grid[-1] - data.s_grid[0]))),
        "S_identity_defect": float(np.max(np.abs(data.s_grid - eye))),
        "proxy_metrics": None,
    }
    try:
        tr = floquet.lf_transform(problem, data)
        report.update(transformed_ok=True, margin=tr.report.margin,
                      lambda1=tr.report.lambda1, beta1=tr.problem.beta1,
                      beta2=tr.problem.beta2, period=tr.problem.tau)
        status = EXIT_OK
    except ConditionError as exc:
        report.update(transformed_ok=False, condition=exc.condition, detail=str(exc))
        status = EXIT_CONFIG
    _write_json(os.path.join(out, "transform_report.json"), report)
    return status


COMMANDS = {
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "diagnose": cmd_diagnose,
    "measure": cmd_measure,
    "floquet": cmd_floquet,
}


def make_parser():
    parser = argparse.ArgumentParser(prog="rpsde", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config file (defaults are used without one)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: available CPUs)")
    parser.add_argument("--seed-offset", type=int, default=0)
    parser.add_argument("--assert-order", type=float, default=None)
    parser.add_argument("--band", type=float, default=None)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    threads = args.threads if args.threads else parallel.default_threads()
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        os.makedirs(args.out, exist_ok=True)
        kw = dict(threads=threads, seed_offset=args.seed_offset)
        if args.command == "converge":
            kw.update(assert_order=args.assert_order, band=args.band)
        elif args.assert_order is not None or args.band is not None:
            raise ConfigError("--assert-order/--band apply to converge only")
        return COMMANDS[args.command](cfg, args.out, **kw)
    except LogarithmExistenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLOQUET
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ConditionError, DomainError, GridAlignmentError,
            DegenerateFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RpsError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
