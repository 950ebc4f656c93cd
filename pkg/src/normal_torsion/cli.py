"""Command-line driver: compute, optimize, verify, solve."""
from __future__ import annotations

import argparse
import ast
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as bd
from .disc_grid import GridError, PoissonConvergenceError, build_grid
from .export import dumps, read_grassmann_csv, write_field_csv, write_grassmann_csv, write_json
from .functional import apply_gauge, el_residual, gauge_descent, gauge_exp, total_torsion
from .geometry import (
    ImmersionError,
    check_conformal,
    frame_defects,
    initial_frame,
    metric,
    normal_curvature_from_torsion,
    normal_curvature_ricci,
    pairs,
    ricci_bound_check,
    second_fundamental,
    to_vector,
    torsion,
)
from .grassmann import SmallnessViolation, build_potentials, manufactured_system, solve_system
from .surfaces import SURFACES, SurfaceError, list_surfaces, make_surface

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BOUND = 0, 2, 3, 4
COMMANDS = ("compute", "optimize", "verify", "solve")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    surface: str = "complex_curve"
    params: dict = field(default_factory=dict)
    n: int | None = None
    M: int = 65
    tol: float = 1e-5
    max_iters: int = 2000
    picard_tol: float = 1e-10
    max_picard: int = 500
    perturb: float = 0.0
    out: str = "normal_torsion_out"
    seed: int = 0
    trials: int = 200
    wente: bool = False
    manufactured: bool = False
    s_zero: bool = False
    s_from: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        if "command" not in data:
            raise ConfigError("missing command")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not isinstance(self.M, int) or self.M < 9 or self.M % 2 == 0:
            raise ConfigError(f"M must be an odd integer >= 9, got {self.M!r}")
        if self.n is not None and (not isinstance(self.n, int) or self.n < 1):
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        for name in ("tol", "picard_tol"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and np.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be a positive number, got {val!r}")
        for name in ("max_iters", "max_picard", "trials"):
            val = getattr(self, name)
            if not isinstance(val, int) or val < (1 if name == "trials" else 0):
                raise ConfigError(f"{name} must be a non-negative integer, got {val!r}")
        if not np.isfinite(self.perturb):
            raise ConfigError("perturb must be finite")
        sources = [self.manufactured, self.s_zero, self.s_from is not None]
        if sum(sources) > 1:
            raise ConfigError("choose at most one of --manufactured, --s-zero, --s-from")
        if any(sources) and self.command != "solve":
            raise ConfigError("--manufactured, --s-zero and --s-from only apply to solve")
        if self.wente and self.command != "verify":
            raise ConfigError("--wente only applies to verify")
        if self.manufactured and self.n not in (None, 3):
            raise ConfigError("the manufactured system is defined for n = 3")
        if (self.s_zero or self.s_from) and self.n is None:
            raise ConfigError("--s-zero and --s-from need --n")
        if self.s_from is not None and not Path(self.s_from).is_dir():
            raise ConfigError(f"--s-from {self.s_from!r} is not a directory")
        if self.needs_surface:
            self.immersion()  # validates name, parameters and codimension

    @property
    def needs_surface(self):
        if self.command == "solve":
            return not (self.manufactured or self.s_zero or self.s_from)
        return not (self.command == "verify" and self.wente)

    def immersion(self):
        if self.surface not in SURFACES:
            raise ConfigError(f"unknown surface {self.surface!r}; known: {', '.join(SURFACES)}")
        params = dict(self.params)
        if self.surface == "plane_embed" and self.n is not None:
            if params.get("n", self.n) != self.n:
                raise ConfigError("--n and --param n disagree")
            params["n"] = self.n
        try:
            X = make_surface(self.surface, **params)
        except (SurfaceError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.n is not None and X.n != self.n:
            raise ConfigError(f"surface {self.surface!r} has codimension {X.n}, not {self.n}")
        return X


def _parse_param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects k=v, got {text!r}")
    try:
        val = ast.literal_eval(value)
    except (ValueError, SyntaxError):
        val = value
    if isinstance(val, tuple):
        val = ",".join(str(x) for x in val)
    return key.strip(), val


def build_parser():
    parser = argparse.ArgumentParser(
        prog="normal-torsion",
        description="Normal-bundle torsion of immersed discs: geometry, critical frames, "
                    "the Grassmann-type system and its bounds.",
    )
    parser.add_argument("--list-surfaces", action="store_true", help="list the surface catalog and exit")
    sub = parser.add_subparsers(dest="command")
    for name, help_ in [
        ("compute", "geometry of the initial frame"),
        ("optimize", "gauge descent to a critical frame"),
        ("verify", "check every bound on the computed critical frame"),
        ("solve", "solve the Grassmann-type system"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--surface", default="complex_curve")
        p.add_argument("--param", action="append", default=[], metavar="K=V")
        p.add_argument("--n", type=int)
        p.add_argument("--M", type=int, default=65)
        p.add_argument("--tol", type=float, default=1e-5, help="descent tolerance on summed residuals")
        p.add_argument("--max-iters", type=int, default=2000)
        p.add_argument("--picard-tol", type=float, default=1e-10)
        p.add_argument("--max-picard", type=int, default=500)
        p.add_argument("--perturb", type=float, default=0.0,
                       help="rotate the first normal pair by perturb*uv(1-|w|^2) before descent")
        p.add_argument("--out", default="normal_torsion_out")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, default=200)
        if name == "verify":
            p.add_argument("--wente", action="store_true", help="run the randomized Wente suite")
        if name == "solve":
            p.add_argument("--manufactured", action="store_true")
            p.add_argument("--s-zero", action="store_true")
            p.add_argument("--s-from", help="directory with s_sigma_theta.csv files")
    return parser


def config_from_args(args) -> RunConfig:
    data = {k: v for k, v in vars(args).items() if k not in ("list_surfaces", "param")}
    data["params"] = dict(_parse_param(p) for p in args.param)
    return RunConfig.from_mapping(data)


# ----------------------------------------------------------------------
# pipeline pieces


def _start_frame(cfg, X, grid):
    F = initial_frame(X, grid)
    if cfg.perturb and X.n >= 2:
        a = np.zeros((X.n * (X.n - 1) // 2, grid.n_nodes))
        a[0] = cfg.perturb * grid.u * grid.v * (1 - grid.u**2 - grid.v**2)
        F = apply_gauge(F, gauge_exp(a, X.n))
    return F


def _write_torsion(out, grid, T):
    for i in (0, 1):
        for s, t in pairs(T.shape[1]):
            write_field_csv(out / f"torsion_{i + 1}_{s + 1}_{t + 1}.csv", grid, T[i, s, t])


def _curvature(X, F, grid):
    m = metric(X, grid)
    L = second_fundamental(X, F, grid)
    return m, L, normal_curvature_ricci(L, m)


def cmd_compute(cfg: RunConfig):
    out = Path(cfg.out)
    grid = build_grid(cfg.M)
    X = cfg.immersion()
    F = _start_frame(cfg, X, grid)
    m, L, S = _curvature(X, F, grid)
    T = torsion(F, grid)
    S_t = normal_curvature_from_torsion(T, grid)
    conf = check_conformal(m)
    Svec = to_vector(S)
    write_field_csv(out / "metric_h11.csv", grid, m.h11)
    write_field_csv(out / "metric_h12.csv", grid, m.h12)
    write_field_csv(out / "metric_h22.csv", grid, m.h22)
    write_field_csv(out / "conformal_defect.csv", grid, (np.abs(m.h11 - m.h22) + np.abs(m.h12)) / m.W)
    _write_torsion(out, grid, T)
    write_grassmann_csv(out, grid, Svec, prefix="s")
    tang, ortho = frame_defects(F, X, grid)
    summary = {
        "command": "compute",
        "surface": X.name,
        "params": X.params,
        "n": X.n,
        "M": cfg.M,
        "T_X": total_torsion(m, T, grid),
        "S_sup": bd.sup_norm(Svec),
        "S_l2": bd.l2_norm(grid, Svec),
        "curvature_route_discrepancy": float(np.abs(S - S_t).max()) if X.n > 1 else 0.0,
        "conformal": {"flag": X.conformal, **conf},
        "ricci_bound": ricci_bound_check(S, L, m),
        "frame_defects": {"tangential": tang, "orthonormality": ortho},
    }
    write_json(out / "summary.json", summary)
    return summary, EXIT_OK


def _descend(cfg, X, grid, log_path=None):
    F0 = _start_frame(cfg, X, grid)
    F, report = gauge_descent(X, F0, grid, max_iters=cfg.max_iters, tol=cfg.tol)
    if log_path is not None:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(report.to_jsonl())
    return F, report


def cmd_optimize(cfg: RunConfig):
    out = Path(cfg.out)
    grid = build_grid(cfg.M)
    X = cfg.immersion()
    F, report = _descend(cfg, X, grid, out / "descent.jsonl")
    T = torsion(F, grid)
    for s in range(F.shape[0]):
        for c in range(F.shape[1]):
            write_field_csv(out / f"frame_{s + 1}_{c + 1}.csv", grid, F[s, c])
    _write_torsion(out, grid, T)
    res = el_residual(T, grid)
    converged = report.reason == "converged"
    summary = {
        "command": "optimize",
        "surface": X.name,
        "params": X.params,
        "n": X.n,
        "M": cfg.M,
        "tol": cfg.tol,
        "iterations": report.iterations,
        "reason": report.reason,
        "converged": converged,
        "T_X_initial": report.records[0]["T_X"],
        "T_X": report.final["T_X"],
        "max_abs_T": float(np.abs(T).max()),
        "residual_interior": res["interior"],
        "residual_boundary": res["boundary"],
    }
    write_json(out / "optimize.json", summary)
    return summary, EXIT_OK if converged else EXIT_NUMERICAL


def _verify_wente(cfg):
    grid = build_grid(cfg.M)
    reps = bd.wente_suite(grid, trials=cfg.trials, seed=cfg.seed)
    ratios = [r.measured / r.inputs["raw_bound"] for r in reps if r.inputs["raw_bound"] > 0]
    violations = sum(not r.passed for r in reps)
    summary = {
        "command": "verify",
        "suite": "wente",
        "M": cfg.M,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "violations": violations,
        "max_ratio": max(ratios) if ratios else 0.0,
        "rel_slack": 0.05,
    }
    return summary, EXIT_OK if violations == 0 else EXIT_BOUND


def verification_report(X, F, T_X, grid, max_picard=500, picard_tol=1e-10):
    """All bound checks on a critical frame; returns the bound list and the Grassmann solution."""
    n = X.n
    m, L, S = _curvature(X, F, grid)
    Svec = to_vector(S)
    slack = bd.slack_for(grid)
    reports = []
    s_sup = bd.sup_norm(Svec)
    if n < 2 or s_sup <= slack:
        reports.append(bd.BoundReport("lower_bound", 0.0, T_X, kind="lower", applicable=False,
                                      inputs={"reason": "S vanishes"}))
    elif bd.is_constant(grid, Svec):
        reports.append(bd.BoundReport("lower_bound_constant", bd.lower_bound_constant(Svec[:, 0], n),
                                      T_X, kind="lower", tolerance=slack))
    else:
        rep = bd.lower_bound_nonconstant(Svec, grid, measured=T_X, n=n)
        rep.tolerance = slack
        reports.append(rep)
    G, sysrep = solve_system(Svec, grid, max_picard=max_picard, tol=picard_tol) if n >= 2 else (Svec, None)
    reports.append(bd.small_solution_upper_bound(G, Svec, grid, n=n, measured=T_X))
    reports.append(bd.linfty_bound_primary(G, Svec, grid, n=n))
    alt, zs, smaller = bd.linfty_bound_alternative(G, Svec, grid, n=n)
    reports.append(alt)
    reports.extend(zs)
    _, zrep = bd.z_field(Svec, grid)
    reports.append(zrep)
    reports.append(bd.BoundReport("ricci_pointwise", 0.0, ricci_bound_check(S, L, m)["max_excess"],
                                  tolerance=slack))
    extra = {"linfty_smaller": smaller, "system": sysrep.to_dict() if sysrep else None}
    if n >= 3:
        extra["smallness"] = bd.smallness_condition(n, T_X, s_sup)
    return reports, extra


def cmd_verify(cfg: RunConfig):
    if cfg.wente:
        summary, code = _verify_wente(cfg)
        write_json(Path(cfg.out) / "verify.json", summary)
        return summary, code
    grid = build_grid(cfg.M)
    X = cfg.immersion()
    F, report = _descend(cfg, X, grid, Path(cfg.out) / "descent.jsonl")
    T_X = report.final["T_X"]
    reports, extra = verification_report(X, F, T_X, grid, cfg.max_picard, cfg.picard_tol)
    summary = {
        "surface": X.name,
        "n": X.n,
        "grid": {"M": cfg.M, "h": grid.h},
        "T_X": T_X,
        "descent": {"iterations": report.iterations, "reason": report.reason,
                    "residual_interior": report.final["residual_interior"],
                    "residual_boundary": report.final["residual_boundary"]},
        "bounds": [r.to_dict() for r in reports],
        **extra,
    }
    write_json(Path(cfg.out) / "verify.json", summary)
    return summary, EXIT_OK if all(r.passed for r in reports) else EXIT_BOUND


def cmd_solve(cfg: RunConfig):
    out = Path(cfg.out)
    grid = build_grid(cfg.M)
    G_star = None
    if cfg.manufactured:
        G_star, S = manufactured_system(grid)
        source = "manufactured"
    elif cfg.s_zero:
        S = np.zeros((cfg.n * (cfg.n - 1) // 2, grid.n_nodes))
        source = "zero"
    elif cfg.s_from:
        try:
            S = read_grassmann_csv(cfg.s_from, grid, cfg.n, prefix="s")
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        source = f"csv:{cfg.s_from}"
    else:
        X = cfg.immersion()
        _, _, Sm = _curvature(X, initial_frame(X, grid), grid)
        S = to_vector(Sm)
        source = f"surface:{X.name}"
    try:
        G, report = solve_system(S, grid, max_picard=cfg.max_picard, tol=cfg.picard_tol)
    except SmallnessViolation as exc:
        hist = {k: v for k, v in exc.history.items() if k != "iterates"}
        write_json(out / "system_report.json", {"source": source, "error": str(exc), "history": hist})
        raise
    write_grassmann_csv(out, grid, G, prefix="g")
    summary = {"command": "solve", "source": source, "M": cfg.M, "N": len(S),
               "G_sup": bd.sup_norm(G), "report": report.to_dict()}
    if G_star is not None:
        summary["recovery_error"] = float(np.abs(G - G_star).max()) if G.size else 0.0
    write_json(out / "system_report.json", summary)
    return summary, EXIT_OK if report.converged else EXIT_NUMERICAL


HANDLERS = {"compute": cmd_compute, "optimize": cmd_optimize, "verify": cmd_verify, "solve": cmd_solve}


def _thread_limit():
    raw = os.environ.get("NORMAL_TORSION_THREADS")
    if raw is None or raw == "":
        return None
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"NORMAL_TORSION_THREADS must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ConfigError(f"NORMAL_TORSION_THREADS must be a positive integer, got {raw!r}")
    return k


def run(cfg: RunConfig, threads=None):
    if threads is None:
        return HANDLERS[cfg.command](cfg)
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=threads):
        return HANDLERS[cfg.command](cfg)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_surfaces:
        for name, doc in list_surfaces().items():
            print(f"{name:22s} {doc}")
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("normal-torsion: error: a command is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = config_from_args(args)
        threads = _thread_limit()
    except ConfigError as exc:
        print(f"normal-torsion: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary, code = run(cfg, threads)
    except ConfigError as exc:
        print(f"normal-torsion: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SmallnessViolation, PoissonConvergenceError, ImmersionError, GridError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"normal-torsion: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    sys.stdout.write(dumps(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
