"""Command line interface: ``nsfrac <command> -c config.json``.

Exit status is 0 when every check passes, 2 on soft failures (conditions not
met, bound violated, no convergence) and 1 on hard errors.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import (
    build_ifs_levels,
    build_operator_config,
    build_spec,
    build_theta,
    load_config,
    validate_config,
)
from .core import BaseOperator, RefinementGrid, SampledFunction, depth_for_spacing
from .dimension import dimension_report
from .engine import (
    backward_trajectory,
    evaluate_series_many,
    stationary_fixed_point,
    truncation_level,
)
from .errors import ConfigInvalid, FractalError, NoConvergence, SummabilityDoubtful
from .fractal_operator import (
    bounded_below_report,
    check_linearity,
    measured_l_norm,
    neumann_inverse,
    operator_norm_bound,
    perturbation_report,
    stationary_norm_bound,
)
from .sampling import random_pl
from .set_ifs import (
    backward_trajectory_sets,
    forward_trajectory_sets,
    hausdorff_distance,
    invariant_ball_radius,
)
from .spaces import (
    bv_contraction_factor,
    check_bv_conditions,
    check_convex_conditions,
    check_vbeta_conditions,
    rb_contraction,
)

COMMANDS = ("build", "evaluate", "check", "dimension", "bounds", "compare-stationary", "ifs")

EXIT_PASS, EXIT_ERROR, EXIT_SOFT = 0, 1, 2

#: default curve resolution: grid spacing at most |I| / DEFAULT_RESOLUTION
DEFAULT_RESOLUTION = 4096


@dataclass
class Outcome:
    report: dict
    passed: bool
    rows: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# helpers


def _grid(spec_or_partition, cfg):
    p = getattr(spec_or_partition, "partition", spec_or_partition)
    depth = cfg.get("depth")
    if depth is None:
        depth = depth_for_spacing(p, p.length / DEFAULT_RESOLUTION)
    return RefinementGrid.build(p, depth)


def _describe_spec(spec):
    base = []
    for m in range(1, spec.base.n_explicit + 1):
        e = spec.base.entry(m)
        base.append(e.describe() if isinstance(e, BaseOperator) else {"table": len(e)})
    return {
        "knots": spec.partition.knots.tolist(),
        "scaling": spec.scaling.as_list(),
        "tail": spec.scaling.tail,
        "alpha_sup": spec.alpha_sup,
        "base": base,
    }


def _curve(fn: SampledFunction):
    return np.column_stack([fn.abscissae, fn.values])


def _space(cfg):
    space = cfg["space"]
    theta = build_theta(cfg)
    if space == "convex" and theta is None:
        raise ConfigInvalid("space 'convex' needs a theta entry",
                            problems=[{"path": "$.theta", "message": "missing"}])
    return space, theta


# ---------------------------------------------------------------------------
# commands


def cmd_build(cfg) -> Outcome:
    spec = build_spec(cfg)
    grid = _grid(spec, cfg)
    try:
        traj = backward_trajectory(None, spec, grid=grid, tol=cfg["tol"])
    except NoConvergence as exc:
        rep = exc.report
        return Outcome({"spec": _describe_spec(spec), "trajectory": rep.to_dict(), "pass": False},
                       False, _curve(rep.function))
    fn = traj.function
    knots = spec.partition.knots
    knot_err = float(np.max(np.abs(fn(knots) - spec.germ(knots))))
    report = {
        "spec": _describe_spec(spec),
        "grid": {"depth": grid.depth, "points": len(grid)},
        "trajectory": traj.to_dict(),
        "knot_residual": knot_err,
        "pass": True,
    }
    return Outcome(report, True, _curve(fn))


def cmd_evaluate(cfg) -> Outcome:
    spec = build_spec(cfg)
    ev = cfg.get("evaluate", {})
    p = spec.partition
    if "points" in ev:
        xs = np.asarray(ev["points"], dtype=float)
    else:
        xs = np.linspace(p.x0, p.xN, ev.get("n", 257))
    ys = evaluate_series_many(xs, spec, cfg["tol"])
    report = {
        "spec": _describe_spec(spec),
        "points": int(xs.size),
        "truncation_level": truncation_level(spec, cfg["tol"]),
        "pass": True,
    }
    return Outcome(report, True, np.column_stack([xs, ys]))


def _random_pair(rng, spec, grid):
    """Two functions through the germ's endpoints, as the RB operators require."""
    f = grid.sample(spec.germ)
    out = []
    for _ in range(2):
        r = random_pl(rng, 12, spec.partition.domain)(grid.points)
        r = r - np.interp(grid.points, [grid.points[0], grid.points[-1]], [r[0], r[-1]])
        out.append(SampledFunction(grid.points, f + r))
    return out


def cmd_check(cfg) -> Outcome:
    spec = build_spec(cfg)
    space, theta = _space(cfg)
    if space == "bv":
        cond = check_bv_conditions(spec.scaling)
    elif space == "vbeta":
        cond = check_vbeta_conditions(spec.scaling)
    else:
        cond = check_convex_conditions(spec.scaling, spec.partition.maps, theta)
    report = {"space": space, "conditions": cond.to_dict(), "pass": bool(cond.passed)}
    if space == "bv" and cond.passed:
        rng = np.random.default_rng(cfg["seed"])
        grid = RefinementGrid.build(spec.partition, cfg.get("depth", 4))
        worst = 0.0
        for k in range(cfg["samples"]):
            m = 1 + k % spec.scaling.n_explicit
            g, h = _random_pair(rng, spec, grid)
            out, inp = rb_contraction(spec, grid, m, g, h, norm="bv")
            worst = max(worst, out / (bv_contraction_factor(spec.scaling, m) * inp))
        ok = worst <= 1.0 + 1e-12
        report["contraction"] = {"pairs": cfg["samples"], "worst_ratio_to_bound": worst, "pass": ok}
        report["pass"] = report["pass"] and ok
    return Outcome(report, report["pass"])


def cmd_dimension(cfg) -> Outcome:
    spec = build_spec(cfg)
    space, theta = _space(cfg)
    rep = dimension_report(spec, space, tuple(cfg["k_range"]), theta=theta,
                           tol=min(cfg["tol"], 1e-10))
    out = rep.to_dict()
    out["slope"] = rep.estimate.slope
    return Outcome(out, rep.status == "PASS")


def cmd_bounds(cfg) -> Outcome:
    op = build_operator_config(cfg)
    spec = build_spec(cfg, require_distinct_base=False)
    f = spec.germ
    grid = _grid(op.partition, cfg)
    tol = cfg["tol"]
    rng = np.random.default_rng(cfg["seed"])

    pert = perturbation_report(f, op, grid=grid, tol=tol * 1e-2)
    g = random_pl(rng, 12, op.partition.domain)
    c, d = rng.uniform(-2, 2, size=2)
    lin = check_linearity(f, g, float(c), float(d), op, grid=grid, tol=tol * 1e-2)
    report = {
        "alpha_sup": op.alpha_sup,
        "c_l": op.c_l,
        "perturbation": pert.to_dict(),
        "linearity": {"deviation": lin, "limit": 10 * tol, "pass": lin <= 10 * tol},
        "norm": {
            "measured_l_norm": measured_l_norm(f, op, grid),
            "operator_norm_bound": operator_norm_bound(f, op, grid),
        },
    }
    passed = pert.passed and lin <= 10 * tol
    if op.alpha_sup < op.inversion_threshold():
        below = bounded_below_report(f, op, grid=grid, tol=tol * 1e-2)
        inv = neumann_inverse(f, op, grid=grid, tol=tol)
        Fi = backward_trajectory(None, op.spec_for(inv), grid=grid, tol=tol * 1e-2).function
        resid = float(np.max(np.abs(Fi.values - grid.sample(f))))
        report["bounded_below"] = below.to_dict()
        report["neumann"] = {"residual": resid, "limit": 10 * tol, "pass": resid <= 10 * tol}
        passed = passed and below.passed and resid <= 10 * tol
    else:
        report["neumann"] = {"skipped": "alpha_sup >= 1/(1+C_L)"}
    report["pass"] = passed
    return Outcome(report, passed)


def cmd_compare_stationary(cfg) -> Outcome:
    spec = build_spec(cfg)
    grid = _grid(spec, cfg)
    tol = cfg["tol"]
    limit = backward_trajectory(None, spec, grid=grid, tol=tol).function
    fixed = stationary_fixed_point(1, spec, grid=grid, tol=tol)
    diff = float(np.max(np.abs(limit.values - fixed.values)))
    sc = spec.scaling
    stationary = (spec.base.n_explicit == 1 and sc.tail == "repeat-last"
                  and all(sc.as_list()[0] == lvl for lvl in sc.as_list()))
    f_norm = float(np.max(np.abs(grid.sample(spec.germ))))
    report = {"sup_difference": diff, "stationary": stationary, "tol": tol}
    passed = diff <= 2 * tol if stationary else True
    entry = spec.base.entry(1)
    if isinstance(entry, BaseOperator) and stationary:
        l_norm = float(np.max(np.abs(entry.apply(spec.germ, spec.partition)(grid.points)))) / f_norm
        bound = stationary_norm_bound(spec.alpha_sup, l_norm, f_norm)
        norm = float(np.max(np.abs(limit.values)))
        report["norm"] = {"value": norm, "bound": bound, "measured_l_norm": l_norm,
                          "pass": norm <= bound + 1e-12}
        passed = passed and norm <= bound + 1e-12
    report["pass"] = passed
    return Outcome(report, passed, _curve(limit))


def cmd_ifs(cfg) -> Outcome:
    levels = build_ifs_levels(cfg)
    spec = cfg["ifs"]
    A0 = np.asarray(spec["A0"], dtype=float)
    max_levels = spec.get("max_levels", 30)
    tol = spec.get("tol", 1e-4)
    report = {"lipschitz": [lvl.lipschitz for lvl in levels]}
    passed = True
    if "ball" in spec:
        b = spec["ball"]
        report["ball_radius"] = invariant_ball_radius(levels, b["q"], b["mu"], b["M"])
    rows = None
    try:
        back = backward_trajectory_sets(levels, A0, max_levels, tol)
        report["backward"] = back.to_dict()
        rows = back.points
    except SummabilityDoubtful as exc:
        report["backward"] = {"error": exc.to_dict()}
        passed = False
    except NoConvergence as exc:
        report["backward"] = exc.report.to_dict()
        rows = exc.report.points
        passed = False
    fwd = forward_trajectory_sets(levels, A0, max_levels, tol)
    report["forward"] = fwd.to_dict()
    if rows is not None:
        report["backward_forward_distance"] = hausdorff_distance(rows, fwd.points)
    report["pass"] = passed
    return Outcome(report, passed, rows)


HANDLERS = {
    "build": cmd_build,
    "evaluate": cmd_evaluate,
    "check": cmd_check,
    "dimension": cmd_dimension,
    "bounds": cmd_bounds,
    "compare-stationary": cmd_compare_stationary,
    "ifs": cmd_ifs,
}


# ---------------------------------------------------------------------------
# output


def _plain(obj):
    """Convert numpy scalars/arrays to JSON-native types; reject non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite number in report")
        return x
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dump_csv(rows) -> str:
    lines = ["x,y"]
    lines.extend(f"{float(x)!r},{float(y)!r}" for x, y in np.asarray(rows, dtype=float))
    return "\n".join(lines) + "\n"


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="nsfrac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("run",):
        sp = sub.add_parser(name, help="run the experiment named in the config" if name == "run"
                            else f"{name} experiment")
        sp.add_argument("-c", "--config", required=True, help="JSON run configuration")
        sp.add_argument("-o", "--out", help="CSV output (curves and point sets)")
        sp.add_argument("--report", help="JSON report path (default: stdout)")
        sp.add_argument("--tol", type=float, help="convergence tolerance")
        sp.add_argument("--depth", type=int, help="refinement grid depth")
        sp.add_argument("--kmin", type=int, help="smallest dyadic level in the regression")
        sp.add_argument("--kmax", type=int, help="largest dyadic level in the regression")
        sp.add_argument("--seed", type=int, help="seed for sampled checks")
        sp.add_argument("--space", choices=("bv", "vbeta", "convex"), help="function space for checks")
    return parser


def _merge_overrides(cfg, args):
    cfg = dict(cfg)
    for key in ("tol", "depth", "seed", "space"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.kmin is not None or args.kmax is not None:
        k_min, k_max = cfg["k_range"]
        cfg["k_range"] = [k_min if args.kmin is None else args.kmin,
                          k_max if args.kmax is None else args.kmax]
    return validate_config(cfg)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_overrides(load_config(args.config), args)
        command = args.command
        if command == "run":
            command = cfg.get("kind")
            if command is None:
                raise ConfigInvalid("'run' needs a 'kind' entry in the config",
                                    problems=[{"path": "$.kind", "message": "missing"}])
        outcome = HANDLERS[command](cfg)
        outcome.report["command"] = command
        outcome.report["config"] = cfg
        text = dump_report(outcome.report)
        outputs = cfg.get("outputs", {})
        csv_path = args.out or outputs.get("csv")
        report_path = args.report or outputs.get("report")
        if csv_path and outcome.rows is not None:
            _write(csv_path, dump_csv(outcome.rows))
        if report_path:
            _write(report_path, text)
        else:
            sys.stdout.write(text)
    except FractalError as exc:
        sys.stderr.write(json.dumps(_plain_error(exc), sort_keys=True) + "\n")
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"code": "ERROR", "message": str(exc)}, sort_keys=True) + "\n")
        return EXIT_ERROR
    return EXIT_PASS if outcome.passed else EXIT_SOFT


def _plain_error(exc):
    try:
        return _plain(exc.to_dict())
    except ValueError:
        return {"code": exc.code, "message": str(exc)}


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
