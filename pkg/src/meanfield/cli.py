"""Command-line interface: ``meanfield <command> [flags]``.

Every command writes one table.  CSV output starts with ``#`` comment lines
carrying the schema version, the command and a JSON object of all
parameters (defaults included), followed by a header row and data rows with
17 significant digits.  ``--format json`` writes the same content as a
single JSON object.  Exit status is 0 on success, 1 on a domain error and 2
on a usage error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from .activations import ActivationError, parse_activation
from .bounds import ratio_bounds, verify_theorem
from .maps import (NetworkHyperparams, NoFixedPointError, chi1, corr_derivative,
                   corr_fixed_point, corr_map, eoc_curve, iterate_depth, solve_q_star_eoc,
                   variance_fixed_point_general, variance_map, w_map)
from .simulate import SimConfig, simulate
from .spectrum import jacobian_moments

SCHEMA_VERSION = "1"


class DomainError(Exception):
    pass


# --- argument types -------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _activation(text: str):
    try:
        return parse_activation(text)
    except ActivationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


# --- hyperparameters ------------------------------------------------------


def _network(act, sigma_b2: float, sigma_w2: float | None):
    """``(hp, q*)``: on the edge of chaos unless ``sigma_w2`` is given."""
    if sigma_w2 is None:
        fp, sw = solve_q_star_eoc(act, sigma_b2)
        return NetworkHyperparams(act, sw, sigma_b2), fp.value
    hp = NetworkHyperparams(act, sigma_w2, sigma_b2)
    return hp, variance_fixed_point_general(hp).value


def _with_a(act, a: float):
    return parse_activation(f"{act.kind}:{a!r}:{act.k!r}")


def _activations(args) -> list:
    if getattr(args, "sweep_a", None):
        return [_with_a(args.activation, a) for a in args.sweep_a]
    return [args.activation]


def _single(values: list[float], flag: str) -> float:
    if len(values) != 1:
        raise DomainError(f"{flag} takes a single value here, got {len(values)}")
    return values[0]


# --- commands -------------------------------------------------------------
#
# Each returns (columns, rows, summary) with rows as lists of numbers.


def cmd_var_map(args):
    sb = _single(args.sigma_b2, "--sigma-b2")
    act = args.activation
    if args.sigma_w2 is None:
        _, sw = solve_q_star_eoc(act, sb)
    else:
        sw = args.sigma_w2
    hp = NetworkHyperparams(act, sw, sb)
    q_max = args.q_max if args.q_max is not None else 4.0 * max(act.a ** 2, sb)
    rows = [[q, variance_map(hp, q), w_map(act, sb, q)]
            for q in np.linspace(0.0, q_max, args.grid)]
    return ["q", "variance_map", "w_map"], rows, {"sigma_w2": sw}


def cmd_corr_map(args):
    sb = _single(args.sigma_b2, "--sigma-b2")
    rows = []
    for act in _activations(args):
        hp, q = _network(act, sb, args.sigma_w2)
        rho = np.linspace(args.rho_min, 1.0, args.grid)
        r = corr_map(hp, q, rho)
        inner = np.abs(rho) < 1.0
        dr = np.full(rho.shape, chi1(hp, q))
        dr[inner] = corr_derivative(hp, q, rho[inner])
        rows += [[act.a, hp.sigma_w2, q, x, y, y - x, d] for x, y, d in zip(rho, r, dr)]
    return ["a", "sigma_w2", "q_star", "rho", "R", "R_minus_rho", "dR"], rows, {}


def cmd_eoc_curve(args):
    points = eoc_curve(args.activation, args.sigma_b2)
    failed = [p for p in points if not p.ok]
    if len(failed) == len(points):
        raise DomainError(failed[0].error)
    for p in failed:
        print(f"warning: sigma_b2={p.sigma_b2:g}: {p.error}", file=sys.stderr)
    rows = [[p.sigma_b2, p.sigma_w2, p.q_star, p.chi1] for p in points]
    return ["sigma_b2", "sigma_w2", "q_star", "chi1"], rows, {}


def cmd_phase_diagram(args):
    if not args.sigma_w2_grid:
        raise DomainError("phase-diagram needs --sigma-w2-grid")
    rows = []
    for sb in args.sigma_b2:
        for sw in args.sigma_w2_grid:
            hp = NetworkHyperparams(args.activation, sw, sb)
            try:
                q = variance_fixed_point_general(hp).value
            except NoFixedPointError:
                rows.append([sw, sb, math.inf, math.nan, math.nan])
                continue
            rows.append([sw, sb, q, chi1(hp, q), corr_fixed_point(hp, q).value])
    return ["sigma_w2", "sigma_b2", "q_star", "chi1", "rho_star"], rows, {}


def cmd_ratio_bounds(args):
    rows = []
    for act in _activations(args):
        for sb in args.sigma_b2:
            fp, _ = solve_q_star_eoc(act, sb)
            y = sb / act.a ** 2
            lo, hi = ratio_bounds(y)
            rows.append([act.a, sb, y, lo, act.a / math.sqrt(fp.value), hi])
    return ["a", "sigma_b2", "y", "lambda_lower", "measured_ratio", "ratio_upper"], rows, {}


_REPORT_COLUMNS = ["a", "sigma_b2", "sigma_w2", "q_star", "y", "lambda_lower", "ratio_upper",
                   "measured_ratio", "corr_bound", "measured_gap", "moment_bound",
                   "measured_moment_dev", "all_satisfied", "corr_bound_vacuous",
                   "moment_bound_vacuous"]


def cmd_verify_theorem(args):
    rows = []
    for act in _activations(args):
        for sb in args.sigma_b2:
            rep = verify_theorem(act, sb, args.grid)
            rows.append([getattr(rep, c) for c in _REPORT_COLUMNS])
    return _REPORT_COLUMNS, rows, {}


def cmd_depth_dynamics(args):
    sb = _single(args.sigma_b2, "--sigma-b2")
    hp, q = _network(args.activation, sb, args.sigma_w2)
    rows = []
    for rho0 in args.rho0:
        traj = iterate_depth(hp, rho0, args.depth, "correlation", q_star=q).values
        rows += [[rho0, l, r] for l, r in enumerate(traj)]
    return ["rho0", "layer", "rho"], rows, {"sigma_w2": hp.sigma_w2, "q_star": q}


def cmd_jacobian_moments(args):
    sb = _single(args.sigma_b2, "--sigma-b2")
    hp, q = _network(args.activation, sb, args.sigma_w2)
    rows = []
    for scheme in (["gaussian", "orthogonal"] if args.scheme == "both" else [args.scheme]):
        m = jacobian_moments(hp, q, args.depth, scheme)
        rows.append([m.L, m.s1, m.mu1, m.mu2, m.chi1, m.m1, m.m2, m.var_jjt])
    cols = ["L", "s1", "mu1", "mu2", "chi1", "m1", "m2", "var_jjt"]
    return cols, rows, {"sigma_w2": hp.sigma_w2, "q_star": q}


def cmd_simulate(args):
    sb = _single(args.sigma_b2, "--sigma-b2")
    rho0 = _single(args.rho0, "--rho0")
    hp, q = _network(args.activation, sb, args.sigma_w2)
    if args.scheme == "both":
        raise DomainError("simulate needs --scheme gaussian or orthogonal")
    config = SimConfig(hp=hp, width=args.width, depth=args.depth, trials=args.trials,
                       seed=args.seed, scheme=args.scheme, rho0=rho0,
                       measure_jacobian=args.jacobian)
    res = simulate(config, q)
    mf = iterate_depth(hp, rho0, args.depth, "correlation", q_star=q).values
    rows = [[l, res.q_traj_mean[l], res.q_traj_stderr[l], res.rho_traj_mean[l],
             res.rho_traj_stderr[l], mf[l]] for l in range(args.depth + 1)]
    summary = {"sigma_w2": hp.sigma_w2, "q_star": q, "trials": res.trials,
               "diverged": res.diverged}
    if res.jacobian is not None:
        j = res.jacobian
        summary.update(jac_m1_hat=j.m1_hat, jac_m1_stderr=j.m1_stderr, jac_m2_hat=j.m2_hat,
                       jac_m2_stderr=j.m2_stderr, jac_var_hat=j.var_hat,
                       jac_var_hat_normalised=j.var_hat_normalised,
                       jac_var_hat_normalised_stderr=j.var_hat_normalised_stderr,
                       jac_ill_conditioned=j.ill_conditioned)
    cols = ["layer", "q_mean", "q_stderr", "rho_mean", "rho_stderr", "rho_meanfield"]
    return cols, rows, summary


# --- parser ---------------------------------------------------------------


def _common(p, *, sweep=False, grid=None, sigma_w2=True):
    p.add_argument("--activation", type=_activation, required=True,
                   help="kind[:a[:k]], e.g. shtanh:2.0:1.0")
    p.add_argument("--sigma-b2", type=_float_list, required=True,
                   help="bias variance (comma list where several are accepted)")
    if sigma_w2:
        p.add_argument("--sigma-w2", type=float, default=None,
                       help="weight variance; edge of chaos when omitted")
    if sweep:
        p.add_argument("--sweep-a", type=_float_list, default=None,
                       help="comma list of a values replacing the activation's a")
    if grid is not None:
        p.add_argument("--grid", type=_positive_int, default=grid, help="grid points")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanfield",
                                     description="Mean-field analysis of deep random networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("var-map", help="variance map V(q) and auxiliary map W(q)")
    _common(p, grid=101)
    p.add_argument("--q-max", type=float, default=None)
    p.set_defaults(func=cmd_var_map)

    p = sub.add_parser("corr-map", help="correlation map R(rho) and its slope")
    _common(p, sweep=True, grid=101)
    p.add_argument("--rho-min", type=float, default=0.0)
    p.set_defaults(func=cmd_corr_map)

    p = sub.add_parser("eoc-curve", help="edge-of-chaos sigma_w2 and q* per sigma_b2")
    _common(p, sigma_w2=False)
    p.set_defaults(func=cmd_eoc_curve)

    p = sub.add_parser("phase-diagram", help="q*, chi1 and rho* over a (sigma_w2, sigma_b2) grid")
    _common(p, sigma_w2=False)
    p.add_argument("--sigma-w2-grid", type=_float_list, default=None)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("ratio-bounds", help="sandwich bounds on a / sqrt(q*)")
    _common(p, sweep=True, sigma_w2=False)
    p.set_defaults(func=cmd_ratio_bounds)

    p = sub.add_parser("verify-theorem", help="measured gap and moment ratio against the bounds")
    _common(p, sweep=True, grid=1001, sigma_w2=False)
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser("depth-dynamics", help="correlation trajectories over depth")
    _common(p)
    p.add_argument("--rho0", type=_float_list, default=[0.01, 0.6])
    p.add_argument("--depth", type=_positive_int, default=50)
    p.set_defaults(func=cmd_depth_dynamics)

    p = sub.add_parser("jacobian-moments", help="spectral moments of J J^T")
    _common(p)
    p.add_argument("--depth", type=_positive_int, default=32)
    p.add_argument("--scheme", choices=("gaussian", "orthogonal", "both"), default="both")
    p.set_defaults(func=cmd_jacobian_moments)

    p = sub.add_parser("simulate", help="finite-width Monte Carlo")
    _common(p)
    p.add_argument("--width", type=_positive_int, default=400)
    p.add_argument("--depth", type=_positive_int, default=20)
    p.add_argument("--trials", type=_positive_int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho0", type=_float_list, default=[0.6])
    p.add_argument("--scheme", choices=("gaussian", "orthogonal"), default="gaussian")
    p.add_argument("--jacobian", action="store_true", help="also measure the Jacobian spectrum")
    p.set_defaults(func=cmd_simulate)
    return parser


# --- output ---------------------------------------------------------------


def _params(args) -> dict:
    """Every flag with its effective value, in a form :func:`params_to_argv` can replay."""
    out = {}
    for key, value in vars(args).items():
        if key in ("func", "command", "format", "output"):
            continue
        if hasattr(value, "spec"):
            value = value.spec
        out[key] = value
    return out


def params_to_argv(command: str, params: dict) -> list[str]:
    """Rebuild an argument list from a command name and its params map."""
    argv = [command]
    for key, value in params.items():
        flag = "--" + key.replace("_", "-")
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            argv += [flag, ",".join(repr(float(v)) for v in value)]
        else:
            argv += [flag, str(value)]
    return argv


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def render(fmt: str, command: str, params: dict, columns, rows, summary) -> str:
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "command": command, "params": params,
               "columns": list(columns),
               "rows": [{c: _jsonable(v) for c, v in zip(columns, row)} for row in rows],
               "summary": {k: _jsonable(v) for k, v in summary.items()}}
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write(f"# command: {command}\n")
    buf.write(f"# params: {json.dumps(params, sort_keys=True)}\n")
    for key, value in summary.items():
        buf.write(f"# summary.{key}: {_fmt(value)}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        columns, rows, summary = args.func(args)
    except (DomainError, NoFixedPointError, ActivationError, ValueError) as exc:
        print(f"meanfield {args.command}: error: {exc}", file=sys.stderr)
        return 1
    text = render(args.format, args.command, _params(args), columns, rows, summary)
    if args.output:
        with open(args.output, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
