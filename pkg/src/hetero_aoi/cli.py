"""
Command-line interface.

Every command writes CSV (UTF-8, LF, ``%.17g`` floats) preceded by ``#``
comment lines that echo the version, all options and the enumerated
parameter grid.  Failures print one JSON line to stderr and exit with a
code that identifies the failure class.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .chain import ChainTruncated, SingularChain
from .costs import LinearCost, parse_cost
from .exact import BracketError, IdentityError, iid_threshold, solve
from .mdp import NonConvergence, relative_value_iteration
from .model import ChannelParams, InvalidParameters, classify_region, near_boundary
from .simulate import SimConfig, compare_policies, default_optimal_policy, simulate
from .policy import RandomPolicy, always_ch1, always_ch2

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_BRACKET = 3
EXIT_NONCONVERGENCE = 4
EXIT_ORACLE_MISMATCH = 5

ORACLE_RTOL = 1e-3
EXP_AGE_CAP = 200

COLUMNS = {
    "classify": ["p", "q", "d", "F", "G", "H", "region"],
    "solve": ["p", "q", "d", "region", "delta_opt", "dir0", "lambda0", "dir1", "lambda1",
              "lambda1_set", "argmin_candidates"],
    "oracle-check": ["p", "q", "d", "region", "closed_form", "rvi_gain", "rel_err",
                     "iterations"],
    "simulate": ["policy", "mean", "std_err", "horizon", "seed"],
    "compare": ["policy", "mean", "std_err", "horizon", "seed"],
    "sweep-threshold": ["d", "p", "threshold", "divergent"],
    "sweep-age": ["p", "q", "d", "policy", "mean", "std_err", "horizon", "seed"],
}


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return "%.17g" % x
    return str(x)


def _floats(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str):
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        f = float(v)
        if f != int(f):
            raise CliError(EXIT_INVALID, "invalid_params", f"d must be an integer, got {v!r}")
        out.append(int(f))
    return out


def read_grid_file(path: str):
    """Rows ``p,q,d`` from a CSV file with that header; ``#`` lines are ignored."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows or not {"p", "q", "d"} <= set(rows[0]):
        raise CliError(EXIT_INVALID, "invalid_params", f"{path}: need columns p,q,d")
    return [(float(r["p"]), float(r["q"]), _ints(r["d"])[0]) for r in rows]


def build_grid(args, iid: bool = False):
    """Parameter triples in deterministic order (p outer, then q, then d)."""
    if getattr(args, "grid_file", None):
        triples = read_grid_file(args.grid_file)
    else:
        if args.p is None or args.d is None:
            raise CliError(EXIT_INVALID, "invalid_params", "need --p and --d (or --grid-file)")
        ps, ds = _floats(args.p), _ints(args.d)
        if iid:
            triples = [(p, 1.0 - p, d) for d in ds for p in ps]
        else:
            if args.q is None:
                raise CliError(EXIT_INVALID, "invalid_params", "need --q (or --grid-file)")
            triples = list(itertools.product(ps, _floats(args.q), ds))
    out = []
    for p, q, d in triples:
        try:
            out.append(ChannelParams(p, q, d))
        except InvalidParameters as exc:
            raise CliError(EXIT_INVALID, "invalid_params", str(exc)) from exc
    return out


def _header(args, grid) -> list:
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    lines = [f"# hetero-aoi {__version__}",
             "# command=" + args.command,
             "# options=" + json.dumps(opts, sort_keys=True, default=str)]
    if grid is not None:
        lines.append("# grid=" + ";".join(f"{fmt(g.p)},{fmt(g.q)},{g.d}" for g in grid))
    return lines


def _cost(args):
    try:
        return parse_cost(args.cost)
    except ValueError as exc:
        raise CliError(EXIT_INVALID, "invalid_params", str(exc)) from exc


def _age_cap(args, cost) -> int:
    if args.age_cap is not None:
        return args.age_cap
    return 2000 if isinstance(cost, LinearCost) else EXP_AGE_CAP


def _sim_config(args) -> SimConfig:
    try:
        return SimConfig(args.horizon, args.replications, args.seed, args.warmup)
    except ValueError as exc:
        raise CliError(EXIT_INVALID, "invalid_params", str(exc)) from exc


def cmd_classify(args):
    grid = build_grid(args)
    rows = []
    for g in grid:
        region, (F, G, H) = classify_region(g)
        if near_boundary(g):
            logging.getLogger(__name__).warning("%s lies within 1e-9 of a region boundary", g)
        rows.append([g.p, g.q, g.d, F, G, H, region.value])
    return grid, rows, []


def _solve_row(g, eps):
    res = solve(g, eps=eps)
    pol = res.policy
    lam1_set = str(pol.lambda1_set) if pol.lambda1_set is not None else fmt(pol.lambda1)
    return [g.p, g.q, g.d, res.region.value, res.delta_opt, pol.dir0.value, int(pol.lambda0),
            pol.dir1.value, int(pol.lambda1), lam1_set, "|".join(res.argmin)]


def cmd_solve(args):
    grid = build_grid(args)
    return grid, [_solve_row(g, args.eps) for g in grid], []


def cmd_oracle_check(args):
    grid = build_grid(args)
    rows, worst = [], 0.0
    for g in grid:
        res = solve(g, eps=args.eps)
        sol = relative_value_iteration(g, age_cap=args.age_cap or 2000, tol=args.tol)
        rel = abs(res.delta_opt - sol.gain) / sol.gain
        worst = max(worst, rel)
        rows.append([g.p, g.q, g.d, res.region.value, res.delta_opt, sol.gain, rel,
                     sol.iterations])
    ok = worst < ORACLE_RTOL
    footer = [f"# max_rel_err={fmt(worst)} threshold={fmt(ORACLE_RTOL)} pass={int(ok)}"]
    if not ok:
        footer.append(CliError(EXIT_ORACLE_MISMATCH, "oracle_mismatch",
                               f"max relative error {worst:.3g} >= {ORACLE_RTOL}"))
    return grid, rows, footer


def _policy_for(name: str, g: ChannelParams, cost, cap: int):
    if name == "optimal":
        return default_optimal_policy(g, cost, cap)
    table = {"mmWave": always_ch1, "sub-6GHz": always_ch2, "random": lambda: RandomPolicy(0.5)}
    return table[name]()


def cmd_simulate(args):
    grid = build_grid(args)
    if len(grid) != 1:
        raise CliError(EXIT_INVALID, "invalid_params", "simulate takes a single (p, q, d)")
    g = grid[0]
    cost = _cost(args)
    cfg = _sim_config(args)
    pol = _policy_for(args.policy, g, cost, _age_cap(args, cost))
    r = simulate(pol, g, cost, cfg)
    name = "Age-optimal" if args.policy == "optimal" else r.policy_name
    return grid, [[name, r.mean, r.std_error, cfg.horizon, cfg.seed]], []


def cmd_compare(args):
    grid = build_grid(args)
    if len(grid) != 1:
        raise CliError(EXIT_INVALID, "invalid_params", "compare takes a single (p, q, d)")
    cost = _cost(args)
    cfg = _sim_config(args)
    res = compare_policies(grid[0], cost, cfg, age_cap=_age_cap(args, cost))
    return grid, [[r.policy_name, r.mean, r.std_error, cfg.horizon, cfg.seed] for r in res], []


def cmd_sweep_threshold(args):
    if args.p is None:
        args.p = ",".join("%.2f" % x for x in np.arange(1, 100) / 100)
    grid = build_grid(args, iid=True)
    rows = []
    for g in grid:
        lam = iid_threshold(g, eps=args.eps)
        rows.append([g.d, g.p, lam, int(math.isinf(lam))])
    return grid, rows, []


def cmd_sweep_age(args):
    grid = build_grid(args)
    cost = _cost(args)
    cfg = _sim_config(args)
    rows = []
    for g in grid:
        for r in compare_policies(g, cost, cfg, age_cap=_age_cap(args, cost)):
            rows.append([g.p, g.q, g.d, r.policy_name, r.mean, r.std_error, cfg.horizon,
                         cfg.seed])
    return grid, rows, []


COMMANDS = {
    "classify": (cmd_classify, "region label and the F, G, H values"),
    "solve": (cmd_solve, "closed-form optimal policy and average age"),
    "oracle-check": (cmd_oracle_check, "closed form against relative value iteration"),
    "simulate": (cmd_simulate, "Monte Carlo estimate for one policy"),
    "compare": (cmd_compare, "Age-optimal, mmWave, sub-6GHz and Random on common random numbers"),
    "sweep-threshold": (cmd_sweep_threshold, "optimal threshold for an i.i.d. Channel 1 over p"),
    "sweep-age": (cmd_sweep_age, "policy comparison over a parameter grid"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetero-aoi",
                                     description="Age-optimal scheduling over two heterogeneous channels")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--p", help="comma-separated OFF self-transition probabilities")
        sp.add_argument("--q", help="comma-separated ON self-transition probabilities")
        sp.add_argument("--d", help="comma-separated Channel-2 service times")
        sp.add_argument("--grid-file", help="CSV file with columns p,q,d")
        sp.add_argument("--alpha", type=float, default=None, help="discount factor (recorded only)")
        sp.add_argument("--age-cap", type=int, default=None,
                        help="age truncation for value iteration (default 2000, 200 for nonlinear costs)")
        sp.add_argument("--tol", type=float, default=1e-9, help="value-iteration tolerance")
        sp.add_argument("--eps", type=float, default=1e-9, help="bisection tolerance")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--horizon", type=int, default=1_000_000)
        sp.add_argument("--replications", type=int, default=20)
        sp.add_argument("--warmup", type=int, default=None)
        sp.add_argument("--cost", default="linear", help="'linear' or 'exp:<eta>'")
        sp.add_argument("--out", default=None, help="output CSV path (default stdout)")
        if name == "simulate":
            sp.add_argument("--policy", default="optimal",
                            choices=["optimal", "mmWave", "sub-6GHz", "random"])
    return parser


def _render(args, grid, rows, footer) -> str:
    buf = io.StringIO(newline="")
    for line in _header(args, grid):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[args.command])
    for row in rows:
        w.writerow([fmt(x) for x in row])
    for line in footer:
        if isinstance(line, str):
            buf.write(line + "\n")
    return buf.getvalue()


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        grid, rows, footer = args.func(args)
        text = _render(args, grid, rows, footer)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        for item in footer:
            if isinstance(item, CliError):
                return _fail(item.code, item.kind, str(item))
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc))
    except InvalidParameters as exc:
        return _fail(EXIT_INVALID, "invalid_params", str(exc))
    except BracketError as exc:
        return _fail(EXIT_BRACKET, "bracket_failure", str(exc))
    except NonConvergence as exc:
        return _fail(EXIT_NONCONVERGENCE, "nonconvergence", str(exc))
    except (IdentityError, ChainTruncated, SingularChain, ValueError) as exc:
        return _fail(EXIT_FAILURE, type(exc).__name__, str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
