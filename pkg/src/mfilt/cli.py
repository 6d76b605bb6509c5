"""Command line interface: ``mfilt <command> ...``.

All commands print JSON on stdout (``sweep`` prints CSV).  Exit status is 0
on success, 1 when a verification check fails, 2 on usage errors or
unreadable input files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import conditional as cond
from .filtered_space import (
    InvalidSpaceError,
    SpaceFormatError,
    WEIGHT_MODES,
    generate_dyadic,
    generate_random_tree,
    load,
    load_function,
    space_to_dict,
    validate,
)
from .norm_estimator import norm_lower_bound
from .positive_operator import alpha_to_dict, load_alpha, random_coefficients
from .principal_sets import build_principal_tree, carleson_check, verify_properties
from .report import DEFAULT_EXPONENTS, DEFAULT_SHAPES, sweep, sweep_csv, verify_instance
from .sawyer_testing import ExponentPair, brute_force_testing, testing_constant


class InputError(Exception):
    """Bad input file or parameter; exit status 2."""


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=1, allow_nan=False)
    sys.stdout.write("\n")


def _space(args):
    try:
        return load(args.space)
    except (OSError, SpaceFormatError, InvalidSpaceError) as exc:
        raise InputError(f"{args.space}: {exc}") from None


def _alpha(args, space):
    try:
        return load_alpha(space, args.alpha)
    except (OSError, SpaceFormatError) as exc:
        raise InputError(f"{args.alpha}: {exc}") from None


def _function(path, space):
    try:
        return load_function(path, space.n_leaves)
    except (OSError, SpaceFormatError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _exponents(args):
    try:
        return ExponentPair(args.p, args.q)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_gen(args) -> int:
    if args.kind == "dyadic":
        space = generate_dyadic(args.depth, args.branching, args.weights, args.seed)
    else:
        space = generate_random_tree(args.levels, args.leaves, args.weights, args.seed)
    text = json.dumps(space_to_dict(space), indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.alpha_out:
        alpha = random_coefficients(space, args.seed)
        Path(args.alpha_out).write_text(json.dumps(alpha_to_dict(alpha), indent=1) + "\n",
                                        encoding="utf-8")
    return 0


def cmd_check(args) -> int:
    from .filtered_space import space_from_dict
    try:
        data = json.loads(Path(args.space).read_text(encoding="utf-8"))
        space = space_from_dict(data)
    except InvalidSpaceError as exc:
        _emit({"valid": False, "violations": exc.violations})
        return 1
    except (OSError, ValueError) as exc:
        raise InputError(f"{args.space}: {exc}") from None
    _emit({"valid": True, "violations": validate(space), "n_leaves": space.n_leaves,
           "n_levels": space.n_levels, "atoms_per_level": list(space.n_atoms)})
    return 0


def cmd_expect(args) -> int:
    space = _space(args)
    f = _function(args.f, space)
    try:
        if args.doob:
            window = tuple(args.window) if args.window else None
            values = cond.doob_maximal(space, f, window)
            out = {"doob_maximal": values.tolist(),
                   "window": list(cond.level_window(space, window))}
        else:
            out = {"level": args.level, "values": cond.cond_expect(space, f, args.level).tolist()}
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _emit(out)
    return 0


def cmd_norm(args) -> int:
    space = _space(args)
    alpha = _alpha(args, space)
    exps = _exponents(args)
    est = norm_lower_bound(space, alpha, exps.p, exps.q, restarts=args.restarts,
                           iters=args.iters, tol=args.tol, seed=args.seed)
    _emit(est.to_dict())
    return 0


def cmd_testing(args) -> int:
    space = _space(args)
    alpha = _alpha(args, space)
    exps = _exponents(args)
    fast = testing_constant(space, alpha, exps)
    out = fast.to_dict()
    status = 0
    if args.brute_force:
        try:
            slow = brute_force_testing(space, alpha, exps)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        agree = all(
            abs(a - b) <= 1e-12 * max(abs(a), abs(b))
            for a, b in ((fast.C2, slow.C2), (fast.C2_q, slow.C2_q),
                         (fast.C2_pprime, slow.C2_pprime))
        )
        out["brute_force"] = slow.to_dict()
        out["agree"] = agree
        status = 0 if agree else 1
    _emit(out)
    return status


def cmd_principal(args) -> int:
    space = _space(args)
    f = _function(args.f, space)
    try:
        tree = build_principal_tree(space, f, args.i0)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    props = verify_properties(space, f, tree)
    cc = carleson_check(space, f, tree, args.p)
    out = tree.to_dict()
    out["properties"] = {k: {"passed": ok, "slack": v if np.isfinite(v) else None}
                         for k, (ok, v) in props.checks.items()}
    out["violations"] = props.violations
    out["carleson"] = {"p": args.p, "sum": cc.total, "maximal_bound": cc.maximal_bound,
                       "stated_bound": cc.stated_bound, "passed": cc.passed,
                       "stated_bound_holds": cc.stated_holds}
    _emit(out)
    return 0 if props.passed and cc.passed else 1


def cmd_verify(args) -> int:
    space = _space(args)
    alpha = _alpha(args, space)
    exps = _exponents(args)
    f = _function(args.f, space) if args.f else None
    if f is not None and np.any(f < 0):
        raise InputError("f must be nonnegative")
    try:
        rep = verify_instance(space, alpha, exps, f=f, i0=args.i0, seed=args.seed,
                              restarts=args.restarts, iters=args.iters, tol=args.tol,
                              brute_force=True if args.brute_force else None)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _emit(rep.to_dict())
    if args.csv:
        Path(args.csv).write_text(sweep_csv([rep]), encoding="utf-8", newline="")
    return 0 if rep.passed else 1


def cmd_sweep(args) -> int:
    shapes = args.shapes.split(",") if args.shapes else list(DEFAULT_SHAPES)
    exps = args.exponents.split(",") if args.exponents else list(DEFAULT_EXPONENTS)
    try:
        reports = sweep(args.n, args.seed, shapes, exps, restarts=args.restarts,
                        iters=args.iters, tol=args.tol)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = sweep_csv(reports)
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    return 0 if all(r.passed for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfilt",
        description="Positive operators on finite filtered measure spaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def space_opt(p):
        p.add_argument("--space", required=True, help="space file (JSON)")

    def exps_opt(p):
        p.add_argument("--p", type=float, required=True)
        p.add_argument("--q", type=float, required=True)

    def search_opts(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=8)
        p.add_argument("--iters", type=int, default=500)
        p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("gen", help="generate a space file")
    p.add_argument("--kind", choices=("dyadic", "tree"), default="dyadic")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--leaves", type=int, default=8)
    p.add_argument("--weights", choices=WEIGHT_MODES, default="unit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write here instead of stdout")
    p.add_argument("--alpha-out", help="also write random coefficients here")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("check", help="validate a space file")
    space_opt(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("expect", help="conditional expectation or maximal function")
    space_opt(p)
    p.add_argument("--f", required=True, help="leaf function file")
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--doob", action="store_true", help="maximal function instead")
    p.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_expect)

    p = sub.add_parser("norm", help="lower bound for the operator norm")
    space_opt(p)
    p.add_argument("--alpha", required=True)
    exps_opt(p)
    search_opts(p)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("testing", help="testing constants")
    space_opt(p)
    p.add_argument("--alpha", required=True)
    exps_opt(p)
    p.add_argument("--brute-force", action="store_true", help="compare with exhaustive oracle")
    p.set_defaults(func=cmd_testing)

    p = sub.add_parser("principal", help="principal-set forest of f")
    space_opt(p)
    p.add_argument("--f", required=True)
    p.add_argument("--i0", type=int, default=0)
    p.add_argument("--p", type=float, default=2.0)
    p.set_defaults(func=cmd_principal)

    p = sub.add_parser("verify", help="run every check on one instance")
    space_opt(p)
    p.add_argument("--alpha", required=True)
    exps_opt(p)
    p.add_argument("--f", help="leaf function for the principal-set checks")
    p.add_argument("--i0", type=int, default=0)
    search_opts(p)
    p.add_argument("--brute-force", action="store_true",
                   help="force the exhaustive oracle (up to 20 atoms per level)")
    p.add_argument("--csv", help="also write a CSV row here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="verify many random instances, CSV output")
    p.add_argument("--n", type=int, default=100, help="number of instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shapes", help="comma list of dyadic:D:B[:w] / tree:L:N[:w]")
    p.add_argument("--exponents", help="comma list of P:Q")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--csv", help="write here instead of stdout")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"mfilt {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
