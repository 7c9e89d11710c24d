"""Command-line entry points.

Subcommands: cone eval|dual|rho-star, solve, exp, suite.  Spectra are
comma-separated literals; configs are JSON files.  Exit code 0 on success
(and all verdicts passing for exp/suite), 1 on failing verdicts, 2 on
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import fd, lab, serialize, symcone


def usage_error(msg):
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(2)


def parse_spectrum(text):
    try:
        lam = np.array([float(x) for x in text.split(",")])
    except ValueError:
        usage_error(f"malformed spectrum {text!r}; "
                    "expected comma-separated reals")
    if lam.size < 2:
        usage_error("a spectrum needs at least two entries")
    return lam


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_cone(args):
    lam = parse_spectrum(args.spectrum)
    k = args.k
    if not 1 <= k <= lam.size:
        usage_error(f"k={k} out of range for n={lam.size}")
    if args.action == "eval":
        _emit(symcone.in_cone(lam, k).as_dict())
    elif args.action == "dual":
        _emit(symcone.in_dual_cone(lam, k).as_dict())
    else:
        out = {"k": k, "n": lam.size}
        try:
            out["rho_star"] = symcone.rho_star(lam, k)
        except ValueError as exc:
            usage_error(str(exc))
        if args.oracle:
            out["oracle"] = symcone.rho_star_oracle(lam, k,
                                                    samples=args.oracle,
                                                    seed=args.seed)
        _emit(out)
    return 0


def cmd_solve(args):
    cfg = serialize.load_json(args.config)
    ecfg = lab.parse_config(cfg)
    if ecfg.domain is None:
        usage_error("solve needs a 'domain' in the config")
    grid, coeff, f, u = lab._solve(ecfg, ecfg.h_ladder[0])
    sup, inf, osc = fd.sup_inf_osc(u)
    os.makedirs(args.out, exist_ok=True)
    serialize.field_to_csv(u, os.path.join(args.out, "u.csv"))
    serialize.field_to_binary(u, os.path.join(args.out, "u.bin"))
    _emit({"h": ecfg.h_ladder[0], "unknowns":
           int(np.count_nonzero(grid.interior)),
           "sup": sup, "inf": inf, "osc": osc,
           "out": args.out})
    return 0


def cmd_exp(args):
    cfg = serialize.load_json(args.config)
    cfg.setdefault("name", args.name)
    try:
        rep = lab.run_one(args.name, cfg)
    except ValueError as exc:
        usage_error(str(exc))
    lab.write_report(rep, args.out)
    _emit(serialize.report_to_dict(rep))
    return 0 if rep.passed else 1


def cmd_suite(args):
    try:
        reports, code = lab.run_suite(args.config, out_dir=args.out)
    except ValueError as exc:
        usage_error(str(exc))
    _emit({"reports": [{"name": r.name, "passed": r.passed,
                        "wall_time": r.wall_time} for r in reports],
           "exit_code": code})
    return code


def build_parser():
    p = argparse.ArgumentParser(
        prog="conelab",
        description="Cone-restricted elliptic estimates: membership tests, "
                    "lattice solves, and numerical experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("cone", help="cone membership and gauge values")
    pc.add_argument("action", choices=["eval", "dual", "rho-star"])
    pc.add_argument("--lambda", dest="spectrum", required=True,
                    help="comma-separated spectrum, e.g. 1,2,3")
    pc.add_argument("--k", type=int, required=True)
    pc.add_argument("--oracle", type=int, default=0, metavar="N",
                    help="also run the sampling oracle with N samples")
    pc.add_argument("--seed", type=int, default=0)
    pc.set_defaults(fn=cmd_cone)

    ps = sub.add_parser("solve", help="one Dirichlet solve from a config")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", default=".")
    ps.set_defaults(fn=cmd_solve)

    pe = sub.add_parser("exp", help="run one named experiment")
    pe.add_argument("name", choices=sorted(lab.EXPERIMENTS))
    pe.add_argument("--config", required=True)
    pe.add_argument("--out", default=".")
    pe.set_defaults(fn=cmd_exp)

    pu = sub.add_parser("suite", help="run an experiment battery")
    pu.add_argument("--config", required=True)
    pu.add_argument("--out", default=".")
    pu.set_defaults(fn=cmd_suite)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
