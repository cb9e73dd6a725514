"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 capacity/guard/numeric-bound error,
3 certificate failure (check command only).  All floating point output is
printed at 16 significant digits, and every JSON document carries a schema
field, so identical (command, seed) invocations are byte-identical across
runs and worker counts.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Optional, Sequence

from . import flags as flags_mod
from . import optmeas, rho, simlab
from .errors import CapacityError, CubeflagsError, NumericInstabilityError

ENV_WORKERS = "CUBEFLAGS_WORKERS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    return format(float(x), ".16g")


def _round16(obj):
    """Pin every float in a JSON-able structure to 16 significant digits."""
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _round16(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round16(v) for v in obj]
    return obj


def _emit_json(doc: dict, out: Optional[str]):
    text = json.dumps(_round16(doc), indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_rows(rows: list[dict], header: list[str], fmt: str, out: Optional[str]):
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(_round16(rows), indent=2) + "\n"
    else:  # aligned table
        widths = {h: max(len(h), *(len(str(r[h])) for r in rows)) if rows else len(h) for h in header}
        lines = ["  ".join(h.ljust(widths[h]) for h in header)]
        for r in rows:
            lines.append("  ".join(str(r[h]).ljust(widths[h]) for h in header))
        text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_config(path: Optional[str]) -> dict:
    """key=value presets ('#' comments); command-line flags override."""
    if not path:
        return {}
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {raw.rstrip()}")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
    return out


def _resolve_workers(args, config: dict) -> int:
    if getattr(args, "workers", None) is not None:
        return args.workers
    if "workers" in config:
        return int(config["workers"])
    return int(os.environ.get(ENV_WORKERS, "1"))


def _build_flag(args) -> flags_mod.Flag:
    if args.flag == "binary":
        return flags_mod.binary_flag(args.order)
    if args.flag == "mt":
        return flags_mod.mt_flag(args.order)
    if args.flag == "file":
        if not args.file:
            raise UsageError("--flag file requires --file PATH")
        with open(args.file) as fh:
            return flags_mod.parse_flag_text(fh.read())
    raise UsageError(f"unknown flag kind {args.flag!r}")


def build_parser() -> _Parser:
    p = _Parser(
        prog="cubeflags",
        description=(
            "Constants and certificates for equal subset sums in logarithmic "
            "random sets and the concentration of divisors."
        ),
    )
    p.add_argument("--config", help="key=value preset file (flags override)")
    p.add_argument("--workers", type=int, default=None, help=f"worker count (env {ENV_WORKERS})")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser(
        "rho-table",
        help="solve the chain of tree fixed-point equations; one row per index",
    )
    s.add_argument("--max-j", type=int, default=13)
    s.add_argument("--format", choices=("table", "json", "csv"), default="csv")
    s.add_argument("--out")

    s = sub.add_parser("rho-limit", help="the limit of the chain, from its scalar equation")
    s.add_argument("--tol", type=float, default=1e-15)
    s.add_argument("--json", action="store_true")

    s = sub.add_parser("theta", help="lower-bound exponent of the order-r binary flag")
    s.add_argument("--r", type=int, required=True)
    s.add_argument("--json", action="store_true")

    sub.add_parser("eta", help="divisor-concentration exponent log 2 / log(2/rho)")

    s = sub.add_parser("constants", help="every named constant, as JSON")
    s.add_argument("--out")

    s = sub.add_parser(
        "check",
        help="build the extremal system of a flag and emit its entropy certificate",
    )
    s.add_argument("--flag", choices=("binary", "mt", "file"), required=True)
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--file", help="flag specification file (with --flag file)")
    s.add_argument("--perturb", type=float, action="append", default=None,
                   help="extra threshold perturbation epsilon (repeatable)")
    s.add_argument("--out")

    s = sub.add_parser("measures", help="dump the extremal measure, thresholds, entropies")
    s.add_argument("--flag", choices=("binary", "mt", "file"), required=True)
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--file")
    s.add_argument("--out")

    s = sub.add_parser("tree", help="dump the cell tree (levels, genotypes, members)")
    s.add_argument("--flag", choices=("binary", "mt", "file"), required=True)
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--file")
    s.add_argument("--out")

    sim = sub.add_parser("simulate", help="seeded Monte Carlo experiments")
    simsub = sim.add_subparsers(dest="experiment", required=True)

    s = simsub.add_parser("equal-sums", help="k-fold equal subset sums in a window of a logarithmic random set")
    s.add_argument("--D", type=float, default=1e6)
    s.add_argument("--c", type=float, default=0.1)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.add_argument("--out", help="write per-trial census rows as CSV")

    s = simsub.add_parser("amplify", help="stack per-window equal sums into a multiplicative family")
    s.add_argument("--D1", type=int, default=2)
    s.add_argument("--D2", type=int, default=10**6)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")

    s = simsub.add_parser("delta-int", help="divisor-window statistic of random integers")
    s.add_argument("--X", type=int, default=10**9)
    s.add_argument("--samples", "--trials", dest="samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.add_argument("--out")

    s = simsub.add_parser("delta-perm", help="divisor-length statistic of random permutations")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--samples", "--trials", dest="samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.add_argument("--out")

    s = simsub.add_parser("delta-poly", help="divisor-degree statistic of random polynomial factor laws")
    s.add_argument("--q", type=int, default=2)
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--model", choices=("poisson", "nb"), default="poisson")
    s.add_argument("--samples", "--trials", dest="samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dmin", type=int, default=None)
    s.add_argument("--dmax", type=int, default=None)
    s.add_argument("--json", action="store_true")
    s.add_argument("--out")

    return p


def _cmd_rho_table(args, workers: int) -> int:
    sol, _ = rho.solve_rho_chain(args.max_j)
    rows = [
        {"j": j, "rho_j": _fmt(x), "residual": _fmt(res)}
        for j, (x, res) in enumerate(zip(sol.rhos, sol.residuals), start=1)
    ]
    if args.format == "json":
        _emit_json({"schema": "cubeflags.rhotable.v1", "rows": rows}, args.out)
    else:
        _emit_rows(rows, ["j", "rho_j", "residual"], args.format, args.out)
    return 0


def _cmd_rho_limit(args, workers: int) -> int:
    res = rho.rho_limit(args.tol)
    if args.json:
        _emit_json(
            {
                "schema": "cubeflags.rholimit.v1",
                "value": res.value,
                "series_terms_used": res.terms_used,
                "series_tail_bound": res.tail_bound,
                "equation_residual": res.residual,
            },
            None,
        )
    else:
        print(_fmt(res.value))
    return 0


def _cmd_theta(args, workers: int) -> int:
    table_j = min(max(args.r - 1, 1), 13)
    sol, _ = rho.solve_rho_chain(table_j)
    lim = rho.rho_limit()
    val = rho.theta(args.r, sol, lim.value)
    padded = args.r - 1 > len(sol.rhos)
    if args.json:
        _emit_json(
            {
                "schema": "cubeflags.theta.v1",
                "r": args.r,
                "theta": val,
                "chain_solved_to": len(sol.rhos),
                "padded_with_limit": padded,
            },
            None,
        )
    else:
        print(_fmt(val))
    return 0


def _cmd_eta(args, workers: int) -> int:
    print(_fmt(rho.eta(rho.rho_limit().value)))
    return 0


def _cmd_constants(args, workers: int) -> int:
    _emit_json(rho.constants().to_json_dict(), args.out)
    return 0


def _cmd_check(args, workers: int, config: dict) -> int:
    flag = _build_flag(args)
    eps = list(optmeas.PERTURB_EPSILONS)
    if args.perturb:
        eps.extend(args.perturb)
    cap = int(config.get("subflag_cap", flags_mod.SUBFLAG_SPACE_CAP))
    _system, cert = optmeas.certify_system(flag, eps_list=eps, workers=workers, cap=cap)
    _emit_json(cert.to_json_dict(), args.out)
    return 0 if cert.ok else 3


def _cmd_measures(args, workers: int) -> int:
    flag = _build_flag(args)
    data = optmeas.optimal_measure(flag)
    optmeas.optimal_parameters(data)
    _emit_json(optmeas.measures_json_dict(data), args.out)
    return 0


def _cmd_tree(args, workers: int) -> int:
    flag = _build_flag(args)
    _emit_json(flags_mod.tree_json_dict(flag), args.out)
    return 0


def _cmd_simulate(args, workers: int) -> int:
    if args.experiment == "equal-sums":
        est = simlab.equal_sums_probability(
            args.D, args.c, args.k, args.trials, args.seed, workers
        )
        doc = {
            "schema": "cubeflags.equalsums.v1",
            "D": est.D,
            "c": est.c,
            "k": est.k,
            "trials": est.trials,
            "successes": est.successes,
            "estimate": est.estimate,
            "ci95": [est.ci_low, est.ci_high],
            "inexact_trials": est.inexact_trials,
            "window": list(est.window),
            "note": "qualitative; no finite-D agreement with asymptotic thresholds is claimed",
        }
        if args.out:
            rows = simlab.equal_sums_rows(args.D, args.c, args.k, args.trials, args.seed, workers)
            _emit_rows(rows, ["trial", "set_size", "k_max", "exact"], "csv", args.out)
        if args.json:
            _emit_json(doc, None)
        else:
            print(
                f"estimate {_fmt(est.estimate)}  ci95 [{_fmt(est.ci_low)}, {_fmt(est.ci_high)}]"
                f"  successes {est.successes}/{est.trials}  window {est.window}"
            )
        return 0
    if args.experiment == "amplify":
        res = simlab.amplify_demo(args.D1, args.D2, args.k, args.alpha, args.seed)
        doc = {
            "schema": "cubeflags.amplify.v1",
            "k_max": res.k_max,
            "witness_sum": res.witness_sum,
            "witnesses": [list(w) for w in res.witnesses[:128]],
            "windows": res.detail["windows"],
        }
        if args.json:
            _emit_json(doc, None)
        else:
            succ = sum(1 for w in res.detail["windows"] if w["success"])
            print(f"multiplicity {res.k_max} from {succ} successful windows; common sum {res.witness_sum}")
        return 0
    if args.experiment == "delta-int":
        stats = simlab.sample_delta_integer(args.X, args.samples, args.seed, workers)
    elif args.experiment == "delta-perm":
        stats = simlab.sample_delta_perm(args.n, args.samples, args.seed, workers)
    elif args.experiment == "delta-poly":
        d_range = None
        if args.dmin is not None and args.dmax is not None:
            d_range = (args.dmin, args.dmax)
        else:
            lo, hi = simlab.lemma_degree_range(args.n)
            if lo > hi:
                print(
                    f"note: default degree window [{lo}, {hi}] is empty at n={args.n}; "
                    "pass --dmin/--dmax for a nonvacuous simulation",
                    file=sys.stderr,
                )
        stats = simlab.sample_delta_poly(
            args.q, args.n, args.model, args.samples, args.seed, workers, d_range
        )
    else:
        raise UsageError(f"unknown experiment {args.experiment!r}")
    rows = [
        {"trial": i, "param": str(s.param), "delta": s.delta}
        for i, s in enumerate(stats.samples)
    ]
    if args.out:
        _emit_rows(rows, ["trial", "param", "delta"], "csv", args.out)
    if args.json:
        _emit_json(
            {
                "schema": "cubeflags.delta.v1",
                "kind": stats.kind,
                "samples": len(stats.samples),
                "mean_delta": stats.mean_delta,
                "max_delta": stats.max_delta,
            },
            None,
        )
    else:
        print(f"samples {len(stats.samples)}  mean delta {_fmt(stats.mean_delta)}  max {stats.max_delta}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args.config)
        workers = _resolve_workers(args, config)
        if args.command == "rho-table":
            return _cmd_rho_table(args, workers)
        if args.command == "rho-limit":
            return _cmd_rho_limit(args, workers)
        if args.command == "theta":
            return _cmd_theta(args, workers)
        if args.command == "eta":
            return _cmd_eta(args, workers)
        if args.command == "constants":
            return _cmd_constants(args, workers)
        if args.command == "check":
            return _cmd_check(args, workers, config)
        if args.command == "measures":
            return _cmd_measures(args, workers)
        if args.command == "tree":
            return _cmd_tree(args, workers)
        if args.command == "simulate":
            return _cmd_simulate(args, workers)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CapacityError, NumericInstabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CubeflagsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
