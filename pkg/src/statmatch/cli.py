"""``statmatch`` command line.

Subcommands: ``solve``, ``simulate``, ``classify``, ``experiment``.
Exit codes: 0 success, 1 failed suite or solver error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import analytics as an
from . import experiments as ex
from . import lp
from . import simulator as sim
from .instance import InstanceError, example_instance, load_instance

BUILTINS = ("b1", "b2", "b3")
POLICIES = [k.value for k in sim.PolicyKind]


class UsageError(Exception):
    pass


def _g(v) -> str:
    return "" if v is None else format(float(v), ".9g")


def _add_instance_args(p):
    p.add_argument("--instance", required=True, help="instance JSON path or builtin b1|b2|b3")
    p.add_argument("--n", type=int, default=50, help="size for builtin instances (default 50)")
    p.add_argument("--solution", help="LP solution JSON to use instead of solving")
    p.add_argument("--benchmark", choices=["online", "offline"], default="online")
    p.add_argument("--lp-tol", type=float, default=1e-7, help="cut violation tolerance (default 1e-7)")
    p.add_argument("--out", help="output directory")


def _add_eps_args(p):
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--epsilon-prime", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="statmatch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the tightened LP and write solution.json")
    _add_instance_args(p)

    p = sub.add_parser("simulate", help="simulate policies and write one CSV row per replication")
    _add_instance_args(p)
    _add_eps_args(p)
    p.add_argument("--policy", action="append", choices=POLICIES,
                   help="policy to run; repeat for several (default correlated)")
    p.add_argument("--horizon", type=float, default=1e4)
    p.add_argument("--burnin", type=float, default=None, help="burn-in time (default 20%% of horizon)")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("classify", help="hard/easy classification and VWHC verdict")
    _add_instance_args(p)
    _add_eps_args(p)

    p = sub.add_parser("experiment", help="run an acceptance suite")
    p.add_argument("suite", choices=sorted(ex.SUITES))
    _add_eps_args(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--horizon", type=float, default=None, help="override every simulation horizon")
    p.add_argument("--out", help="output directory for results.csv")
    return ap


# --------------------------------------------------------------------------
# shared plumbing

def _check_eps(args):
    for name in ("epsilon", "epsilon_prime"):
        v = getattr(args, name)
        if not 0 < v < 0.1:
            raise UsageError(f"--{name.replace('_', '-')} must lie in (0, 0.1), got {v}")


def _instance(args):
    """Instance plus the solution shipped with a builtin (``None`` otherwise)."""
    src = args.instance
    if src.lower() in BUILTINS:
        if args.n < 2:
            raise UsageError("--n must be >= 2")
        return example_instance(src.upper(), args.n, with_solution=True)
    path = Path(src)
    if not path.is_file():
        raise UsageError(f"instance file not found: {src}")
    return load_instance(path), None


def _solution(args, inst, shipped):
    """Explicit ``--solution``, else the builtin's known ONLINE solution, else solve."""
    bench = lp.Benchmark(args.benchmark.upper())
    if args.solution:
        path = Path(args.solution)
        if not path.is_file():
            raise UsageError(f"solution file not found: {args.solution}")
        return lp.load_solution(path), None
    if shipped is not None and bench is lp.Benchmark.ONLINE:
        return shipped, None
    t0 = time.perf_counter()
    sol = lp.solve_tlp(inst, bench, tol=args.lp_tol)
    return sol, time.perf_counter() - t0


def _outdir(args):
    if not getattr(args, "out", None):
        return None
    d = Path(args.out)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {d}: {e}") from e
    return d


# --------------------------------------------------------------------------
# commands

def cmd_solve(args) -> int:
    inst, _ = _instance(args)
    bench = lp.Benchmark(args.benchmark.upper())
    t0 = time.perf_counter()
    sol = lp.solve_tlp(inst, bench, tol=args.lp_tol)
    dt = time.perf_counter() - t0
    d = _outdir(args)
    if d is not None:
        lp.save_solution(sol, d / "solution.json")
    print(f"benchmark={bench.value} objective={_g(sol.objective)} cuts={sol.n_cuts} rounds={sol.n_rounds}")
    print(f"solve_time={dt:.3f}s", file=sys.stderr)
    return 0


def _policy(name, inst, sol, eps, eps_prime):
    kind = sim.PolicyKind(name)
    if kind is sim.PolicyKind.CORRELATED_PROPOSALS:
        return sim.correlated(lp.proposal_probabilities(inst, sol))
    if kind is sim.PolicyKind.GREEDY_MAX_REWARD:
        return sim.greedy()
    if kind is sim.PolicyKind.BALANCED_GREEDY:
        unlabeled = [t.id for t in inst.offline if t.section not in ("TOP", "BOT")]
        if unlabeled:
            raise UsageError("balanced-greedy needs TOP/BOT-labelled offline types "
                             f"(unlabelled: {unlabeled[:5]}); run it on a transformed instance")
        return sim.balanced_greedy()
    return sim.NO_MATCH


def cmd_simulate(args) -> int:
    _check_eps(args)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    if not (args.horizon > 0 and (args.burnin is None or 0 <= args.burnin < args.horizon)):
        raise UsageError("need --horizon > --burnin >= 0")
    inst, shipped = _instance(args)
    names = args.policy or ["correlated"]
    sol = None
    if "correlated" in names:
        sol, _ = _solution(args, inst, shipped)
    policies = [(n, _policy(n, inst, sol, args.epsilon, args.epsilon_prime)) for n in names]
    rows = []
    for _, pol in policies:
        rows.extend(sim.replicate(inst, pol, args.reps, args.horizon, args.burnin, args.seed))
    text = sim.to_csv(rows)
    sys.stdout.write(text)
    d = _outdir(args)
    if d is not None:
        (d / "simulate.csv").write_text(text)
        (d / "simulate.json").write_text(json.dumps([sim.estimate_to_dict(e) for e in rows], indent=2) + "\n")
    return 0


CLASSIFY_COLUMNS = ("type_id", "verdict", "r_threshold", "gain_share")


def cmd_classify(args) -> int:
    _check_eps(args)
    if args.benchmark != "online":
        raise UsageError("classify needs --benchmark online")
    inst, shipped = _instance(args)
    sol, _ = _solution(args, inst, shipped)
    cls = an.classify(inst, sol, args.epsilon, args.epsilon_prime)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLASSIFY_COLUMNS)
    for j, v in cls.verdicts.items():
        w.writerow([inst.name("online", j), v.value, _g(cls.r_threshold[j]), _g(cls.gain_share[j])])
    vwhc = an.is_vwhc(inst, cls, sol, args.epsilon)
    text = buf.getvalue()
    sys.stdout.write(text)
    print(f"vwhc={'true' if vwhc else 'false'}")
    d = _outdir(args)
    if d is not None:
        (d / "classification.csv").write_text(text)
    return 0


def cmd_experiment(args) -> int:
    _check_eps(args)
    if args.reps < 2:
        raise UsageError("--reps must be >= 2")
    ctx = ex.Context(seed=args.seed, reps=args.reps, horizon=args.horizon,
                     eps=args.epsilon, eps_prime=args.epsilon_prime)
    results = []
    for res in ex.run_suite(args.suite, ctx):
        print(res.line(), flush=True)
        results.append(res)
    d = _outdir(args)
    if d is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("criterion", "name", "status", "measured"))
        for r in results:
            w.writerow((r.number, r.name, "PASS" if r.passed else "FAIL",
                        json.dumps({k: v for k, v in r.measured.items() if k != "seconds"}, default=str)))
        (d / "results.csv").write_text(buf.getvalue())
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "classify": cmd_classify,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InstanceError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"statmatch: error: {e}", file=sys.stderr)
        return 2
    except (ValueError, sim.SimulationError) as e:
        print(f"statmatch: error: {e}", file=sys.stderr)
        return 2
    except lp.LpError as e:
        print(f"statmatch: solver error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
