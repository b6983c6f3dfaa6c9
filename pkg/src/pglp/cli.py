"""Command-line front end.

Exit codes: 0 ok, 1 usage or validation error, 2 model/data inconsistency,
3 unrepairable policy. Errors go to stderr as ``{"code": ..., "message": ...}``.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import eval as ev
from .errors import ConfigError, PGLPError
from .exposure import REPAIRS, Status, classify, constrained_hull, resolve
from .grid import GridMap
from .mechanisms import MECHANISMS, PPIM
from .policy import load_categories, load_policy
from .trace import MarkovModel, TraceState, check_belief, release_step, write_trajectory


class UsageError(ConfigError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for {args.command}")
        path = getattr(args, n)
        if isinstance(path, str) and not Path(path).exists():
            raise ConfigError(f"missing file: {path}")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from None


def _load_map_policy(args):
    _need(args, "map", "policy")
    grid = GridMap.load(args.map)
    cats = load_categories(args.categories) if args.categories else None
    return grid, load_policy(args.policy, grid, cats)


def _load_domain(path, grid):
    raw = _load_json(path)
    cells = raw["domain"] if isinstance(raw, dict) else raw
    return frozenset(grid.check(c) for c in cells)


def _load_belief(path, n):
    raw = _load_json(path)
    probs = raw["probs"] if isinstance(raw, dict) else raw
    return check_belief(probs, n)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def cmd_release(args) -> int:
    grid, policy = _load_map_policy(args)
    _need(args, "markov", "trajectory")
    from .trace import read_trajectory

    model = MarkovModel.load(args.markov)
    initial = _load_belief(args.initial, grid.n) if args.initial else None
    state = TraceState.start(grid, model, policy, initial)
    truths = read_trajectory(args.trajectory)
    for s in truths:
        grid.check(s)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    lines = []
    for s in truths:
        rec, state = release_step(state, s, args.epsilon, args.mechanism, rng, repair=args.repair,
                                  restrict_snap=args.snapping == "component")
        lines.append(_dump(rec.to_dict()))
    with _output(args.out) as fh:
        for line in lines:
            fh.write(line + "\n")
    if args.summary:
        summary = state.ledger.summary() if len(state.ledger) else {
            "releases": 0, "total_epsilon": 0.0, "intersection_edges": []}
        with open(args.summary, "w") as fh:
            fh.write(_dump(summary) + "\n")
    return 0


def _exposure_report(grid, policy, dom, strategy=None) -> dict:
    statuses = classify(policy, dom)
    gc = policy.restrict(dom)
    K = constrained_hull(grid, gc)
    report = {"domain": sorted(dom), "hull_area": K.area if K is not None else 0.0}
    if strategy is None:
        from .exposure import is_isolated
        for s, st in statuses.items():
            if st is Status.DISCONNECTED and is_isolated(grid, gc, dom, s):
                statuses[s] = Status.ISOLATED
    else:
        repaired, statuses, repairs = resolve(grid, policy, dom, strategy)
        K2 = constrained_hull(grid, repaired)
        report.update({
            "strategy": strategy,
            "repairs": [list(e) for e in repairs],
            "hull_area_before": report["hull_area"],
            "hull_area_after": K2.area if K2 is not None else 0.0,
            "graph_edges": [list(e) for e in sorted(repaired.edges)],
        })
    report["nodes"] = [{"cell": s, "status": statuses[s].value} for s in sorted(statuses)]
    report["disconnected"] = sorted(s for s, st in statuses.items() if st in (Status.DISCONNECTED, Status.ISOLATED))
    report["isolated"] = sorted(s for s, st in statuses.items() if st is Status.ISOLATED)
    return report


def cmd_detect(args) -> int:
    grid, policy = _load_map_policy(args)
    _need(args, "domain")
    report = _exposure_report(grid, policy, _load_domain(args.domain, grid))
    with _output(args.out) as fh:
        fh.write(_dump(report) + "\n")
    return 0


def cmd_repair(args) -> int:
    grid, policy = _load_map_policy(args)
    _need(args, "domain")
    report = _exposure_report(grid, policy, _load_domain(args.domain, grid), args.strategy)
    with _output(args.out) as fh:
        fh.write(_dump(report) + "\n")
    return 0


def cmd_experiment(args) -> int:
    _need(args, "config")
    cfg = ev.load_config(args.config)
    if args.seed_given:
        cfg.seed = args.seed
    if args.mechanism_given:
        cfg.mechanisms = [args.mechanism]
    if args.epsilon_given:
        cfg.epsilons = [args.epsilon]
    result = ev.run_experiment(cfg, timing=args.timing)
    with _output(args.out) as fh:
        fh.write(result.to_csv())
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(result.to_json() + "\n")
    return 0


def cmd_simulate(args) -> int:
    _need(args, "markov")
    model = MarkovModel.load(args.markov)
    initial = _load_belief(args.initial, model.n) if args.initial else np.full(model.n, 1 / model.n)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(2, args.user)))
    cells = ev.simulate_trajectory(model, initial, args.length, rng)
    if args.out is None or args.out == "-":
        sys.stdout.write("t,cell_index\n" + "".join(f"{t},{c}\n" for t, c in enumerate(cells, 1)))
    else:
        write_trajectory(args.out, cells)
    return 0


def cmd_learn_markov(args) -> int:
    from .trace import read_trajectory

    if not args.trajectories:
        raise UsageError("learn-markov needs at least one trajectory file")
    for p in args.trajectories:
        if not Path(p).exists():
            raise ConfigError(f"missing file: {p}")
    trajs = [read_trajectory(p) for p in args.trajectories]
    if args.map:
        n = GridMap.load(args.map).n
    elif args.n:
        n = args.n
    else:
        raise UsageError("learn-markov needs --map or --n")
    model = ev.learn_markov(trajs, n, args.alpha)
    with _output(args.out) as fh:
        fh.write(_dump(model.to_dict()) + "\n")
    return 0


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _epsilon(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("epsilon must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--map", help="JSON map descriptor")
    common.add_argument("--policy", help="JSON policy descriptor")
    common.add_argument("--categories", help="JSON cell -> category mapping (poi policies)")
    common.add_argument("--mechanism", choices=MECHANISMS, default=None)
    common.add_argument("--epsilon", type=_epsilon, default=None)
    common.add_argument("--seed", type=_seed, default=None)
    common.add_argument("--out", help="output path (default: stdout)")

    p = _Parser(prog="pglp", description="Policy-graph location privacy tools")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("release", parents=[common], help="release a trajectory")
    r.add_argument("--markov", help="JSON Markov model")
    r.add_argument("--trajectory", help="t,cell_index CSV")
    r.add_argument("--initial", help="JSON initial belief (default uniform)")
    r.add_argument("--summary", help="write the ledger summary JSON here")
    r.add_argument("--repair", choices=sorted(REPAIRS), default="min-area")
    r.add_argument("--snapping", choices=["map", "component"], default="map")
    r.set_defaults(func=cmd_release)

    for name, func in (("detect", cmd_detect), ("repair", cmd_repair)):
        d = sub.add_parser(name, parents=[common], help=f"{name} isolated cells under a domain")
        d.add_argument("--domain", help="JSON list of possible cells")
        if name == "repair":
            d.add_argument("--strategy", choices=sorted(REPAIRS), default="min-area")
        d.set_defaults(func=func)

    e = sub.add_parser("experiment", parents=[common], help="run a utility experiment")
    e.add_argument("--config", help="JSON or TOML experiment config")
    e.add_argument("--json", help="also write JSON results here")
    e.add_argument("--timing", action="store_true", help="fill runtime_ms (breaks byte-reproducibility)")
    e.set_defaults(func=cmd_experiment)

    s = sub.add_parser("simulate", parents=[common], help="sample a trajectory from a Markov model")
    s.add_argument("--markov")
    s.add_argument("--length", type=int, default=100)
    s.add_argument("--initial")
    s.add_argument("--user", type=int, default=0, help="user number (selects the random stream)")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("learn-markov", parents=[common], help="estimate a Markov model from trajectories")
    m.add_argument("trajectories", nargs="*")
    m.add_argument("--n", type=int)
    m.add_argument("--alpha", type=float, default=0.0)
    m.set_defaults(func=cmd_learn_markov)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        args.seed_given = args.seed is not None
        args.mechanism_given = args.mechanism is not None
        args.epsilon_given = args.epsilon is not None
        if args.seed is None:
            args.seed = 0
        if args.mechanism is None:
            args.mechanism = PPIM
        if args.epsilon is None:
            args.epsilon = 1.0
        return args.func(args)
    except PGLPError as exc:
        sys.stderr.write(_dump({"code": exc.code, "message": str(exc)}) + "\n")
        return exc.exit_code
    except (OSError, KeyError) as exc:
        sys.stderr.write(_dump({"code": "io-error", "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
