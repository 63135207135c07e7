"""Command-line entry point: ``plan``, ``bench`` and ``verify``.

Exit codes: 0 success, 1 verification mismatch, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .bench import (
    REFERENCE_SLOPES,
    BenchConfig,
    default_envs,
    default_matrix,
    emit_csv,
    emit_fits_csv,
    emit_plot_data,
    fit_slopes,
    run_benchmark,
    slope_ratios,
    verify_equivalence,
)
from .config import SearchConfig
from .errors import BranchingOverflowError, ConstructionError, ContractViolation
from .mdp import load_env, make_bug_trap_env
from .planning import IMPLEMENTATIONS, run_episode

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def _load_env(path):
    if path is None:
        return make_bug_trap_env()
    try:
        return load_env(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read environment {path}: {exc}") from exc


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _fmt_state(env, state) -> str:
    if env.kind == "bug_trap":
        x, y = env.position(state)
        return f"x={x:g} y={y:g} heading={state[2]}"
    return " ".join(str(v) for v in state)


def cmd_plan(args) -> int:
    env = _load_env(args.env)
    impl = args.impl[0]
    n, depth = args.n[0], args.depth[0]
    c = env.exploration_hint if args.c is None else args.c
    cfg = SearchConfig(n, depth, env.max_branching, c, seed=args.seed, overflow=args.overflow)
    steps = args.steps if args.steps is not None else env.horizon_hint
    ep = run_episode(env, cfg, steps, impl=impl, stop_at_goal=not args.no_stop)
    names = env.action_names or tuple(str(i) for i in range(env.num_actions))
    print(f"step 0: {_fmt_state(env, ep.states[0])}")
    for t, (a, s) in enumerate(zip(ep.actions, ep.states[1:]), 1):
        flags = " [obstacle]" if env.kind == "bug_trap" and env.in_obstacle(s) else ""
        print(f"step {t}: action={names[a]} {_fmt_state(env, s)} "
              f"search={ep.seconds[t - 1]:.4f}s{flags}")
    if ep.reached_goal:
        print(f"goal reached at step {ep.reached_goal_at}")
    else:
        print("goal not reached")
    if ep.overflow_events:
        print(f"overflow events: {ep.overflow_events}")
    if args.out:
        out = _out_dir(args.out)
        with open(out / "trajectory.csv", "w") as fh:
            fh.write("step,action," + ",".join(f"s{i}" for i in range(env.dim)) + "\n")
            for t, s in enumerate(ep.states):
                a = ep.actions[t - 1] if t else ""
                fh.write(f"{t},{a}," + ",".join(str(v) for v in s) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    env = _load_env(args.env)
    cfg = BenchConfig(
        impls=tuple(args.impl), ns=tuple(args.n), depths=tuple(args.depth),
        trials=args.trials, steps=args.steps if args.steps is not None else 10,
        seed=args.seed, overflow=args.overflow, exploration_c=args.c,
    )
    out = _out_dir(args.out)
    records = run_benchmark(cfg, env, progress=None if args.quiet else
                            (lambda m: print(m, file=sys.stderr, flush=True)))
    ok = [r for r in records if not r.failed]
    failed = [r for r in records if r.failed]
    emit_csv(ok, out / "records.csv")
    emit_csv(failed, out / "failures.csv")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fits = fit_slopes(ok)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    emit_fits_csv(fits, out / "fits.csv")
    emit_plot_data(out / "records.csv", out / "plot.dat", out / "plot.svg")
    ratios = slope_ratios(fits)
    meta = {
        "impls": list(cfg.impls), "n": list(cfg.ns), "depths": list(cfg.depths),
        "trials": cfg.trials, "steps": cfg.steps, "seed": cfg.seed,
        "overflow": cfg.overflow.value,
        "warmup": "one untimed search per (impl, n, depth) cell" if cfg.warmup else "none",
        "clock": "time.perf_counter around the search call only",
        "failed_searches": len(failed),
        "overflow_events": sum(r.overflow_events for r in ok),
        "slope_ratio_tree_over_array": {str(k): v for k, v in ratios.items()},
        "reference_slopes_s_per_layer": {str(k): v for k, v in REFERENCE_SLOPES.items()},
        "note": "reference slopes were measured on other hardware with a compiled tree baseline",
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for f in fits:
        print(f"{f.impl:>15} n={f.n:<6} slope={f.slope:.6f} s/layer "
              f"intercept={f.intercept:.6f} r2={f.r_squared:.4f}")
    for n, r in ratios.items():
        ref = REFERENCE_SLOPES.get(n)
        extra = f" (reference {ref['tree'] / ref['array']:.2f})" if ref else ""
        print(f"tree/array slope ratio n={n}: {r:.2f}{extra}")
    if failed:
        print(f"{len(failed)} search(es) overflowed and were excluded; see failures.csv")
    return EXIT_OK


def cmd_verify(args) -> int:
    envs = default_envs()
    if args.env:
        envs = {"custom": _load_env(args.env)}
    matrix = default_matrix(seeds=args.trials, ns=tuple(args.n), depths=tuple(args.depth), envs=envs)
    impls = [i for i in args.impl if i != "tree"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = verify_equivalence(matrix, impls=impls)
    for w in report.warnings:
        print(f"warning: {w}")
    for r in report.results:
        if args.verbose or not r.ok:
            print(r.line())
    bad = len(report.failures)
    print(f"{len(report.results) - bad}/{len(report.results)} cells match the tree reference")
    return EXIT_OK if report.ok else EXIT_MISMATCH


def _common() -> argparse.ArgumentParser:
    # A fresh parent per subcommand: set_defaults writes through to the
    # parent's action objects, so sharing one would leak defaults across.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--impl", nargs="+", choices=sorted(IMPLEMENTATIONS), default=None)
    common.add_argument("--n", nargs="+", type=int, default=None, help="simulations per search")
    common.add_argument("--depth", nargs="+", type=int, default=None, help="max tree depth")
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--steps", type=int, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--env", default=None, help="environment JSON file (default: bug trap)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--overflow", choices=("fail", "clamp"), default="fail")
    common.add_argument("--c", type=float, default=None,
                        help="UCT exploration constant (default: the environment's hint)")
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arraymcts", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    plan = sub.add_parser("plan", parents=[_common()], help="run one receding-horizon episode")
    plan.add_argument("--no-stop", action="store_true", help="keep going after reaching the goal")
    plan.set_defaults(func=cmd_plan, impl=["array"], n=[5000], depth=[8])
    bench = sub.add_parser("bench", parents=[_common()], help="time the (impl, N, depth) grid")
    bench.add_argument("--quiet", action="store_true")
    bench.set_defaults(func=cmd_bench, impl=["tree", "array"], n=[5000, 50000],
                       depth=list(range(4, 13)), trials=10, out="bench_out")
    verify = sub.add_parser("verify", parents=[_common()], help="compare trees across implementations")
    verify.add_argument("--verbose", action="store_true", help="print passing cells too")
    verify.set_defaults(func=cmd_verify, impl=["tree", "array", "array_unsorted"], n=[200],
                        depth=[1, 5, 8], trials=20)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "plan" and (len(args.impl) != 1 or len(args.n) != 1 or len(args.depth) != 1):
            raise ConfigError("plan takes a single --impl, --n and --depth")
        if args.trials is not None and args.trials < 0:
            raise ConfigError("--trials must be >= 0")
        if args.steps is not None and args.steps < 0:
            raise ConfigError("--steps must be >= 0")
        return args.func(args)
    except (ConfigError, ConstructionError, ContractViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BranchingOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
