"""Command line entry point: ``lsb run | oracle-verify | export-heatmap | export-quiver | bench``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import harness, oracle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _parse_fixed(text: str | None) -> dict:
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        dim, _, value = part.partition("=")
        out[int(dim)] = float(value)
    return out


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if changes:
        cfg = cfg.replace(**changes)
    out = args.out or cfg.out or f"runs/{cfg.env_name}"
    res = harness.run_experiment(cfg, out, progress=_err)
    for k, mean, se, n in res.summary():
        print(f"iteration {k}: mean_return {mean:.6f} stderr {se:.6f} trials {n}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    t0 = time.perf_counter()
    lines = oracle.run_suite(args.suite, args.instances, args.seed, args.epsilon, args.sweeps, args.gamma)
    for line in lines:
        print(line.format())
    ok = sum(line.holds for line in lines)
    status = "true" if ok == len(lines) else "false"
    print(f"suite={args.suite} holds={status} {ok}/{len(lines)} "
          f"seed={args.seed} time={time.perf_counter() - t0:.1f}s")
    return EXIT_OK if ok == len(lines) else EXIT_RUNTIME


def cmd_heatmap(args) -> int:
    cfg, env, partition, skills = harness.load_run(args.run)
    if args.trial not in skills:
        raise harness.ConfigError("--trial", f"no skills for trial {args.trial}")
    dims = tuple(int(d) for d in args.dims.split(","))
    if len(dims) != 2 or max(dims) >= env.state_dim:
        raise harness.ConfigError("--dims", "need two state dimensions")
    value_fn = cfg.make_evaluator(env)(env, partition, skills[args.trial], args.seed)
    path = Path(args.out or Path(args.run) / f"heatmap_{args.trial}.dat")
    M = harness.export_value_heatmap(value_fn, env.bounds, args.resolution, _parse_fixed(args.fixed), path, dims)
    print(f"wrote {path} ({M.shape[0]}x{M.shape[1]}, min {M.min():.4f}, max {M.max():.4f})")
    return EXIT_OK


def cmd_quiver(args) -> int:
    cfg, env, partition, skills = harness.load_run(args.run)
    if args.trial not in skills:
        raise harness.ConfigError("--trial", f"no skills for trial {args.trial}")
    vectors = getattr(env, "action_vectors", None)
    if vectors is None:
        raise ValueError(f"{cfg.env_name} has no action directions to draw")
    path = Path(args.out or Path(args.run) / "quiver.csv")
    q = harness.export_skill_quiver(partition, skills[args.trial], args.samples, args.seed, vectors, path)
    groups = harness.count_direction_groups(q.angles, args.tolerance)
    print(f"wrote {path} ({len(q.rows)} arrows, {groups} direction groups at {args.tolerance:g} deg)")
    return EXIT_OK


def cmd_bench(args) -> int:
    out = args.out or f"bench/{args.suite}"
    report = harness.run_bench(args.suite, out, args.trials, not args.no_reference, progress=_err)
    for line in report.lines():
        print(line)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsb", description="Skill learning by bootstrapping over a state partition.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run seeded trials from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle-verify", help="check the contraction bounds on random tabular instances")
    o.add_argument("--suite", required=True, choices=oracle.SUITES)
    o.add_argument("--instances", type=int, default=100)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--epsilon", type=float, default=0.1)
    o.add_argument("--sweeps", type=int, default=10)
    o.add_argument("--gamma", type=float, default=0.9)
    o.set_defaults(func=cmd_oracle)

    h = sub.add_parser("export-heatmap", help="value function of a finished run on a 2D grid")
    h.add_argument("--run", required=True)
    h.add_argument("--trial", type=int, default=0)
    h.add_argument("--resolution", type=int, default=50)
    h.add_argument("--dims", default="0,1", help="plotted state dimensions, e.g. 0,1")
    h.add_argument("--fixed", help="values of the other dimensions, e.g. 2=0,3=0 (default 0)")
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--out")
    h.set_defaults(func=cmd_heatmap)

    q = sub.add_parser("export-quiver", help="average action direction of every skill")
    q.add_argument("--run", required=True)
    q.add_argument("--trial", type=int, default=0)
    q.add_argument("--samples", type=int, default=200)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tolerance", type=float, default=30.0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_quiver)

    b = sub.add_parser("bench", help="LSB against the one-class baseline on a benchmark suite")
    b.add_argument("--suite", required=True, choices=harness.BENCH_SUITES)
    b.add_argument("--trials", type=int)
    b.add_argument("--out")
    b.add_argument("--no-reference", action="store_true", help="skip the fine-grid Q-learning reference")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except Exception as exc:
        _err(f"error: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
