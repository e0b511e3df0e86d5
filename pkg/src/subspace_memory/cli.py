"""Command line entry point.

Exit status is 0 on success, 1 when the inputs are invalid and 2 when a
valid computation fails (no convergence, retry budgets exhausted, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import harness
from . import persistence as store
from .analysis import degree_profile, single_error_bound
from .errors import RuntimeFailure, SubspaceMemoryError, ValidationError
from .learner import ALPHA_MODES
from .recall import constraints_satisfied, multilevel_correct

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


def _resolve_config(args) -> cfg.ExperimentConfig:
    overrides = {"seed": args.seed, "alpha_mode": getattr(args, "mode", None)}
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if args.config:
        return cfg.load(args.config, **overrides)
    saved = Path(args.out) / harness.CONFIG_FILE
    values = cfg.parse(saved.read_text()) if saved.exists() else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return cfg.from_mapping(values)


def cmd_generate(args) -> int:
    config = _resolve_config(args)
    gen, patterns = harness.generate(config, args.out)
    print(f"wrote {patterns.C} patterns (n={patterns.n}, rejected={patterns.rejected}) "
          f"and a {gen.G.shape[0]}x{gen.G.shape[1]} generator to {args.out}")
    return EXIT_OK


def cmd_learn(args) -> int:
    config = _resolve_config(args)
    out = Path(args.out)
    if not (out / harness.DATASET_FILE).exists():
        raise ValidationError(f"{out / harness.DATASET_FILE} not found; run 'generate' first")
    (out / harness.CONFIG_FILE).write_text(config.dumps())
    net = harness.learn(config, out)
    sizes = ", ".join(f"{g.m}x{g.n}" for g in net.locals)
    print(f"learned local graphs [{sizes}] and a {net.global_graph.m}x{net.global_graph.n} "
          f"global graph in {out}")
    return EXIT_OK


def cmd_recall(args) -> int:
    net = store.load_network(args.out)
    try:
        query = np.array([int(v) for v in args.query.replace(" ", "").split(",")], dtype=np.int64)
    except ValueError:
        raise ValidationError("--query must be comma-separated integers") from None
    config = _resolve_config(args)
    outcome = multilevel_correct(net, query, config.recall, args.t_max)
    print(json.dumps({
        "pattern": outcome.pattern.tolist(),
        "level": outcome.level,
        "iterations": {str(k): v for k, v in outcome.iterations.items()},
        "satisfied": bool(outcome.satisfied
                          and constraints_satisfied(net.global_graph, outcome.pattern,
                                                    config.recall.eps_zero)),
    }))
    return EXIT_OK


def cmd_bound(args) -> int:
    graph = store.load_graph(args.graph)
    profile = degree_profile(graph.W, allow_zero=True)
    bound = single_error_bound(profile)
    print(f"m={profile.m} n={graph.n} d_bar={profile.d_bar:.4f} d_min={profile.d_min}")
    print(f"bound_exact={bound.exact:.6f}")
    print(f"bound_loose={bound.loose:.6f}" + ("  (vacuous)" if bound.vacuous else ""))
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _resolve_config(args)
    report = harness.run_experiment(config, args.out)
    print(f"{'e':>3} {'PER1':>8} {'PER2':>8} {'gain':>8}")
    for row in report["per"]:
        gain = "-" if row["gain"] is None else f"{row['gain']:.3f}"
        print(f"{row['weight']:>3} {row['per1']:>8.4f} {row['per2']:>8.4f} {gain:>8}")
    print(f"report: {Path(args.out) / harness.REPORT_FILE}")
    return EXIT_OK


def cmd_report(args) -> int:
    harness.render_report(args.out)
    print(Path(args.out) / harness.REPORT_FILE)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subspace-memory", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=".", help="artifact directory")
        if mode:
            p.add_argument("--mode", choices=ALPHA_MODES, help="step-size schedule")

    p = sub.add_parser("generate", help="write generator.csv and dataset.csv")
    common(p, mode=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("learn", help="learn local and global graphs from dataset.csv")
    common(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("recall", help="correct one query pattern with a saved network")
    common(p, mode=False)
    p.add_argument("--query", required=True, help="comma-separated pattern entries")
    p.add_argument("--t-max", type=int, default=None, help="iteration budget per level")
    p.set_defaults(func=cmd_recall)

    p = sub.add_parser("bound", help="degree profile and single-error bounds of a graph")
    p.add_argument("graph", help="graph CSV (row,col,value triplets)")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("experiment", help="generate, learn and run the noise sweep")
    common(p)
    p.add_argument("--trials", type=int, help="trials per noise weight (overrides the config)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-render report.json from the logs in --out")
    p.add_argument("--out", default=".", help="artifact directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeFailure, SubspaceMemoryError) as err:
        print(f"failed: {err}", file=sys.stderr)
        return EXIT_FAILED
    except (OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
