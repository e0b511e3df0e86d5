"""End-to-end runs: generate, learn, sweep noise weights, report.

Seeds: the master seed ``s`` is split with ``numpy.random.SeedSequence``
using a fixed counter per stage,

* generator ``[s, 0]``, pattern sampling ``[s, 1]``,
* local graph ``i`` ``[s, 2, i]``, global graph ``[s, 3]``,
* trial ``t`` at noise weight ``e`` ``[s, 4, e, t]``,

each reduced to one 32-bit integer.  Any stage can therefore be rerun in
isolation.  Everything in ``report.json`` is rendered from files in the output
directory, so :func:`render_report` reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import persistence as store
from .analysis import degree_profile, per_gain, single_error_bound, sparsity_ratio
from .config import ExperimentConfig, from_mapping, parse
from .dataset import build_generator, inject_noise, synthesize_patterns
from .errors import SubspaceMemoryError, ValidationError
from .learner import learn_network
from .recall import MultiLevelNetwork, multilevel_correct

log = logging.getLogger(__name__)

STAGE_GENERATOR, STAGE_PATTERNS, STAGE_LOCAL, STAGE_GLOBAL, STAGE_TRIALS = range(5)

CONFIG_FILE = "config.cfg"
DATASET_FILE = "dataset.csv"
GENERATOR_FILE = "generator.csv"
TRIALS_FILE = "trials.log"
REPORT_FILE = "report.json"
CURVE_FILE = "per_curve.csv"
GAIN_FILE = "gain.csv"
PROFILE_FILE = "degree_profiles.csv"
TIMING_FILE = "timing.json"

TRIAL_COLUMNS = ["trial", "seed", "weight", "pattern", "positions", "signs",
                 "level1_ok", "level2_ok", "level", "iters1", "iters2"]


def stage_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([master, *path]).generate_state(1)[0])


def local_file(i: int) -> str:
    return f"W_local_{i}.csv"


GLOBAL_FILE = "W_global.csv"


def _ints(text: str) -> list:
    return [int(v) for v in text.split(";")] if text else []


@dataclass
class Trial:
    trial: int
    seed: int
    weight: int
    pattern: int
    positions: list
    signs: list
    level1_ok: bool
    level2_ok: bool
    level: int
    iters1: int
    iters2: int

    def row(self) -> list:
        return [self.trial, self.seed, self.weight, self.pattern,
                ";".join(map(str, self.positions)), ";".join(map(str, self.signs)),
                int(self.level1_ok), int(self.level2_ok), self.level, self.iters1, self.iters2]

    @classmethod
    def parse(cls, row: dict) -> "Trial":
        return cls(int(row["trial"]), int(row["seed"]), int(row["weight"]), int(row["pattern"]),
                   _ints(row["positions"]), _ints(row["signs"]), row["level1_ok"] == "1",
                   row["level2_ok"] == "1", int(row["level"]), int(row["iters1"]),
                   int(row["iters2"]))


def _write_config(out: Path, config: ExperimentConfig) -> None:
    (out / CONFIG_FILE).write_text(config.dumps())


def read_config(out) -> ExperimentConfig:
    return from_mapping(parse((Path(out) / CONFIG_FILE).read_text()))


def _same_config(out: Path, config: ExperimentConfig) -> bool:
    path = out / CONFIG_FILE
    return path.exists() and path.read_text() == config.dumps()


def generate(config: ExperimentConfig, out) -> tuple:
    """Build the generator and training set and write both to ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    spec = replace(config.generator, seed=stage_seed(config.seed, STAGE_GENERATOR))
    gen = build_generator(spec)
    patterns = synthesize_patterns(gen, config.C, seed=stage_seed(config.seed, STAGE_PATTERNS))
    store.save_generator(out / GENERATOR_FILE, gen)
    store.save_dataset(out / DATASET_FILE, patterns)
    _write_config(out, config)
    return gen, patterns


def learn(config: ExperimentConfig, out, patterns=None) -> MultiLevelNetwork:
    """Learn the L local graphs and the global graph from the stored training set."""
    out = Path(out)
    patterns = patterns or store.load_dataset(out / DATASET_FILE)
    X = patterns.X
    blocks = patterns.provenance.blocks()
    locals_ = []
    for i, (a, b) in enumerate(blocks):
        log.info("learning local graph %d (%d rows)", i, config.m_local)
        g = learn_network(X[:, a:b], config.m_local, config.learn,
                          seed=stage_seed(config.seed, STAGE_LOCAL, i))
        store.save_graph(out / local_file(i), g)
        locals_.append(g)
    log.info("learning global graph (%d rows)", config.m_global)
    glob = learn_network(X, config.m_global, config.learn,
                         seed=stage_seed(config.seed, STAGE_GLOBAL))
    store.save_graph(out / GLOBAL_FILE, glob)
    store.save_layout(out, [local_file(i) for i in range(len(blocks))], GLOBAL_FILE, blocks)
    return MultiLevelNetwork(locals_, glob, blocks)


def run_trial(net: MultiLevelNetwork, X, config: ExperimentConfig, weight: int,
              index: int) -> Trial:
    seed = stage_seed(config.seed, STAGE_TRIALS, weight, index)
    rng = np.random.default_rng(seed)
    j = int(rng.integers(X.shape[0]))
    x = X[j]
    noisy, z = inject_noise(x, weight, config.recall.S, rng)
    t_max = config.recall.budget(net.n, noise_weight=weight)
    out = multilevel_correct(net, noisy, config.recall, t_max)
    pos = z.positions
    return Trial(index, seed, weight, j, pos.tolist(), z.z[pos].tolist(),
                 bool(np.array_equal(out.level1_pattern, x)), bool(np.array_equal(out.pattern, x)),
                 out.level, out.iterations.get(1, 0), out.iterations.get(2, 0))


def run_experiment(config: ExperimentConfig, out, reuse: bool = True) -> dict:
    """Generate (or reuse), learn (or reuse), run the trial sweep and write the report.

    Artifacts already in ``out`` are reused only when they were produced
    under the same configuration.  Trials are appended to ``trials.log`` as
    they finish, so an interrupted run leaves its partial log behind.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    timing = {}
    reusable = reuse and _same_config(out, config)
    t0 = time.perf_counter()
    if reusable and (out / DATASET_FILE).exists():
        patterns = store.load_dataset(out / DATASET_FILE)
    else:
        reusable = False
        _, patterns = generate(config, out)
    timing["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        net = store.load_network(out) if reusable else None
    except (OSError, ValueError):
        net = None
    if net is None:
        net = learn(config, out, patterns)
    timing["learn"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    X = patterns.X
    with open(out / TRIALS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        for weight in config.weights:
            for i in range(config.trials):
                try:
                    trial = run_trial(net, X, config, weight, i)
                except SubspaceMemoryError as err:
                    raise type(err)(f"trial {i} at weight {weight}: {err}") from err
                writer.writerow(trial.row())
    timing["recall"] = time.perf_counter() - t0
    (out / TIMING_FILE).write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return render_report(out)


def read_trials(out) -> list:
    with open(Path(out) / TRIALS_FILE, newline="") as fh:
        return [Trial.parse(row) for row in csv.DictReader(fh)]


def _graph_summary(name, graph) -> dict:
    summary = {
        "name": name,
        "m": graph.m,
        "n": graph.n,
        "mean_iterations": float(np.mean(graph.iterations)) if graph.iterations else None,
        "sparsity": float(np.mean([sparsity_ratio(r) for r in graph.W])),
        "max_residual": float(graph.residuals.max()) if graph.residuals.size else None,
    }
    profile = degree_profile(graph.W, allow_zero=True)
    summary["d_bar"] = profile.d_bar
    summary["d_min"] = profile.d_min
    summary["degree_fractions"] = {str(d): f for d, f in sorted(profile.lambda_i.items())}
    try:
        bound = single_error_bound(profile)
        summary["bound_exact"], summary["bound_loose"] = bound.exact, bound.loose
    except ValidationError:
        summary["bound_exact"] = summary["bound_loose"] = None
    return summary


def _gain_rows(trials, weights) -> list:
    rows = []
    for weight in weights:
        sel = [t for t in trials if t.weight == weight]
        if not sel:
            continue
        f1 = sum(not t.level1_ok for t in sel)
        f2 = sum(not t.level2_ok for t in sel)
        rows.append(per_gain(f1, f2, len(sel), weight))
    return rows


def _fmt(x):
    return "" if x is None else repr(float(x))


def render_report(out) -> dict:
    """Rebuild ``report.json`` and the CSV summaries from the files in ``out``."""
    out = Path(out)
    config = read_config(out)
    trials = read_trials(out)
    layout = store.read_layout(out)
    graphs = [(f"local_{i}", store.load_graph(out / f)) for i, f in enumerate(layout["locals"])]
    graphs.append(("global", store.load_graph(out / layout["global"])))
    summaries = [_graph_summary(name, g) for name, g in graphs]
    gains = _gain_rows(trials, config.weights)

    rows = []
    for g in gains:
        lo, hi = g.gain_ci
        rows.append({
            "weight": g.errors, "trials": g.trials,
            "failures1": g.failures1, "failures2": g.failures2,
            "per1": g.per1, "per2": g.per2,
            "per1_ci": list(g.ci1), "per2_ci": list(g.ci2),
            "gain": g.gain, "gain_is_lower_bound": g.gain_is_lower_bound,
            "gain_ci": [lo, hi],
            "level2_regressions": sum(
                t.level1_ok and not t.level2_ok for t in trials if t.weight == g.errors),
        })
    locals_ = [s for s in summaries if s["name"] != "global"]
    report = {
        "config": config.flat(),
        "seeds": {
            "master": config.seed,
            "generator": stage_seed(config.seed, STAGE_GENERATOR),
            "patterns": stage_seed(config.seed, STAGE_PATTERNS),
            "locals": [stage_seed(config.seed, STAGE_LOCAL, i) for i in range(len(locals_))],
            "global": stage_seed(config.seed, STAGE_GLOBAL),
        },
        "learning": {
            "local_mean_iterations": float(np.mean([s["mean_iterations"] for s in locals_])),
            "global_mean_iterations": summaries[-1]["mean_iterations"],
            "local_sparsity": float(np.mean([s["sparsity"] for s in locals_])),
            "global_sparsity": summaries[-1]["sparsity"],
            "mean_row_sparsity": float(np.mean(
                [sparsity_ratio(r) for _, g in graphs for r in g.W])),
            "graphs": summaries,
        },
        "per": rows,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (out / REPORT_FILE).write_text(text)

    with open(out / CURVE_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["weight", "trials", "per1", "per1_lo", "per1_hi", "per2", "per2_lo", "per2_hi"])
        for g in gains:
            w.writerow([g.errors, g.trials, _fmt(g.per1), _fmt(g.ci1[0]), _fmt(g.ci1[1]),
                        _fmt(g.per2), _fmt(g.ci2[0]), _fmt(g.ci2[1])])
    with open(out / GAIN_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["errors", "trials", "failures1", "failures2", "per1", "per2", "gain",
                    "gain_is_lower_bound", "gain_lo", "gain_hi"])
        for g in gains:
            lo, hi = g.gain_ci
            w.writerow([g.errors, g.trials, g.failures1, g.failures2, _fmt(g.per1),
                        _fmt(g.per2), _fmt(g.gain), int(g.gain_is_lower_bound), _fmt(lo), _fmt(hi)])
    with open(out / PROFILE_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graph", "degree", "fraction"])
        for s in summaries:
            for d, f in s["degree_fractions"].items():
                w.writerow([s["name"], d, _fmt(f)])
    return report

