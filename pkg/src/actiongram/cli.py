"""Command-line front end.

    actiongram run SPEC
    actiongram ablate SPEC
    actiongram grammar FILE [--calculator sequitur|k|mdl] [--k N]

Exit codes: 0 success, 1 configuration or input error, 2 runtime error.
``ACTIONGRAM_OUT`` overrides the experiment file's output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grammar as gr
from .config import ConfigError, ExperimentSpec, RunConfig, load_spec
from .orchestrator import read_csv, run

log = logging.getLogger("actiongram")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SUMMARY_VERSION = "# actiongram-summary v1"
SUMMARY_COLUMNS = ("variant", "seeds", "solved_runs", "final_score_median", "final_score_mean",
                   "final_score_std", "first_solve_median", "first_solve_mean", "first_solve_std",
                   "move_ratio_mean")


@dataclass
class RunOutcome:
    label: str
    seed: int
    csv_text: str
    grammar_text: str
    wall_clock: float


def _run_one(label: str, config: RunConfig) -> RunOutcome:
    m = run(config)
    return RunOutcome(label, config.seed, m.to_csv(), m.grammar_text(), m.wall_clock)


def run_file_name(label: str, seed: int) -> str:
    return f"{label}_seed{seed}.csv"


def run_stats(csv_text: str) -> dict[str, float]:
    """Per-run numbers the summary aggregates, recomputed from the run CSV.

    An unsolved run's first-solve step is censored at the steps it ran.
    """
    rows = read_csv(csv_text)
    evals = [r for r in rows if r["kind"] == "eval"]
    last = [float(r["return"]) for r in evals[-3:]]
    solved = [int(r["end_step"]) for r in evals if r["solved"] == "1"]
    steps_run = int(rows[-1]["end_step"]) if rows else 0
    attempted = sum(int(r["attempted"]) for r in rows)
    executed = sum(int(r["executed"]) for r in rows)
    return {
        "final_score": float(np.mean(last)) if last else 0.0,
        "first_solve": float(solved[0] if solved else steps_run),
        "solved": float(bool(solved)),
        "move_ratio": executed / attempted if attempted else 1.0,
    }


def _fmt(x: float) -> str:
    return repr(round(float(x), 6))


def summarize(outcomes: list[RunOutcome], labels: list[str]) -> str:
    buf = io.StringIO()
    buf.write(SUMMARY_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for label in labels:
        stats = [run_stats(o.csv_text) for o in outcomes if o.label == label]
        fs = np.array([s["final_score"] for s in stats])
        first = np.array([s["first_solve"] for s in stats])
        w.writerow([label, len(stats), int(sum(s["solved"] for s in stats)),
                    _fmt(np.median(fs)), _fmt(fs.mean()), _fmt(fs.std()),
                    _fmt(np.median(first)), _fmt(first.mean()), _fmt(first.std()),
                    _fmt(np.mean([s["move_ratio"] for s in stats]))])
    return buf.getvalue()


def execute(configs: dict[str, RunConfig], seeds: list[int], out_dir: Path, workers: int) -> list[RunOutcome]:
    """Run every (variant, seed) pair and write one CSV per run."""
    jobs = [(label, cfg.replace(seed=seed)) for label, cfg in configs.items() for seed in seeds]
    out_dir.mkdir(parents=True, exist_ok=True)
    if workers <= 1 or len(jobs) == 1:
        outcomes = []
        for label, cfg in jobs:
            log.info("running %s seed %d", label, cfg.seed)
            outcomes.append(_run_one(label, cfg))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, label, cfg) for label, cfg in jobs]
            outcomes = [f.result() for f in futures]
    for o in outcomes:
        (out_dir / run_file_name(o.label, o.seed)).write_text(o.csv_text)
        if o.grammar_text:
            (out_dir / f"{o.label}_seed{o.seed}_grammar.txt").write_text(o.grammar_text)
        log.info("%s seed %d finished in %.1fs", o.label, o.seed, o.wall_clock)
    return outcomes


def cmd_run(spec: ExperimentSpec) -> int:
    configs = spec.run_configs()
    out_dir = spec.output_dir()
    outcomes = execute(configs, spec.seeds, out_dir, spec.workers())
    summary = summarize(outcomes, list(configs))
    (out_dir / "summary.csv").write_text(summary)
    sys.stdout.write(summary)
    return EXIT_OK


ABLATION_FACTORS = {
    "har": (True, False),
    "replay": ("balanced", "uniform"),
    "abandon_z": (None, 1.0, 2.0),
    "transfer": (True, False),
}


def ablation_configs(base: RunConfig) -> dict[str, RunConfig]:
    """The bare base agent plus every combination of the ablation factors."""
    configs = {"base": base.replace(grammar_iterations=0)}
    ag = base.replace(grammar_iterations=max(1, base.grammar_iterations))
    for har, replay, z, transfer in itertools.product(*ABLATION_FACTORS.values()):
        label = "_".join([
            "har" if har else "nohar",
            replay,
            "z" + ("off" if z is None else f"{z:g}"),
            "transfer" if transfer else "fresh",
        ])
        configs[label] = ag.replace(har=har, replay=replay, abandon_z=z, transfer=transfer)
    return configs


def comparison_table(outcomes: list[RunOutcome], labels: list[str]) -> str:
    """Per-variant medians and the median paired difference against the base agent."""
    stats = {(o.label, o.seed): run_stats(o.csv_text) for o in outcomes}
    seeds = sorted({o.seed for o in outcomes})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "final_score_median", "first_solve_median",
                "paired_score_delta_median", "paired_first_solve_ratio_median"])
    for label in labels:
        fs = [stats[label, s]["final_score"] for s in seeds]
        first = [stats[label, s]["first_solve"] for s in seeds]
        d_score = [stats[label, s]["final_score"] - stats["base", s]["final_score"] for s in seeds]
        ratio = [stats[label, s]["first_solve"] / max(1.0, stats["base", s]["first_solve"]) for s in seeds]
        w.writerow([label, _fmt(np.median(fs)), _fmt(np.median(first)), _fmt(np.median(d_score)),
                    _fmt(np.median(ratio))])
    return buf.getvalue()


def cmd_ablate(spec: ExperimentSpec) -> int:
    if spec.variants:
        log.warning("ablate ignores [variant] sections; the factorial set is generated")
    configs = ablation_configs(spec.base_config())
    for cfg in configs.values():
        cfg.validate()
    out_dir = spec.output_dir()
    outcomes = execute(configs, spec.seeds, out_dir, spec.workers())
    (out_dir / "summary.csv").write_text(summarize(outcomes, list(configs)))
    table = comparison_table(outcomes, list(configs))
    (out_dir / "ablation.csv").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_grammar(path: str, calculator: str = "sequitur", k: int = 2) -> int:
    try:
        seq = gr.parse_symbols(Path(path).read_text())
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {path} is not a whitespace-separated list of integers ({exc})", file=sys.stderr)
        return EXIT_CONFIG
    if not seq:
        print(f"error: {path} is empty", file=sys.stderr)
        return EXIT_CONFIG
    try:
        g = gr.infer(seq, calculator, k)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    macros = gr.extract_macros(g)
    print(f"{len(g.rules)} rules")
    print(g)
    print(f"{len(macros)} macros")
    for m in macros:
        print("  " + gr.format_symbols(m.primitives))
    print(f"cost raw {gr.encoding_cost(gr.raw_grammar(seq)):.4f} bits")
    print(f"cost grammar {gr.encoding_cost(g):.4f} bits")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="actiongram", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", help="run every variant and seed of a spec").add_argument("spec")
    sub.add_parser("ablate", help="run the factorial ablation of a spec").add_argument("spec")
    g = sub.add_parser("grammar", help="infer a grammar from a token file")
    g.add_argument("file")
    g.add_argument("--calculator", choices=("sequitur", "k", "k-sequitur", "mdl"), default="sequitur")
    g.add_argument("--k", type=int, default=2)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "grammar":
        return cmd_grammar(args.file, args.calculator, args.k)
    try:
        spec = load_spec(args.spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return cmd_run(spec) if args.command == "run" else cmd_ablate(spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any failed run
        log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
