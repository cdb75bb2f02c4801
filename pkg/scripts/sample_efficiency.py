"""Paired base vs action-grammar runs: first-solve steps, final score, move-length ratio.

    python scripts/sample_efficiency.py --seeds 10
    python scripts/sample_efficiency.py --env grid --grid-map configs/open_room.txt \
        --steps-before-grammar 1500 --total-steps 10000

Each seed runs both agents from the same RNG streams, so everything up to
the first grammar step is identical and differences come from the macros.
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

from actiongram.config import RunConfig
from actiongram.orchestrator import run


def one(cfg: RunConfig) -> dict:
    m = run(cfg)
    return {
        "first_solve": m.first_solve_step or cfg.total_steps,
        "solved": m.first_solve_step is not None,
        "final": m.final_score(),
        "ratio": m.move_length_ratio(),
        "macros": sum(len(g.added) for g in m.grammars),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--env", default="hanoi", choices=("hanoi", "grid"))
    p.add_argument("--n-disks", type=int, default=3)
    p.add_argument("--grid-map", default="")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--total-steps", type=int, default=20000)
    p.add_argument("--steps-before-grammar", type=int, default=5000)
    p.add_argument("--calculator", default="sequitur")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", help="write per-seed rows here")
    args = p.parse_args(argv)

    base = RunConfig(env=args.env, n_disks=args.n_disks, grid_map=args.grid_map,
                     total_steps=args.total_steps, steps_before_grammar=args.steps_before_grammar,
                     calculator=args.calculator)
    jobs = [base.replace(seed=s, grammar_iterations=gi) for s in range(args.seeds) for gi in (0, 1)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    pairs = list(zip(results[0::2], results[1::2]))

    rows = []
    print(f"{'seed':>4} {'base_solve':>10} {'ag_solve':>9} {'base_final':>10} {'ag_final':>9} "
          f"{'ag_ratio':>8} {'macros':>6}")
    for seed, (b, a) in enumerate(pairs):
        rows.append({"seed": seed, "base_first_solve": b["first_solve"], "ag_first_solve": a["first_solve"],
                     "base_final": b["final"], "ag_final": a["final"], "ag_move_ratio": a["ratio"],
                     "macros": a["macros"]})
        print(f"{seed:>4} {b['first_solve']:>10} {a['first_solve']:>9} {b['final']:>10.1f} {a['final']:>9.1f} "
              f"{a['ratio']:>8.3f} {a['macros']:>6}")
    med_b = statistics.median(r["base_first_solve"] for r in rows)
    med_a = statistics.median(r["ag_first_solve"] for r in rows)
    print(f"median first-solve: base {med_b:g}, AG {med_a:g}, ratio {med_a / med_b:.3f}")
    print(f"median final score: base {statistics.median(r['base_final'] for r in rows):.1f}, "
          f"AG {statistics.median(r['ag_final'] for r in rows):.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
