"""Co-search against random search at an equal hardware-evaluation budget.

For each seed, the random baseline gets as many accelerator evaluations as the
co-search run used; the script reports whether any random point dominates the
co-search result on (accuracy, cost).
"""

import argparse
import time

from netaccel.config import load_run_config, resolve_config_path
from netaccel.cosearch import dominates, run, run_random_baseline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default="benchmark.json")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    cfg = load_run_config(resolve_config_path(args.config))
    space = cfg.search_space()
    wins = 0
    for seed in range(args.seeds):
        t = time.time()
        c = cfg.with_seed(seed)
        res = run(c.cosearch, c.spec, space, c.tables, c.task)
        n_nets = max(1, res.evaluations // c.n_accels_per_net)
        points, front = run_random_baseline(n_nets, c.n_accels_per_net, seed, c.spec, space,
                                            c.tables, c.task, c.objective, c.constraints,
                                            c.cosearch.eval_steps)
        ok = not any(dominates((p.accuracy, p.cost), (res.accuracy, res.cost)) for p in points)
        wins += ok
        best = max(front, key=lambda p: p.accuracy)
        print(f"seed {seed}: cosearch acc {res.accuracy:.4f} cost {res.cost:.6g}; random front "
              f"{len(front)} pts, best acc {best.accuracy:.4f} at {best.cost:.6g}; "
              f"{'not dominated' if ok else 'DOMINATED'} ({time.time() - t:.0f}s)")
    print(f"not dominated in {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
