"""Co-search vs the MAC-driven sequential baseline on the constructed instance."""

import argparse
import statistics

from netaccel.config import load_run_config, resolve_config_path
from netaccel.cosearch import run, run_sequential_baseline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default="constructed.json")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    cfg = load_run_config(resolve_config_path(args.config))
    space = cfg.search_space()
    rows = []
    for seed in range(args.seeds):
        c = cfg.with_seed(seed)
        co = run(c.cosearch, c.spec, space, c.tables, c.task)
        seq = run_sequential_baseline(c.cosearch, c.spec, space, c.tables, c.task)
        rows.append((co, seq))
        print(f"seed {seed}: cosearch {co.choices} cost {co.cost:.6g} acc {co.accuracy:.4f} | "
              f"seq {seq.choices} cost {seq.cost:.6g} acc {seq.accuracy:.4f}")
    for name, i in (("cosearch", 0), ("seq", 1)):
        print(f"{name:>8}: median cost {statistics.median(r[i].cost for r in rows):.6g}, "
              f"median accuracy {statistics.median(r[i].accuracy for r in rows):.4f}")


if __name__ == "__main__":
    main()
