"""Regenerate the golden estimate fixture in tests/data.

The accelerator comes from a short DAS run on a small network; every layer's
closed-form counts are checked against the loop-nest simulator before the
estimate is written, so the golden file is only produced by a verified build.
"""

import argparse
import contextlib
import io
import sys
from pathlib import Path

from netaccel.cli import dumps, main
from netaccel.costmodel import HardwareCostTables, compute_cycles, count_accesses
from netaccel.das import DasConfig, das_optimize
from netaccel.gads import AcceleratorSpace
from netaccel.oracle import oracle_simulate
from netaccel.workload import BlockChoice, NetworkDesc, expand_block

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def golden_network() -> NetworkDesc:
    layers = expand_block(BlockChoice(3, 2, 1), 4, 4, 4, 1) + expand_block(BlockChoice(3, 1, 2), 4, 8, 4, 2)
    return NetworkDesc(tuple(layers))


def main_(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DATA)
    args = ap.parse_args(argv)
    net = golden_network()
    tables = HardwareCostTables()
    space = AcceleratorSpace.for_layers(net.layers, pe_count_options=(4, 8, 16))
    res = das_optimize(net, space, DasConfig(steps=200, rng_seed=7), tables)
    for i, layer in enumerate(net.layers):
        c = res.config.chunk_index(i)
        want, cyc = oracle_simulate(layer, res.config, chunk=c)
        if count_accesses(layer, res.config, c) != want or compute_cycles(layer, res.config, c) != cyc:
            print(f"layer {i}: closed form disagrees with the simulator", file=sys.stderr)
            return 1
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "golden_network.json").write_text(dumps(net.to_dict()))
    (args.out / "golden_accel.json").write_text(dumps(res.config.to_dict()))
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(["estimate", str(args.out / "golden_network.json"),
                     str(args.out / "golden_accel.json"), "--out", str(args.out / "_scratch")])
    (args.out / "golden_estimate.json").write_text(buf.getvalue())
    for f in (args.out / "_scratch").iterdir():
        f.unlink()
    (args.out / "_scratch").rmdir()
    print(f"wrote golden files to {args.out} (estimate exit {code})")
    return 0


if __name__ == "__main__":
    sys.exit(main_())
