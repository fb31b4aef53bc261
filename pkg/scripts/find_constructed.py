"""Search for MAC-equal block pairs whose mapped hardware cost differs most.

Prints candidate pairs for a constructed instance where a MAC-only proxy
cannot tell two blocks apart but the accelerator can.
"""

import argparse
import itertools
from collections import defaultdict

from netaccel.costmodel import HardwareCostTables
from netaccel.das import DasConfig, NoLegalConfigError, das_optimize
from netaccel.dns import LayerSpec, SupernetSpec
from netaccel.gads import AcceleratorSpace
from netaccel.workload import BlockChoice


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--channels", type=int, default=8)
    ap.add_argument("--spatial", type=int, default=8)
    ap.add_argument("--layers", type=int, default=3)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--top", type=int, default=5)
    args = ap.parse_args()

    blocks = [BlockChoice(k, e, g) for k, e, g in itertools.product((1, 3, 5), range(1, 7), (1, 2, 4))]
    layer = LayerSpec(args.channels, args.channels, args.spatial)
    by_macs = defaultdict(list)
    for b in blocks:
        try:
            spec = SupernetSpec(layers=(layer,), candidates=(b,))
            by_macs[spec.op_macs(0, 0)].append(b)
        except ValueError:
            continue  # group does not divide the hidden width

    tables = HardwareCostTables()
    cost_of = {}
    for group in by_macs.values():
        if len(group) < 2:
            continue
        for b in group:
            spec = SupernetSpec(layers=(layer,) * args.layers, candidates=(b,))
            net = spec.network([0] * args.layers)
            space = AcceleratorSpace.for_layers(net.layers)
            try:
                cost_of[b] = das_optimize(net, space, DasConfig(steps=args.steps), tables).cost
            except NoLegalConfigError:
                pass

    pairs = []
    for macs, group in by_macs.items():
        costed = [b for b in group if b in cost_of]
        for a, b in itertools.combinations(costed, 2):
            lo, hi = sorted((a, b), key=cost_of.get)
            pairs.append((cost_of[hi] / cost_of[lo], macs, lo, hi))
    for ratio, macs, lo, hi in sorted(pairs, key=lambda p: -p[0])[:args.top]:
        print(f"{macs:>8} MACs  friendly {lo.label():<10} {cost_of[lo]:>12.6g}  "
              f"unfriendly {hi.label():<10} {cost_of[hi]:>12.6g}  ratio {ratio:.2f}")


if __name__ == "__main__":
    main()
