"""Brute-force loop-nest simulator used as ground truth for the cost model.

Walks every iteration of DRAM/GB loops, every PE lane and every RF loop,
tracks which tile each level currently holds and counts transfers as they
happen. Tile footprints are measured by enumerating element coordinates and
taking their bounding box. Nothing here shares code with the closed-form
counts in ``costmodel`` beyond the mapping resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .costmodel import AccessCounts, check_mapping
from .gads import TENSORS, AcceleratorConfig, LayerMapping, resolve_mapping
from .workload import ConvLayerDesc, macs

DEFAULT_MAC_CAP = 10 ** 6


class CapExceededError(ValueError):
    pass


def _coords(layer: ConvLayerDesc, tensor: str, idx: dict[str, int]) -> tuple[int, ...]:
    """Element a MAC at loop index ``idx`` touches in ``tensor``."""
    if tensor == "weights":
        return (idx["K"], idx["C"], idx["R"], idx["S"])
    if tensor == "ofmap":
        return (idx["K"], idx["Y"], idx["X"])
    group = idx["K"] if layer.group_count > 1 else 0
    return (group, idx["C"], idx["Y"] * layer.stride + idx["R"], idx["X"] * layer.stride + idx["S"])


class _Footprints:
    """Bounding-box size of the elements a block of loop indices touches."""

    def __init__(self, layer: ConvLayerDesc):
        self.layer = layer
        self.cache: dict[tuple, int] = {}

    def __call__(self, tensor: str, ranges: dict[str, range]) -> int:
        key = (tensor,) + tuple((d, r.start, r.stop) for d, r in sorted(ranges.items()))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        lo = hi = None
        names = sorted(ranges)
        for values in product(*(ranges[d] for d in names)):
            c = _coords(self.layer, tensor, dict(zip(names, values)))
            if lo is None:
                lo, hi = list(c), list(c)
            else:
                for i, v in enumerate(c):
                    lo[i] = min(lo[i], v)
                    hi[i] = max(hi[i], v)
        size = 1
        for a, b in zip(lo, hi):
            size *= b - a + 1
        self.cache[key] = size
        return size


def simulate_mapping(mapping: LayerMapping, cap: int = DEFAULT_MAC_CAP) -> tuple[AccessCounts, int]:
    check_mapping(mapping)
    layer = mapping.layer
    if macs(layer) > cap:
        raise CapExceededError(f"layer has {macs(layer)} MACs, oracle cap is {cap}")
    dims = list(layer.loop_dims())
    trips = mapping.trips
    # strides of each level inside the flattened index of a dimension
    span = {d: {"RF": 1, "PE": trips["RF"][d],
                "GB": trips["RF"][d] * trips["PE"][d],
                "DRAM": trips["RF"][d] * trips["PE"][d] * trips["GB"][d]} for d in dims}
    deps = {"weights": {"R", "S", "C", "K"}, "ofmap": {"K", "X", "Y"},
            "ifmap": {"C", "X", "Y", "R", "S"} | ({"K"} if layer.group_count > 1 else set())}

    temporal = [("DRAM", d) for d in mapping.loop_order["DRAM"]] + \
               [("GB", d) for d in mapping.loop_order["GB"]]
    pe_dims = [d for d in dims if trips["PE"][d] > 1]
    rf_dims = list(mapping.loop_order["RF"])
    lanes = list(product(*(range(trips["PE"][d]) for d in pe_dims)))
    rf_iters = list(product(*(range(trips["RF"][d]) for d in rf_dims)))
    fp = _Footprints(layer)
    acc = AccessCounts()

    gb_tile: dict[str, tuple | None] = {t: None for t in TENSORS}
    rf_tile: dict[str, tuple | None] = {t: None for t in TENSORS}
    gb_fp = {t: 0 for t in TENSORS}
    rf_fp = {t: 0 for t in TENSORS}
    rf_groups = {t: 0 for t in TENSORS}
    gb_seen: set = set()
    rf_seen: set = set()
    cycles = 0
    n_macs = 0

    def flush_rf_ofmap():
        words = rf_fp["ofmap"]
        acc.add("NoC", "ofmap", "writes", words * len(lanes))
        acc.add("RF", "ofmap", "reads", words * len(lanes))
        acc.add("GB", "ofmap", "writes", words * rf_groups["ofmap"])

    def flush_gb_ofmap():
        acc.add("DRAM", "ofmap", "writes", gb_fp["ofmap"])
        acc.add("GB", "ofmap", "reads", gb_fp["ofmap"])

    for idx in product(*(range(trips[lvl][d]) for lvl, d in temporal)):
        where = {lvl: {d: 0 for d in dims} for lvl in ("DRAM", "GB")}
        for (lvl, d), i in zip(temporal, idx):
            where[lvl][d] = i
        dram_base = {d: where["DRAM"][d] * span[d]["DRAM"] for d in dims}
        gb_base = {d: dram_base[d] + where["GB"][d] * span[d]["GB"] for d in dims}

        for t in TENSORS:
            key = tuple(where["DRAM"][d] for d in dims if d in deps[t])
            if key == gb_tile[t]:
                continue
            if t == "ofmap" and gb_tile[t] is not None:
                flush_gb_ofmap()
            gb_tile[t] = key
            gb_fp[t] = fp(t, {d: range(dram_base[d], dram_base[d] + span[d]["DRAM"]) for d in dims})
            if t != "ofmap":
                acc.add("DRAM", t, "reads", gb_fp[t])
                acc.add("GB", t, "writes", gb_fp[t])
            else:
                if key in gb_seen:
                    acc.add("DRAM", t, "reads", gb_fp[t])
                    acc.add("GB", t, "writes", gb_fp[t])
                gb_seen.add(key)

        for t in TENSORS:
            key = tuple(where[lvl][d] for lvl in ("DRAM", "GB") for d in dims if d in deps[t])
            if key == rf_tile[t]:
                continue
            if t == "ofmap" and rf_tile[t] is not None:
                flush_rf_ofmap()
            rf_tile[t] = key
            groups = set()
            words = 0
            for lane in lanes:
                lane_at = dict(zip(pe_dims, lane))
                base = {d: gb_base[d] + lane_at.get(d, 0) * span[d]["PE"] for d in dims}
                words = fp(t, {d: range(base[d], base[d] + span[d]["PE"]) for d in dims})
                groups.add(tuple(lane_at.get(d, 0) for d in pe_dims if d in deps[t]))
            rf_fp[t] = words
            rf_groups[t] = len(groups)
            if t != "ofmap":
                acc.add("GB", t, "reads", words * len(groups))
                acc.add("NoC", t, "reads", words * len(lanes))
                acc.add("RF", t, "writes", words * len(lanes))
            else:
                if key in rf_seen:
                    acc.add("GB", t, "reads", words * len(groups))
                    acc.add("NoC", t, "reads", words * len(lanes))
                    acc.add("RF", t, "writes", words * len(lanes))
                rf_seen.add(key)

        for _ in rf_iters:
            cycles += 1
            for _lane in lanes:
                n_macs += 1
                acc.add("RF", "weights", "reads", 1)
                acc.add("RF", "ifmap", "reads", 1)
                acc.add("RF", "ofmap", "reads", 1)
                acc.add("RF", "ofmap", "writes", 1)

    flush_rf_ofmap()
    flush_gb_ofmap()
    assert n_macs == macs(layer), (n_macs, macs(layer))
    return acc, cycles


def oracle_simulate(layer: ConvLayerDesc, config: AcceleratorConfig, tables=None,
                    chunk: int = 0, cap: int = DEFAULT_MAC_CAP) -> tuple[AccessCounts, int]:
    """Exact access counts and cycle count by walking the full loop nest.

    ``tables`` is accepted for interface symmetry with the analytical model;
    counts do not depend on unit costs.
    """
    return simulate_mapping(resolve_mapping(layer, config.chunks[chunk]), cap=cap)


@dataclass
class SweepResult:
    checked: int = 0
    skipped_illegal: int = 0
    mismatch: dict | None = None

    @property
    def passed(self) -> bool:
        return self.mismatch is None


def equivalence_sweep(layers, tables=None, *, max_tile_options: int = 2,
                      pe_count_options=(4, 16), order_variants: int = 3, seed: int = 0,
                      limit: int | None = None, cap: int = DEFAULT_MAC_CAP) -> SweepResult:
    """Compare closed-form counts and cycles with the simulator on every legal config.

    For each layer the tile/NoC/PE menu is enumerated exhaustively; loop
    orders come from ``order_variants`` fixed settings (the canonical order,
    then seeded random permutations per level). Stops at the first mismatch.
    """
    import numpy as np

    from .costmodel import HardwareCostTables, compute_cycles, count_accesses
    from .gads import DIMS, MULTICYCLE, ORDER_LEVELS, AcceleratorSpace, enumerate_configs, validate
    from .workload import NetworkDesc

    tables = tables or HardwareCostTables()
    rng = np.random.default_rng(seed)
    variants = [{lvl: DIMS for lvl in ORDER_LEVELS}]
    for _ in range(order_variants - 1):
        variants.append({lvl: tuple(DIMS[i] for i in rng.permutation(len(DIMS)))
                         for lvl in ORDER_LEVELS})
    out = SweepResult()
    for layer in layers:
        if macs(layer) > cap:
            raise CapExceededError(f"layer has {macs(layer)} MACs, oracle cap is {cap}")
        net = NetworkDesc((layer,))
        for orders in variants[:max(order_variants, 0)]:
            space = AcceleratorSpace.for_layers(
                [layer], max_tile_options=max_tile_options, pipeline_options=(MULTICYCLE,),
                pe_count_options=tuple(pe_count_options), searchable_orders=(),
                fixed_orders=orders)
            for config in enumerate_configs(space, net):
                if limit is not None and out.checked >= limit:
                    return out
                if not validate(config, net, space, tables).legal:
                    out.skipped_illegal += 1
                    continue
                got, cyc = count_accesses(layer, config), compute_cycles(layer, config)
                want, want_cyc = oracle_simulate(layer, config, cap=cap)
                out.checked += 1
                if got != want or cyc != want_cyc:
                    out.mismatch = {"layer": layer.to_dict(), "accelerator": config.to_dict(),
                                    "analytical": got.to_dict(), "oracle": want.to_dict(),
                                    "analytical_cycles": cyc, "oracle_cycles": want_cyc}
                    return out
    return out
