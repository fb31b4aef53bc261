"""Analytical latency/energy model for a network on a GADS accelerator.

Reuse rule: a tile stays resident at a level until a loop outside that level,
over a dimension the tensor is indexed by, changes its index. Irrelevant
loops nested inside the innermost relevant loop are free temporal reuse;
irrelevant loops outside it force refetches. Parallel-for (PE array) loops
fan data out in space: lanes that differ only in dimensions a tensor does not
depend on share one GB read (multicast), every lane still receives its own
NoC transfer. Ifmap halos of neighbouring tiles are not deduplicated.

Partial sums: the first visit of an ofmap tile starts from zero; every later
visit reads the partial sum back from the parent, every eviction writes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .gads import (
    PIPELINE, TENSORS, AcceleratorConfig, LayerMapping, area_used, dsp_used,
    resolve_mapping, tensor_dims, tile_footprint,
)
from .workload import DIMS, ConvLayerDesc, NetworkDesc, macs

LEVELS = ("DRAM", "GB", "NoC", "RF")
OBJECTIVES = ("fps", "edp", "latency")


class IllegalConfigError(ValueError):
    pass


class EmptyNetworkError(ValueError):
    pass


@dataclass(frozen=True)
class HardwareCostTables:
    unit_energy: dict[str, float] = field(default_factory=lambda: {
        "RF": 1.0, "NoC": 2.0, "GB": 6.0, "DRAM": 200.0, "MAC": 1.0})
    # words per cycle at each boundary; inf means never the bottleneck
    bandwidth: dict[str, float] = field(default_factory=lambda: {
        "DRAM": 16.0, "GB": 64.0, "NoC": 256.0})
    gb_capacity: int = 65536
    rf_capacity: int = 512
    clock_freq: float = 200e6
    dsp_per_pe: int = 1
    area_per_pe: float = 1.0
    area_per_word: float = 0.001

    def __post_init__(self):
        for name, v in list(self.unit_energy.items()) + list(self.bandwidth.items()):
            if not v >= 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("gb_capacity", "rf_capacity", "clock_freq", "dsp_per_pe"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {"unit_energy": dict(self.unit_energy), "bandwidth": dict(self.bandwidth),
                "gb_capacity": self.gb_capacity, "rf_capacity": self.rf_capacity,
                "clock_freq": self.clock_freq, "dsp_per_pe": self.dsp_per_pe,
                "area_per_pe": self.area_per_pe, "area_per_word": self.area_per_word}

    @classmethod
    def from_dict(cls, d: dict) -> "HardwareCostTables":
        base = cls()
        kw = dict(d)
        kw["unit_energy"] = {**base.unit_energy, **d.get("unit_energy", {})}
        kw["bandwidth"] = {**base.bandwidth,
                           **{k: float(v) for k, v in d.get("bandwidth", {}).items()}}
        return cls(**kw)


def _zero_counts() -> dict[str, dict[str, dict[str, int]]]:
    return {lvl: {t: {"reads": 0, "writes": 0} for t in TENSORS} for lvl in LEVELS}


@dataclass
class AccessCounts:
    """Word transfers per level and tensor. NoC reads go down to PEs, writes come up."""

    counts: dict[str, dict[str, dict[str, int]]] = field(default_factory=_zero_counts)

    def get(self, level: str, tensor: str, kind: str) -> int:
        return self.counts[level][tensor][kind]

    def add(self, level: str, tensor: str, kind: str, n: int) -> None:
        self.counts[level][tensor][kind] += n

    def level_total(self, level: str) -> int:
        return sum(v["reads"] + v["writes"] for v in self.counts[level].values())

    def __eq__(self, other):
        return isinstance(other, AccessCounts) and self.counts == other.counts

    def rows(self):
        for lvl in LEVELS:
            for t in TENSORS:
                yield lvl, t, self.counts[lvl][t]["reads"], self.counts[lvl][t]["writes"]

    def to_dict(self) -> dict:
        return {lvl: {t: dict(self.counts[lvl][t]) for t in TENSORS} for lvl in LEVELS}


def _refills(loops: list[tuple[str, int]], deps: frozenset[str]) -> int:
    """Tile fetches under stationarity: product of trips down to the innermost relevant loop."""
    last = -1
    for i, (d, trip) in enumerate(loops):
        if trip > 1 and d in deps:
            last = i
    return math.prod(trip for _, trip in loops[:last + 1])


def _distinct(loops: list[tuple[str, int]], deps: frozenset[str]) -> int:
    return math.prod(trip for d, trip in loops if d in deps)


def check_mapping(mapping: LayerMapping) -> None:
    for d in DIMS:
        if mapping.trips["PE"][d] > 1 and d not in mapping.noc.dims:
            raise IllegalConfigError(f"PE tile on {d} not parallelized by {mapping.noc.name}")


def mapping_accesses(mapping: LayerMapping) -> AccessCounts:
    check_mapping(mapping)
    layer = mapping.layer
    deps = tensor_dims(layer)
    n_macs = macs(layer)
    dram_loops = [(d, mapping.trips["DRAM"][d]) for d in mapping.loop_order["DRAM"]]
    outer_loops = dram_loops + [(d, mapping.trips["GB"][d]) for d in mapping.loop_order["GB"]]
    pe = mapping.trips["PE"]
    lanes = math.prod(pe.values())
    ext_gb = mapping.extents("GB")
    ext_rf = mapping.extents("RF")

    acc = AccessCounts()
    for t in TENSORS:
        fp_gb = tile_footprint(layer, t, ext_gb)
        fp_rf = tile_footprint(layer, t, ext_rf)
        gb_fills = _refills(dram_loops, deps[t])
        rf_fills = _refills(outer_loops, deps[t])
        shared = math.prod(pe[d] for d in DIMS if d in deps[t])
        if t != "ofmap":
            words = gb_fills * fp_gb
            acc.add("DRAM", t, "reads", words)
            acc.add("GB", t, "writes", words)
            acc.add("GB", t, "reads", rf_fills * shared * fp_rf)
            acc.add("NoC", t, "reads", rf_fills * lanes * fp_rf)
            acc.add("RF", t, "writes", rf_fills * lanes * fp_rf)
            acc.add("RF", t, "reads", n_macs)
            continue
        gb_revisits = gb_fills - _distinct(dram_loops, deps[t])
        rf_revisits = rf_fills - _distinct(outer_loops, deps[t])
        acc.add("DRAM", t, "writes", gb_fills * fp_gb)
        acc.add("DRAM", t, "reads", gb_revisits * fp_gb)
        acc.add("GB", t, "reads", gb_fills * fp_gb + rf_revisits * shared * fp_rf)
        acc.add("GB", t, "writes", gb_revisits * fp_gb + rf_fills * shared * fp_rf)
        acc.add("NoC", t, "writes", rf_fills * lanes * fp_rf)
        acc.add("NoC", t, "reads", rf_revisits * lanes * fp_rf)
        acc.add("RF", t, "reads", n_macs + rf_fills * lanes * fp_rf)
        acc.add("RF", t, "writes", n_macs + rf_revisits * lanes * fp_rf)
    return acc


def mapping_cycles(mapping: LayerMapping) -> int:
    check_mapping(mapping)
    return math.prod(mapping.trips[lvl][d] for lvl in ("DRAM", "GB", "RF") for d in DIMS)


def count_accesses(layer: ConvLayerDesc, config: AcceleratorConfig, chunk: int = 0) -> AccessCounts:
    return mapping_accesses(resolve_mapping(layer, config.chunks[chunk]))


def compute_cycles(layer: ConvLayerDesc, config: AcceleratorConfig, chunk: int = 0) -> int:
    return mapping_cycles(resolve_mapping(layer, config.chunks[chunk]))


@dataclass
class LayerCost:
    index: int
    chunk: int
    macs: int
    compute_cycles: int
    cycles: int
    energy: float
    accesses: AccessCounts

    def to_dict(self) -> dict:
        return {"index": self.index, "chunk": self.chunk, "macs": self.macs,
                "compute_cycles": self.compute_cycles, "cycles": self.cycles,
                "energy": self.energy, "accesses": self.accesses.to_dict()}


@dataclass
class CostReport:
    cycles: int  # per image, steady state
    latency_cycles: int  # one image end to end
    energy: float
    edp: float
    fps: float
    pe_used: int
    dsp_used: int
    area_used: float
    layers: list[LayerCost] = field(default_factory=list)

    def objective(self, name: str) -> float:
        """Scalar to minimize; FPS is maximized by minimizing cycles per image."""
        if name == "fps":
            return float(self.cycles)
        if name == "latency":
            return float(self.latency_cycles)
        if name == "edp":
            return self.edp
        raise ValueError(f"unknown objective {name!r}; expected one of {OBJECTIVES}")

    def to_dict(self) -> dict:
        return {"cycles": self.cycles, "latency_cycles": self.latency_cycles,
                "energy": self.energy, "edp": self.edp, "fps": self.fps,
                "pe_used": self.pe_used, "dsp_used": self.dsp_used,
                "area_used": self.area_used, "layers": [lc.to_dict() for lc in self.layers]}

    def breakdown_rows(self):
        """(layer, chunk, level, tensor, reads, writes) rows for CSV output."""
        for lc in self.layers:
            for lvl, t, r, w in lc.accesses.rows():
                yield lc.index, lc.chunk, lvl, t, r, w


def _energy(acc: AccessCounts, n_macs: int, tables: HardwareCostTables) -> float:
    e = n_macs * tables.unit_energy["MAC"]
    for lvl in LEVELS:
        e += acc.level_total(lvl) * tables.unit_energy[lvl]
    return e


def _memory_cycles(acc: AccessCounts, tables: HardwareCostTables) -> int:
    worst = 0
    for lvl, bw in tables.bandwidth.items():
        words = acc.level_total(lvl)
        if words and bw != math.inf:
            if bw <= 0:
                raise IllegalConfigError(f"zero bandwidth at {lvl} with {words} words to move")
            worst = max(worst, math.ceil(words / bw))
    return worst


def _layer_cost(index: int, chunk: int, mapping: LayerMapping,
                tables: HardwareCostTables) -> LayerCost:
    acc = mapping_accesses(mapping)
    comp = mapping_cycles(mapping)
    n = macs(mapping.layer)
    return LayerCost(index=index, chunk=chunk, macs=n, compute_cycles=comp,
                     cycles=max(comp, _memory_cycles(acc, tables)),
                     energy=_energy(acc, n, tables), accesses=acc)


def _report(layer_costs: list[LayerCost], config: AcceleratorConfig,
            tables: HardwareCostTables) -> CostReport:
    energy = sum(lc.energy for lc in layer_costs)
    latency = sum(lc.cycles for lc in layer_costs)
    if config.mode == PIPELINE:
        per_chunk: dict[int, int] = {}
        for lc in layer_costs:
            per_chunk[lc.chunk] = per_chunk.get(lc.chunk, 0) + lc.cycles
        cycles = max(per_chunk.values())
        pe_used = sum(config.chunks[c].pe_product() for c in per_chunk)
    else:
        cycles = latency
        pe_used = config.chunks[0].pe_product()
    return CostReport(cycles=cycles, latency_cycles=latency, energy=energy,
                      edp=energy * cycles, fps=tables.clock_freq / cycles if cycles else math.inf,
                      pe_used=pe_used, dsp_used=dsp_used(config, tables),
                      area_used=area_used(config, tables), layers=layer_costs)


def layer_cost(layer: ConvLayerDesc, config: AcceleratorConfig, tables: HardwareCostTables,
               chunk: int = 0) -> CostReport:
    """Single-layer report: roofline max of compute and per-boundary memory cycles."""
    lc = _layer_cost(0, chunk, resolve_mapping(layer, config.chunks[chunk]), tables)
    return _report([lc], AcceleratorConfig(config.chunks, config.max_pes), tables)


def network_cost(net: NetworkDesc, config: AcceleratorConfig,
                 tables: HardwareCostTables) -> CostReport:
    """Whole-network report.

    Multi-cycle: layers run back to back on one array, cycles per image is
    the sum. Pipeline: each chunk runs its layers back to back and chunks
    overlap across images, so cycles per image is the slowest chunk. Energy
    is summed over layers in both modes. DRAM bandwidth is not split between
    concurrently running chunks.
    """
    if not net.layers:
        raise EmptyNetworkError("network has no layers")
    costs = []
    for i, layer in enumerate(net.layers):
        c = config.chunk_index(i)
        costs.append(_layer_cost(i, c, resolve_mapping(layer, config.chunks[c]), tables))
    return _report(costs, config, tables)


def isolated_cost(layers, chunks, config: AcceleratorConfig,
                  tables: HardwareCostTables) -> CostReport:
    """Cost of ``layers`` run back to back, layer i on ``config.chunks[chunks[i]]``.

    Multi-cycle semantics regardless of the config's mode: used to price one
    operator on an accelerator searched for a whole network.
    """
    if not layers:
        raise EmptyNetworkError("no layers to cost")
    costs = [_layer_cost(i, c, resolve_mapping(layer, config.chunks[c]), tables)
             for i, (layer, c) in enumerate(zip(layers, chunks))]
    mc = AcceleratorConfig(config.chunks, config.max_pes)
    report = _report(costs, mc, tables)
    report.pe_used = max(config.chunks[c].pe_product() for c in set(chunks))
    return report
