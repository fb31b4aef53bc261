"""Generic accelerator design space.

Memory hierarchy, outermost first: DRAM -> global buffer (GB) -> PE array
(parallel-for, routed by the NoC) -> register file (RF). Loop orders are
searched at DRAM, GB and RF; loop sizes at GB, PE and RF. The DRAM loop size
of a dimension is whatever is left over.

A config holds one mapping per chunk. Multi-cycle designs use chunk 0 for
every layer; pipelined designs assign each layer to a chunk and split PEs and
GB capacity between chunks in proportion to their MAC share.

Tiles are global: the space fixes a reference extent per dimension (the lcm
over every layer it must serve) and each layer projects the chosen tiles onto
its own extents with a gcd chain (RF, then PE, then GB). Every projected
tiling multiplies out to the layer's dimension exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

from .workload import DIMS, ConvLayerDesc, NetworkDesc, macs

ORDER_LEVELS = ("DRAM", "GB", "RF")
TILE_LEVELS = ("GB", "PE", "RF")
MULTICYCLE = "multicycle"
PIPELINE = "pipeline"

TENSORS = ("weights", "ifmap", "ofmap")


class NocChoice(enum.Enum):
    OutputParallel = ("K", "Y", "X")
    KernelParallel = ("K", "C", "R", "S")
    KernelOutputParallel = ("K", "R", "X")

    @property
    def dims(self) -> tuple[str, ...]:
        return self.value


class ShapeMismatchError(ValueError):
    pass


@lru_cache(maxsize=None)
def _divisors(n: int) -> tuple[int, ...]:
    small, large = [], []
    i = 1
    while i * i <= n:
        if n % i == 0:
            small.append(i)
            if i != n // i:
                large.append(n // i)
        i += 1
    return tuple(small + large[::-1])


def divisors(n: int) -> list[int]:
    if n < 1:
        raise ValueError(f"divisors needs n >= 1, got {n}")
    return list(_divisors(n))


def enumerate_tilings(dim: int, num_levels: int) -> list[tuple[int, ...]]:
    """Ordered factorizations of ``dim`` into ``num_levels`` positive factors."""
    if dim < 1 or num_levels < 1:
        raise ValueError("dim and num_levels must be >= 1")
    if num_levels == 1:
        return [(dim,)]
    out = []
    for d in divisors(dim):
        for rest in enumerate_tilings(dim // d, num_levels - 1):
            out.append((d,) + rest)
    return out


# ---------------------------------------------------------------- configs

@dataclass(frozen=True)
class ChunkMapping:
    """Loop orders (outermost first) and per-level tile sizes of one sub-accelerator."""

    loop_order: dict[str, tuple[str, ...]]
    tiles: dict[str, dict[str, int]]
    noc: NocChoice = NocChoice.OutputParallel

    def pe_product(self) -> int:
        return math.prod(self.tiles["PE"].values())

    def to_dict(self) -> dict:
        return {
            "noc": self.noc.name,
            "loop_order": {lvl: list(self.loop_order[lvl]) for lvl in ORDER_LEVELS},
            "tiles": {lvl: {d: self.tiles[lvl][d] for d in DIMS} for lvl in TILE_LEVELS},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChunkMapping":
        return cls(
            loop_order={lvl: tuple(d["loop_order"][lvl]) for lvl in ORDER_LEVELS},
            tiles={lvl: {dim: int(d["tiles"][lvl].get(dim, 1)) for dim in DIMS}
                   for lvl in TILE_LEVELS},
            noc=NocChoice[d["noc"]],
        )

    @classmethod
    def trivial(cls, noc: NocChoice = NocChoice.OutputParallel) -> "ChunkMapping":
        return cls(loop_order={lvl: DIMS for lvl in ORDER_LEVELS},
                   tiles={lvl: {d: 1 for d in DIMS} for lvl in TILE_LEVELS}, noc=noc)


@dataclass(frozen=True)
class AcceleratorConfig:
    chunks: tuple[ChunkMapping, ...]
    max_pes: int
    mode: str = MULTICYCLE
    chunk_of_layer: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "chunks", tuple(self.chunks))
        object.__setattr__(self, "chunk_of_layer", tuple(self.chunk_of_layer))

    def chunk_index(self, layer_idx: int) -> int:
        if self.mode == MULTICYCLE:
            return 0
        return self.chunk_of_layer[layer_idx]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "max_pes": self.max_pes,
            "chunk_of_layer": list(self.chunk_of_layer),
            "chunks": [c.to_dict() for c in self.chunks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcceleratorConfig":
        return cls(chunks=tuple(ChunkMapping.from_dict(c) for c in d["chunks"]),
                   max_pes=int(d["max_pes"]), mode=d.get("mode", MULTICYCLE),
                   chunk_of_layer=tuple(d.get("chunk_of_layer", ())))

    @classmethod
    def trivial(cls, max_pes: int = 1) -> "AcceleratorConfig":
        return cls(chunks=(ChunkMapping.trivial(),), max_pes=max_pes)


# ---------------------------------------------------------------- space

def _lcm_dims(layers: Sequence[ConvLayerDesc]) -> dict[str, int]:
    ref = {d: 1 for d in DIMS}
    for layer in layers:
        for d, v in layer.loop_dims().items():
            ref[d] = math.lcm(ref[d], v)
    return ref


@dataclass(frozen=True)
class AcceleratorSpace:
    ref_dims: dict[str, int]
    tile_options: dict[str, dict[str, tuple[int, ...]]]
    noc_options: tuple[NocChoice, ...] = tuple(NocChoice)
    pe_count_options: tuple[int, ...] = (16, 32, 64, 128)
    pipeline_options: tuple[str, ...] = (MULTICYCLE, PIPELINE)
    num_chunks: int = 2
    num_dw_chunks: int = 1
    num_layer_slots: int = 0
    searchable_orders: tuple[str, ...] = ORDER_LEVELS
    fixed_orders: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: {lvl: DIMS for lvl in ORDER_LEVELS})

    def __post_init__(self):
        for lvl in TILE_LEVELS:
            for d in DIMS:
                opts = self.tile_options[lvl][d]
                if 1 not in opts:
                    raise ValueError(f"tile options for {lvl}/{d} must include 1")
                for v in opts:
                    if self.ref_dims[d] % v:
                        raise ValueError(f"tile option {v} does not divide {d}={self.ref_dims[d]}")
        for lvl, order in self.fixed_orders.items():
            if sorted(order) != sorted(DIMS):
                raise ValueError(f"fixed order for {lvl} must be a permutation of {DIMS}")
        if PIPELINE in self.pipeline_options and self.num_chunks < 1:
            raise ValueError("pipeline mode needs num_chunks >= 1")

    @classmethod
    def for_layers(cls, layers: Sequence[ConvLayerDesc], *, max_tile_options: int | None = None,
                   num_layer_slots: int | None = None, **kw) -> "AcceleratorSpace":
        """Default space whose tile menus are the divisors of each reference extent."""
        ref = _lcm_dims(layers)
        opts = {}
        for lvl in TILE_LEVELS:
            opts[lvl] = {}
            for d in DIMS:
                divs = tuple(divisors(ref[d]))
                if max_tile_options is not None:
                    divs = divs[:max_tile_options]
                opts[lvl][d] = divs
        if num_layer_slots is None:
            num_layer_slots = len(layers)
        return cls(ref_dims=ref, tile_options=opts, num_layer_slots=num_layer_slots, **kw)

    @property
    def pipeline_chunks(self) -> int:
        return self.num_chunks + self.num_dw_chunks

    @property
    def total_chunks(self) -> int:
        return self.pipeline_chunks if PIPELINE in self.pipeline_options else 1

    def chunks_for(self, depthwise: bool) -> list[int]:
        """Pipeline chunks a layer may be assigned to."""
        if self.num_dw_chunks == 0:
            return list(range(self.num_chunks))
        if depthwise:
            return list(range(self.num_chunks, self.pipeline_chunks))
        return list(range(self.num_chunks))

    def slot_shapes(self) -> dict[tuple, tuple[int, ...]]:
        """Logit shape of every categorical slot, in canonical order."""
        n = len(DIMS)
        shapes: dict[tuple, tuple[int, ...]] = {}
        if len(self.pipeline_options) > 1:
            shapes[("mode",)] = (len(self.pipeline_options),)
        shapes[("max_pes",)] = (len(self.pe_count_options),)
        if PIPELINE in self.pipeline_options and self.pipeline_chunks > 1:
            for i in range(self.num_layer_slots):
                shapes[("assign", i)] = (self.pipeline_chunks,)
        for c in range(self.total_chunks):
            shapes[(c, "noc")] = (len(self.noc_options),)
            for lvl in self.searchable_orders:
                shapes[(c, "order", lvl)] = (n, n)
            for lvl in ("RF", "PE", "GB"):
                for d in DIMS:
                    shapes[(c, "tile", lvl, d)] = (len(self.tile_options[lvl][d]),)
        return shapes

    def to_dict(self) -> dict:
        return {
            "ref_dims": dict(self.ref_dims),
            "tile_options": {lvl: {d: list(self.tile_options[lvl][d]) for d in DIMS}
                             for lvl in TILE_LEVELS},
            "noc_options": [n.name for n in self.noc_options],
            "pe_count_options": list(self.pe_count_options),
            "pipeline_options": list(self.pipeline_options),
            "num_chunks": self.num_chunks,
            "num_dw_chunks": self.num_dw_chunks,
            "num_layer_slots": self.num_layer_slots,
            "searchable_orders": list(self.searchable_orders),
            "fixed_orders": {k: list(v) for k, v in self.fixed_orders.items()},
        }


def space_size(space: AcceleratorSpace) -> float:
    """log10 of the product of every slot's option count (n! per loop-order slot).

    Counts menus, not legal combinations: divisor-chain and PE-budget masks
    are ignored, so this is an upper bound on the number of distinct configs.
    """
    total = 0.0
    for shape in space.slot_shapes().values():
        if len(shape) == 2:
            total += math.log10(math.factorial(shape[0]))
        else:
            total += math.log10(shape[0])
    return total


# ---------------------------------------------------------------- decisions

Chooser = Callable[[tuple, list[int]], int]


def chunk_pe_budgets(max_pes: int, chunk_of_layer: Sequence[int], net: NetworkDesc,
                     n_chunks: int) -> tuple[list[int], list[float]]:
    """PE count and GB share of each pipeline chunk, proportional to MAC share."""
    chunk_macs = [0] * n_chunks
    for i, layer in enumerate(net.layers):
        chunk_macs[chunk_of_layer[i]] += macs(layer)
    total = sum(chunk_macs) or 1
    pes, shares = [], []
    for m in chunk_macs:
        share = m / total
        shares.append(share)
        pes.append(max(1, math.floor(max_pes * share + 0.5)) if m else 0)
    return pes, shares


def walk_config(space: AcceleratorSpace, net: NetworkDesc, choose: Chooser) -> AcceleratorConfig:
    """Build a config by asking ``choose`` for every non-trivial decision.

    ``choose(key, allowed)`` receives the slot key and the indices still legal
    for it and returns one of them. Loop orders are decided one position at a
    time with key ``(chunk, "order", level, step)`` over remaining dimension
    indices. Decisions with a single legal option are taken silently.
    """

    def pick(key, allowed):
        if len(allowed) == 1:
            return allowed[0]
        return choose(key, allowed)

    mode = space.pipeline_options[pick(("mode",), list(range(len(space.pipeline_options))))]
    max_pes = space.pe_count_options[pick(("max_pes",), list(range(len(space.pe_count_options))))]

    n_layers = len(net.layers)
    if mode == PIPELINE:
        if n_layers > space.num_layer_slots:
            raise ShapeMismatchError(
                f"network has {n_layers} layers but space has {space.num_layer_slots} slots")
        assign = []
        for i, layer in enumerate(net.layers):
            assign.append(pick(("assign", i), space.chunks_for(layer.depthwise)))
        n_chunks = space.pipeline_chunks
        caps, _ = chunk_pe_budgets(max_pes, assign, net, n_chunks)
        used = set(assign)
    else:
        assign = []
        n_chunks = 1
        caps = [max_pes]
        used = {0}

    chunks = []
    for c in range(n_chunks):
        if c not in used:
            chunks.append(ChunkMapping.trivial(space.noc_options[0]))
            continue
        noc = space.noc_options[pick((c, "noc"), list(range(len(space.noc_options))))]
        orders = {}
        for lvl in ORDER_LEVELS:
            if lvl not in space.searchable_orders:
                orders[lvl] = tuple(space.fixed_orders[lvl])
                continue
            remaining = list(range(len(DIMS)))
            seq = []
            for step in range(len(DIMS)):
                j = pick((c, "order", lvl, step), list(remaining))
                remaining.remove(j)
                seq.append(DIMS[j])
            orders[lvl] = tuple(seq)
        tiles = {lvl: {} for lvl in TILE_LEVELS}
        pe_prod = 1
        for d in DIMS:
            ref = space.ref_dims[d]
            opts = space.tile_options["RF"][d]
            rf = opts[pick((c, "tile", "RF", d), [i for i, v in enumerate(opts) if ref % v == 0])]
            opts = space.tile_options["PE"][d]
            allowed = [i for i, v in enumerate(opts)
                       if (ref // rf) % v == 0 and (v == 1 or d in noc.dims)
                       and pe_prod * v <= max(caps[c], 1)]
            pe = opts[pick((c, "tile", "PE", d), allowed)]
            pe_prod *= pe
            opts = space.tile_options["GB"][d]
            gb = opts[pick((c, "tile", "GB", d),
                           [i for i, v in enumerate(opts) if (ref // (rf * pe)) % v == 0])]
            tiles["RF"][d], tiles["PE"][d], tiles["GB"][d] = rf, pe, gb
        chunks.append(ChunkMapping(loop_order=orders, tiles=tiles, noc=noc))
    return AcceleratorConfig(chunks=tuple(chunks), max_pes=max_pes, mode=mode,
                             chunk_of_layer=tuple(assign))


def enumerate_configs(space: AcceleratorSpace, net: NetworkDesc) -> Iterator[AcceleratorConfig]:
    """Every config reachable by ``walk_config``, each exactly once."""
    stack: list[list[int]] = [[]]
    while stack:
        prefix = stack.pop()
        trace: list[tuple[int, list[int]]] = []

        def choose(key, allowed, prefix=prefix, trace=trace):
            i = len(trace)
            p = prefix[i] if i < len(prefix) else allowed[0]
            trace.append((p, allowed))
            return p

        cfg = walk_config(space, net, choose)
        yield cfg
        for i in range(len(trace) - 1, len(prefix) - 1, -1):
            p, allowed = trace[i]
            base = [t[0] for t in trace[:i]]
            for alt in reversed(allowed[allowed.index(p) + 1:]):
                stack.append(base + [alt])


# ---------------------------------------------------------------- per-layer mapping

@dataclass(frozen=True)
class LayerMapping:
    """Effective trip counts of one layer under one chunk mapping."""

    layer: ConvLayerDesc
    trips: dict[str, dict[str, int]]  # level in DRAM/GB/PE/RF -> dim -> trip count
    loop_order: dict[str, tuple[str, ...]]
    noc: NocChoice

    def temporal_loops(self) -> list[tuple[str, str, int]]:
        """(level, dim, trip) of every temporal loop above the PE array, outermost first."""
        out = []
        for lvl in ("DRAM", "GB"):
            for d in self.loop_order[lvl]:
                out.append((lvl, d, self.trips[lvl][d]))
        return out

    def extents(self, level: str) -> dict[str, int]:
        """Per-dimension extent of the tile resident at ``level``.

        ``level`` is one of RF (one PE), PE (union over the array), GB, DRAM.
        """
        inner = {"RF": ("RF",), "PE": ("PE", "RF"), "GB": ("GB", "PE", "RF"),
                 "DRAM": ("DRAM", "GB", "PE", "RF")}[level]
        return {d: math.prod(self.trips[lv][d] for lv in inner) for d in DIMS}


def resolve_mapping(layer: ConvLayerDesc, chunk: ChunkMapping) -> LayerMapping:
    dims = layer.loop_dims()
    trips = {lvl: {} for lvl in ("DRAM", "GB", "PE", "RF")}
    for d in DIMS:
        n = dims[d]
        rf = math.gcd(chunk.tiles["RF"][d], n)
        pe = math.gcd(chunk.tiles["PE"][d], n // rf)
        gb = math.gcd(chunk.tiles["GB"][d], n // (rf * pe))
        trips["RF"][d], trips["PE"][d], trips["GB"][d] = rf, pe, gb
        trips["DRAM"][d] = n // (rf * pe * gb)
    return LayerMapping(layer=layer, trips=trips, loop_order=dict(chunk.loop_order), noc=chunk.noc)


def tensor_dims(layer: ConvLayerDesc) -> dict[str, frozenset[str]]:
    """Loop dimensions each tensor is indexed by."""
    ifmap = {"C", "X", "Y", "R", "S"}
    if layer.group_count > 1:
        # output channel selects the input-channel group
        ifmap.add("K")
    return {"weights": frozenset({"R", "S", "C", "K"}), "ifmap": frozenset(ifmap),
            "ofmap": frozenset({"K", "X", "Y"})}


def tile_footprint(layer: ConvLayerDesc, tensor: str, ext: dict[str, int]) -> int:
    if tensor == "weights":
        return ext["R"] * ext["S"] * ext["C"] * ext["K"]
    if tensor == "ofmap":
        return ext["K"] * ext["X"] * ext["Y"]
    chans = ext["C"] * (ext["K"] if layer.group_count > 1 else 1)
    rows = (ext["Y"] - 1) * layer.stride + ext["R"]
    cols = (ext["X"] - 1) * layer.stride + ext["S"]
    return chans * rows * cols


# ---------------------------------------------------------------- validation

HARD_KINDS = ("tile-product", "tile-chain", "noc-misuse", "pe-overflow", "gb-capacity",
              "rf-capacity", "dsp-budget", "area-budget", "chunk-assignment")


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    overflow_ratio: float = 0.0


@dataclass
class LegalityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def legal(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]

    def overflow(self) -> float:
        """Summed overflow ratio of the capacity-style violations."""
        return sum(v.overflow_ratio for v in self.violations)

    def to_list(self) -> list[dict]:
        return [{"kind": v.kind, "message": v.message, "overflow_ratio": v.overflow_ratio}
                for v in self.violations]


@dataclass(frozen=True)
class Constraints:
    dsp_limit: int | None = None
    area_limit: float | None = None


def capacity_need(mapping: LayerMapping, level: str) -> int:
    """Double-buffered words needed at GB (whole tile) or RF (one PE)."""
    ext = mapping.extents(level)
    return 2 * sum(tile_footprint(mapping.layer, t, ext) for t in TENSORS)


def dsp_used(config: AcceleratorConfig, tables) -> int:
    return config.max_pes * tables.dsp_per_pe


def area_used(config: AcceleratorConfig, tables) -> float:
    words = tables.gb_capacity + config.max_pes * tables.rf_capacity
    return config.max_pes * tables.area_per_pe + words * tables.area_per_word


def validate(config: AcceleratorConfig, net: NetworkDesc, space: AcceleratorSpace | None,
             tables, constraints: Constraints | None = None) -> LegalityReport:
    report = LegalityReport()
    add = report.violations.append
    n_chunks = len(config.chunks)

    if config.mode == PIPELINE:
        if len(config.chunk_of_layer) < len(net.layers):
            add(Violation("chunk-assignment", "missing chunk assignment for some layers"))
            return report
        for i, layer in enumerate(net.layers):
            c = config.chunk_of_layer[i]
            if not 0 <= c < n_chunks:
                add(Violation("chunk-assignment", f"layer {i} assigned to chunk {c}"))
                return report
            if space is not None and c not in space.chunks_for(layer.depthwise):
                add(Violation("chunk-assignment",
                              f"layer {i} ({'depthwise' if layer.depthwise else 'standard'}) "
                              f"in chunk {c}"))
        pe_caps, gb_shares = chunk_pe_budgets(config.max_pes, config.chunk_of_layer[:len(net)],
                                              net, n_chunks)
        used = set(config.chunk_of_layer[:len(net)])
    else:
        pe_caps, gb_shares = [config.max_pes], [1.0]
        used = {0}

    for c in sorted(used):
        chunk = config.chunks[c]
        for d in DIMS:
            if chunk.tiles["PE"][d] > 1 and d not in chunk.noc.dims:
                add(Violation("noc-misuse", f"chunk {c}: PE tile on {d} under {chunk.noc.name}"))
            if space is not None:
                chain = chunk.tiles["RF"][d] * chunk.tiles["PE"][d] * chunk.tiles["GB"][d]
                if space.ref_dims[d] % chain:
                    add(Violation("tile-chain",
                                  f"chunk {c}: {d} tiles multiply to {chain}, "
                                  f"not a divisor of {space.ref_dims[d]}"))
        pe = chunk.pe_product()
        if pe > pe_caps[c]:
            add(Violation("pe-overflow", f"PE overflow {pe} > {pe_caps[c]}"
                          + (f" (chunk {c})" if config.mode == PIPELINE else ""),
                          pe / max(pe_caps[c], 1) - 1.0))

    gb_need = {c: 0 for c in used}
    rf_need = 0
    for i, layer in enumerate(net.layers):
        c = config.chunk_index(i)
        m = resolve_mapping(layer, config.chunks[c])
        dims = layer.loop_dims()
        for d in DIMS:
            if math.prod(m.trips[lv][d] for lv in ("DRAM", "GB", "PE", "RF")) != dims[d]:
                add(Violation("tile-product", f"layer {i}: {d} tiles do not multiply to {dims[d]}"))
        gb_need[c] = max(gb_need[c], capacity_need(m, "GB"))
        rf_need = max(rf_need, capacity_need(m, "RF"))

    for c, need in gb_need.items():
        cap = tables.gb_capacity * gb_shares[c]
        if need > cap:
            add(Violation("gb-capacity", f"GB needs {need} words, chunk {c} has {cap:g}",
                          need / cap - 1.0))
    if rf_need > tables.rf_capacity:
        add(Violation("rf-capacity", f"RF needs {rf_need} words, has {tables.rf_capacity}",
                      rf_need / tables.rf_capacity - 1.0))

    if constraints is not None:
        if constraints.dsp_limit is not None:
            dsp = dsp_used(config, tables)
            if dsp > constraints.dsp_limit:
                add(Violation("dsp-budget", f"DSP {dsp} > {constraints.dsp_limit}",
                              dsp / constraints.dsp_limit - 1.0))
        if constraints.area_limit is not None:
            area = area_used(config, tables)
            if area > constraints.area_limit:
                add(Violation("area-budget", f"area {area:g} > {constraints.area_limit:g}",
                              area / constraints.area_limit - 1.0))
    return report


def reference_dims(layers: Sequence[ConvLayerDesc]) -> dict[str, int]:
    return _lcm_dims(layers)
