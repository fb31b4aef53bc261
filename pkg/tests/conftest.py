import sys

import numpy as np
import pytest

from netaccel.costmodel import HardwareCostTables
from netaccel.gads import MULTICYCLE, AcceleratorSpace, ChunkMapping, AcceleratorConfig, NocChoice
from netaccel.workload import DIMS, ConvLayerDesc, NetworkDesc


def mapping(tiles=None, orders=None, noc=NocChoice.OutputParallel):
    """ChunkMapping from sparse tile/order overrides, everything else 1 / canonical."""
    t = {lvl: {d: 1 for d in DIMS} for lvl in ("GB", "PE", "RF")}
    for lvl, per in (tiles or {}).items():
        t[lvl].update(per)
    o = {lvl: DIMS for lvl in ("DRAM", "GB", "RF")}
    o.update({k: tuple(v) for k, v in (orders or {}).items()})
    return ChunkMapping(loop_order=o, tiles=t, noc=noc)


def single(tiles=None, orders=None, noc=NocChoice.OutputParallel, max_pes=64):
    return AcceleratorConfig(chunks=(mapping(tiles, orders, noc),), max_pes=max_pes)


@pytest.fixture
def tables():
    return HardwareCostTables()


@pytest.fixture
def big_tables():
    return HardwareCostTables(gb_capacity=10 ** 9, rf_capacity=10 ** 9)


@pytest.fixture
def small_layer():
    return ConvLayerDesc(x=2, y=2, r=1, s=1, c=2, k=2)


def small_space(layers, **kw):
    kw.setdefault("pipeline_options", (MULTICYCLE,))
    kw.setdefault("pe_count_options", (4,))
    return AcceleratorSpace.for_layers(layers, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
