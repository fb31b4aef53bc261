"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import json
import math
import statistics
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from netaccel.config import load_run_config
from netaccel.cosearch import dominates, run, run_random_baseline, run_sequential_baseline
from netaccel.costmodel import HardwareCostTables
from netaccel.das import (
    DasConfig, GammaParams, das_optimize, hardware_evaluator, sample_config, surrogate_grad,
    surrogate_loss,
)
from netaccel.dns import (
    LayerSpec, SuperNet, SupernetSpec, alpha_gradient, loss_and_grads, relaxed_weights,
)
from netaccel.gads import (
    DIMS, MULTICYCLE, AcceleratorSpace, NocChoice, enumerate_configs, resolve_mapping, validate,
)
from netaccel.oracle import equivalence_sweep
from netaccel.workload import BlockChoice, ConvLayerDesc, NetworkDesc, expand_block

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(RESULTS[n])


def rel_err(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


# ---------------------------------------------------------------- 1

def test_c1_oracle_equivalence():
    cfg = load_run_config(CONFIGS / "default.json")
    sec = cfg.raw["oracle_check"]
    layers = [ConvLayerDesc.from_dict(x) for x in sec["layers"]]
    assert all(max(l.loop_dims().values()) <= 4 for l in layers)
    t = time.time()
    res = equivalence_sweep(layers, cfg.tables, max_tile_options=sec["max_tile_options"],
                            pe_count_options=tuple(sec["pe_count_options"]),
                            order_variants=sec["order_variants"])
    dt = time.time() - t
    ok = res.passed and res.checked >= 500 and dt < 300
    record(1, ok, f"{res.checked} legal configs exact, mismatch={res.mismatch is not None}, "
                  f"{dt:.0f}s")
    assert ok


# ---------------------------------------------------------------- 2

def test_c2_tile_products_and_valid_results():
    cfg = load_run_config(CONFIGS / "benchmark.json")
    spec, space = cfg.spec, cfg.search_space()
    rng = np.random.default_rng(2)
    mask = spec.mask()
    bad = 0
    for i in range(1000):
        choices = [int(rng.choice(np.flatnonzero(row))) for row in mask]
        net = spec.network(choices)
        if not len(net):
            choices = [0] * len(choices)
            net = spec.network(choices)
        config = sample_config(space, net, GammaParams.zeros(space), 1.0, rng).config
        for j, layer in enumerate(net.layers):
            m = resolve_mapping(layer, config.chunks[config.chunk_index(j)])
            dims = layer.loop_dims()
            bad += any(math.prod(m.trips[lv][d] for lv in m.trips) != dims[d] for d in DIMS)
        bad += any(v.kind == "tile-product" for v in validate(config, net, space, cfg.tables).violations)
    smoke = load_run_config(CONFIGS / "smoke.json")
    res = run(smoke.cosearch, smoke.spec, smoke.search_space(), smoke.tables, smoke.task)
    legal = validate(res.config, res.network, smoke.search_space(), smoke.tables,
                     smoke.constraints).legal
    ok = bad == 0 and legal
    record(2, ok, f"1000 sampled configs, {bad} tile-product failures; search result legal={legal}")
    assert ok


# ---------------------------------------------------------------- 3

def _das_fd(space, net, seed, h=1e-5):
    rng = np.random.default_rng(seed)
    gamma = GammaParams({k: rng.normal(size=v.shape)
                         for k, v in GammaParams.zeros(space).logits.items()})
    temp, cost = rng.uniform(0.5, 3.0), rng.uniform(0.5, 5.0)
    rec = sample_config(space, net, gamma, temp, rng)
    grads = surrogate_grad(gamma, rec.decisions, temp, cost)
    an, fd = [], []
    for d in rec.decisions:
        for j in d.allowed:
            idx = (d.row, j) if d.row is not None else (j,)
            up, down = gamma.copy(), gamma.copy()
            up.logits[d.slot][idx] += h
            down.logits[d.slot][idx] -= h
            fd.append((surrogate_loss(up, rec.decisions, temp, cost)
                       - surrogate_loss(down, rec.decisions, temp, cost)) / (2 * h))
            an.append(grads[d.slot][idx])
    return rel_err(an, fd)


def test_c3_das_gradient():
    layers = tuple(expand_block(BlockChoice(3, 2), 4, 8, 4, 1))
    space = AcceleratorSpace.for_layers(layers, max_tile_options=3)
    errs = [_das_fd(space, NetworkDesc(layers), s) for s in range(50)]
    ok = max(errs) < 1e-4
    record(3, ok, f"50 instances, worst relative error {max(errs):.2e}")
    assert ok


# ---------------------------------------------------------------- 4

C4_STEPS = 100


def test_c4_das_top_percentile():
    layer = ConvLayerDesc(x=4, y=4, r=1, s=1, c=4, k=4)
    net = NetworkDesc((layer,))
    space = AcceleratorSpace.for_layers([layer], max_tile_options=3, pe_count_options=(16,),
                                        pipeline_options=(MULTICYCLE,), searchable_orders=(),
                                        noc_options=tuple(NocChoice)[:2])
    tables = HardwareCostTables()
    evaluate = hardware_evaluator(net, space, tables, "edp", None)
    costs = np.sort([e.cost for e in map(evaluate, enumerate_configs(space, net)) if e.legal])
    assert len(costs) <= 10 ** 4
    threshold = costs[math.ceil(0.01 * len(costs)) - 1]
    hits, slowest = 0, 0.0
    for seed in range(20):
        t = time.time()
        res = das_optimize(net, space, DasConfig(steps=C4_STEPS, rng_seed=seed), tables,
                           objective="edp")
        slowest = max(slowest, time.time() - t)
        hits += res.cost <= threshold
    ok = hits >= 18 and slowest < 60
    record(4, ok, f"{hits}/20 seeds in top 1% of {len(costs)} legal configs, "
                  f"slowest run {slowest:.1f}s")
    assert ok


# ---------------------------------------------------------------- 5

def _dns_fd(seed, h=1e-4):
    rng = np.random.default_rng(seed)
    n_layers, width = 1 + seed % 3, 4 + 2 * (seed % 3)
    spec = SupernetSpec(layers=(LayerSpec(8, 8, 4),) * n_layers,
                        candidates=(BlockChoice(3, 1), BlockChoice(5, 2), BlockChoice.skip()),
                        width=width)
    net = SuperNet.create(spec, seed)
    x, y = rng.normal(size=(8, spec.input_dim)), rng.integers(0, spec.num_classes, 8)
    alpha, noise = rng.normal(size=spec.shape), rng.gumbel(size=spec.shape)
    table, lam, temp = rng.uniform(0, 2, spec.shape), 0.5, 1.2

    wts = relaxed_weights(alpha, temp, noise, spec.mask())
    _, grads, _, _ = loss_and_grads(net, x, y, wts)
    an, fd = [], []
    for key, w in net.weights.items():
        if key not in grads:
            continue
        for i in np.ndindex(w.shape):
            old = w[i]
            w[i] = old + h
            up = loss_and_grads(net, x, y, wts, need_weight_grads=False)[0]
            w[i] = old - h
            down = loss_and_grads(net, x, y, wts, need_weight_grads=False)[0]
            w[i] = old
            fd.append((up - down) / (2 * h))
            an.append(grads[key][i])
    omega = rel_err(an, fd)

    _, _, g = alpha_gradient(net, alpha, (x, y), table, lam, temp, noise)
    fa = np.zeros_like(alpha)
    for i in np.ndindex(alpha.shape):
        vals = []
        for sgn in (1, -1):
            a = alpha.copy()
            a[i] += sgn * h
            val, hw, _ = alpha_gradient(net, a, (x, y), table, lam, temp, noise)
            vals.append(val + lam * hw)
        fa[i] = (vals[0] - vals[1]) / (2 * h)
    return omega, rel_err(g, fa)


def test_c5_dns_gradients():
    errs = [_dns_fd(s) for s in range(6)]
    w_err, a_err = max(e[0] for e in errs), max(e[1] for e in errs)
    ok = w_err < 1e-5 and a_err < 1e-5
    record(5, ok, f"weights {w_err:.2e}, alpha {a_err:.2e} over 6 supernets")
    assert ok


# ---------------------------------------------------------------- 6

def test_c6_cosearch_vs_random():
    cfg = load_run_config(CONFIGS / "benchmark.json")
    space = cfg.search_space()
    wins, t0 = 0, time.time()
    for seed in range(10):
        c = cfg.with_seed(seed)
        res = run(c.cosearch, c.spec, space, c.tables, c.task)
        n_nets = max(1, res.evaluations // c.n_accels_per_net)
        points, _ = run_random_baseline(n_nets, c.n_accels_per_net, seed, c.spec, space, c.tables,
                                        c.task, c.objective, c.constraints, c.cosearch.eval_steps)
        me = (res.accuracy, res.cost)
        wins += not any(dominates((p.accuracy, p.cost), me) for p in points)
    dt = time.time() - t0
    ok = wins >= 8 and dt < 1800
    record(6, ok, f"not dominated in {wins}/10 seeds, {dt:.0f}s")
    assert ok


# ---------------------------------------------------------------- 7

def test_c7_constructed_instance():
    cfg = load_run_config(CONFIGS / "constructed.json")
    spec = cfg.spec
    assert len({spec.op_macs(0, k) for k in range(len(spec.candidates))}) == 1
    space = cfg.search_space()
    co, seq = [], []
    for seed in range(10):
        c = cfg.with_seed(seed)
        co.append(run(c.cosearch, spec, space, c.tables, c.task))
        seq.append(run_sequential_baseline(c.cosearch, spec, space, c.tables, c.task))
    cost_co = statistics.median(r.cost for r in co)
    cost_seq = statistics.median(r.cost for r in seq)
    acc_co = statistics.median(r.accuracy for r in co)
    acc_seq = statistics.median(r.accuracy for r in seq)
    ok = cost_co < cost_seq and acc_co >= acc_seq
    record(7, ok, f"median cost {cost_co:.6g} vs {cost_seq:.6g}, "
                  f"median accuracy {acc_co:.4f} vs {acc_seq:.4f}")
    assert ok


# ---------------------------------------------------------------- 8

def _cli_outputs(out: Path) -> dict[str, bytes]:
    smoke = str(CONFIGS / "smoke.json")
    for cmd in ("das", "cosearch", "seq", "random"):
        subprocess.run([sys.executable, "-m", "netaccel.cli", cmd, smoke, "--out", str(out)],
                       check=True, capture_output=True)
    data = ROOT / "tests" / "data"
    subprocess.run([sys.executable, "-m", "netaccel.cli", "estimate",
                    str(data / "golden_network.json"), str(data / "golden_accel.json"),
                    "--out", str(out)], check=True, capture_output=True)
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_c8_byte_identical(tmp_path):
    a, b = _cli_outputs(tmp_path / "a"), _cli_outputs(tmp_path / "b")
    same = [k for k in a if a[k] == b.get(k)]
    ok = set(a) == set(b) and len(same) == len(a) and len(a) >= 10
    record(8, ok, f"{len(same)}/{len(a)} JSON/CSV files identical across separate processes")
    assert ok


# ---------------------------------------------------------------- 9

def test_c9_default_hyperparameters():
    text = (CONFIGS / "default.json").read_text()
    cs = json.loads(text)["cosearch"]
    cfg = load_run_config(CONFIGS / "default.json").cosearch
    found = all(s in text for s in ('"M": 10', '"temp_init": 3', '"temp_decay": 0.92'))
    ok = (found and (cs["M"], cs["temp_init"], cs["temp_decay"]) == (10, 3, 0.92)
          and (cfg.M, cfg.temp_init, cfg.temp_decay) == (10, 3.0, 0.92))
    record(9, ok, f"M={cs['M']} temp_init={cs['temp_init']} temp_decay={cs['temp_decay']}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
