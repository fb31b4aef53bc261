"""Joint network/accelerator search driver and its two baselines.

Per epoch: draw M networks from the current architecture distribution, run
DAS on each to get M accelerators, price every candidate operator on each of
them and average (the per-operator cost table), then run one epoch of
interleaved supernet-weight and architecture updates with the table as the
layer-wise hardware loss. After the last epoch the argmax network gets its
own accelerator search.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .costmodel import CostReport, HardwareCostTables, isolated_cost
from .das import DasConfig, DasResult, GammaParams, NoLegalConfigError, das_optimize, sample_config
from .dns import (
    Adam, SGDMomentum, SuperNet, SupernetSpec, SyntheticTask, derive_network, loss_and_grads,
    relaxed_weights, sample_networks, train_fixed, train_step_weights, update_alpha,
)
from .gads import AcceleratorConfig, AcceleratorSpace, Constraints, validate
from .workload import NetworkDesc

log = logging.getLogger(__name__)

DEFAULT_M = 10
EPOCH_TRACE_COLUMNS = ("epoch", "val_loss", "hw_loss", "mean_das_cost", "incumbent")


@dataclass(frozen=True)
class CoSearchConfig:
    max_epoch: int = 8
    M: int = DEFAULT_M
    lam: float | None = None  # None: balance lam * hw loss against val loss at the first step
    objective: str = "fps"
    constraints: Constraints = field(default_factory=Constraints)
    das: DasConfig = field(default_factory=DasConfig)
    final_das_steps: int | None = None  # default: das.steps
    seed: int = 0
    dns_steps_per_epoch: int = 40
    batch_size: int = 64
    weight_lr: float = 0.05
    alpha_lr: float = 0.05
    temp_init: float = 3.0
    temp_decay: float = 0.92
    sampling: str = "relaxed"  # or "hard" for the supernet forward
    warm_start: bool = True
    eval_steps: int = 300  # standalone training steps for proxy accuracy
    workers: int = 1

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.max_epoch < 1:
            raise ValueError("max_epoch must be >= 1")

    def temperature(self, epoch: int) -> float:
        return self.temp_init * self.temp_decay ** epoch

    def hw_evaluations(self) -> int:
        final = self.final_das_steps if self.final_das_steps is not None else self.das.steps
        return self.max_epoch * self.M * self.das.steps + final


@dataclass
class CoSearchResult:
    choices: list[int]
    blocks: list
    network: NetworkDesc
    config: AcceleratorConfig
    report: CostReport
    cost: float
    accuracy: float
    lam: float
    trace: list[dict]
    evaluations: int

    def to_dict(self) -> dict:
        return {"choices": self.choices, "blocks": [b.to_dict() for b in self.blocks],
                "network": self.network.to_dict(), "accelerator": self.config.to_dict(),
                "cost": self.cost, "accuracy": self.accuracy, "lambda": self.lam,
                "evaluations": self.evaluations, "report": self.report.to_dict()}


# ---------------------------------------------------------------- per-operator cost

def _block_chunks(choices: list[int], spec: SupernetSpec, config: AcceleratorConfig,
                  l: int) -> list[int]:
    """Chunks an operator at block ``l`` runs on, borrowed from the sampled network."""
    n_sub = 3
    live = [b for b, k in enumerate(choices) if not spec.candidates[k].is_skip]
    if not live:
        return [0] * n_sub
    anchor = min(live, key=lambda b: (abs(b - l), b))
    pos = live.index(anchor) * n_sub
    return [config.chunk_index(pos + j) for j in range(n_sub)]


def op_cost(spec: SupernetSpec, l: int, k: int, config: AcceleratorConfig,
            tables: HardwareCostTables, objective: str,
            sample_choices: list[int] | None = None) -> float:
    """Hardware cost of candidate k at block l running alone on ``config``."""
    layers = spec.op_layers(l, k)
    if not layers:
        return 0.0
    if sample_choices is None:
        chunks = [config.chunk_index(0)] * len(layers)
    else:
        chunks = _block_chunks(sample_choices, spec, config, l)
    return isolated_cost(layers, chunks, config, tables).objective(objective)


def expected_op_cost(sampled: list[list[int]], hw_stars: list[AcceleratorConfig],
                     spec: SupernetSpec, tables: HardwareCostTables,
                     objective: str = "fps") -> np.ndarray:
    """L x K table of each operator's cost averaged over the M searched accelerators."""
    if len(sampled) != len(hw_stars) or not hw_stars:
        raise ValueError(f"need matching non-empty lists, got {len(sampled)} and {len(hw_stars)}")
    L, K = spec.shape
    table = np.zeros((L, K))
    for choices, hw in zip(sampled, hw_stars):
        for l in range(L):
            for k in range(K):
                table[l, k] += op_cost(spec, l, k, hw, tables, objective, choices)
    return table / len(hw_stars)


def mac_table(spec: SupernetSpec) -> np.ndarray:
    L, K = spec.shape
    return np.array([[float(spec.op_macs(l, k)) for k in range(K)] for l in range(L)])


# ---------------------------------------------------------------- DNS epochs

class _Dns:
    """Supernet, architecture logits and their optimizers for one search run."""

    def __init__(self, spec: SupernetSpec, cfg: CoSearchConfig, data):
        self.spec = spec
        self.cfg = cfg
        self.data = data
        self.net = SuperNet.create(spec, cfg.seed)
        self.alpha = np.zeros(spec.shape)
        self.mask = spec.mask()
        self.w_opt = SGDMomentum(lr=cfg.weight_lr)
        self.a_opt = Adam(lr=cfg.alpha_lr)
        self.lam = cfg.lam
        self.hw_scale: float | None = None
        self.step = 0

    def normalize(self, table: np.ndarray) -> np.ndarray:
        if self.hw_scale is None:
            live = table[self.mask & (table > 0)]
            self.hw_scale = float(live.mean()) if live.size else 1.0
        return table / self.hw_scale

    def epoch(self, epoch: int, table: np.ndarray) -> tuple[float, float]:
        cfg = self.cfg
        temp = cfg.temperature(epoch)
        rng = np.random.default_rng([cfg.seed, 7, epoch])
        xtr, ytr = self.data["train"]
        xv, yv = self.data["val"]
        vals, hws = [], []
        for _ in range(cfg.dns_steps_per_epoch):
            noise = rng.gumbel(size=self.spec.shape)
            w = relaxed_weights(self.alpha, temp, noise, self.mask, cfg.sampling)
            idx = rng.integers(0, len(xtr), size=cfg.batch_size)
            train_step_weights(self.net, (xtr[idx], ytr[idx]), self.w_opt, w)

            noise = rng.gumbel(size=self.spec.shape)
            idx = rng.integers(0, len(xv), size=cfg.batch_size)
            batch = (xv[idx], yv[idx])
            if self.lam is None:
                w = relaxed_weights(self.alpha, temp, noise, self.mask)
                val0 = loss_and_grads(self.net, *batch, w, need_weight_grads=False)[0]
                hw0 = float((w * table).sum())
                self.lam = val0 / hw0 if hw0 > 0 else 0.0
                log.info("auto-balanced lambda = %.6g", self.lam)
            self.alpha, val, hw = update_alpha(self.net, self.alpha, batch, table, self.lam,
                                               self.a_opt, temp, noise)
            vals.append(val)
            hws.append(hw)
            self.step += 1
        return float(np.mean(vals)), float(np.mean(hws))


def _final_das(net: NetworkDesc, space: AcceleratorSpace, cfg: CoSearchConfig,
               tables: HardwareCostTables, gamma: GammaParams | None) -> DasResult:
    steps = cfg.final_das_steps if cfg.final_das_steps is not None else cfg.das.steps
    das_cfg = replace(cfg.das, steps=steps, rng_seed=_seed(cfg.seed, 99, 0, 0))
    res = das_optimize(net, space, das_cfg, tables, objective=cfg.objective,
                       constraints=cfg.constraints, gamma=gamma)
    legality = validate(res.config, net, space, tables, cfg.constraints)
    assert legality.legal, legality.to_list()
    return res


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _das_job(args):
    net, space, das_cfg, tables, objective, constraints, gamma = args
    try:
        return das_optimize(net, space, das_cfg, tables, objective=objective,
                            constraints=constraints, gamma=gamma)
    except NoLegalConfigError:
        return None


def _mean_gamma(results: list[DasResult]) -> GammaParams:
    keys = results[0].gamma.logits
    return GammaParams({k: np.mean([r.gamma.logits[k] for r in results], axis=0) for k in keys})


def _finish(dns: _Dns, space, cfg, tables, trace, gamma, evaluations) -> CoSearchResult:
    choices, blocks, net = derive_network(dns.alpha, dns.spec)
    final = _final_das(net, space, cfg, tables, gamma)
    acc = train_fixed(dns.spec, choices, dns.data, steps=cfg.eval_steps, seed=cfg.seed)
    return CoSearchResult(choices=choices, blocks=blocks, network=net, config=final.config,
                          report=final.report, cost=final.cost, accuracy=acc,
                          lam=dns.lam if dns.lam is not None else 0.0, trace=trace,
                          evaluations=evaluations + final.evaluations)


def run(cfg: CoSearchConfig, spec: SupernetSpec, space: AcceleratorSpace,
        tables: HardwareCostTables, task: SyntheticTask) -> CoSearchResult:
    dns = _Dns(spec, cfg, task.generate())
    gamma: GammaParams | None = None
    table = None
    trace = []
    evaluations = 0
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(cfg.max_epoch):
            rng = np.random.default_rng([cfg.seed, 3, epoch])
            samples = [(c, n) for c, n in sample_networks(dns.alpha, spec, cfg.M, rng) if len(n)]
            jobs = [(n, space, replace(cfg.das, rng_seed=_seed(cfg.seed, 5, epoch, m)), tables,
                     cfg.objective, cfg.constraints, gamma if cfg.warm_start else None)
                    for m, (_, n) in enumerate(samples)]
            results = list(pool.map(_das_job, jobs)) if pool else [_das_job(j) for j in jobs]
            evaluations += cfg.das.steps * len(jobs)
            done = [(c, r) for (c, _), r in zip(samples, results) if r is not None]
            if done:
                raw = expected_op_cost([c for c, _ in done], [r.config for _, r in done], spec,
                                       tables, cfg.objective)
                table = dns.normalize(raw)
                gamma = _mean_gamma([r for _, r in done])
            elif table is None:
                raise NoLegalConfigError(f"epoch {epoch}: no sampled network got a legal accelerator")
            val, hw = dns.epoch(epoch, table)
            costs = [r.cost for _, r in done]
            trace.append({"epoch": epoch, "val_loss": val,
                          "hw_loss": hw, "mean_das_cost": float(np.mean(costs)) if costs else math.nan,
                          "incumbent": float(min(costs)) if costs else math.nan})
    finally:
        if pool:
            pool.shutdown()
    return _finish(dns, space, cfg, tables, trace, gamma, evaluations)


def run_sequential_baseline(cfg: CoSearchConfig, spec: SupernetSpec, space: AcceleratorSpace,
                            tables: HardwareCostTables, task: SyntheticTask) -> CoSearchResult:
    """Network search priced by MAC count alone, then one accelerator search."""
    dns = _Dns(spec, cfg, task.generate())
    table = dns.normalize(mac_table(spec))
    trace = []
    for epoch in range(cfg.max_epoch):
        val, hw = dns.epoch(epoch, table)
        trace.append({"epoch": epoch, "val_loss": val,
                      "hw_loss": hw, "mean_das_cost": math.nan, "incumbent": math.nan})
    return _finish(dns, space, cfg, tables, trace, None, 0)


# ---------------------------------------------------------------- random search

@dataclass
class RandomPoint:
    choices: list[int]
    accuracy: float
    cost: float
    config: AcceleratorConfig | None

    def to_dict(self) -> dict:
        return {"choices": self.choices, "accuracy": self.accuracy, "cost": self.cost,
                "accelerator": self.config.to_dict() if self.config else None}


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """(accuracy, cost): a is no worse on both and strictly better on one."""
    return a[0] >= b[0] and a[1] <= b[1] and (a[0] > b[0] or a[1] < b[1])


def pareto_front(points: list[RandomPoint]) -> list[RandomPoint]:
    return [p for p in points
            if not any(dominates((q.accuracy, q.cost), (p.accuracy, p.cost)) for q in points)]


def run_random_baseline(n_nets: int, n_accels_per_net: int, seed: int, spec: SupernetSpec,
                        space: AcceleratorSpace, tables: HardwareCostTables, task: SyntheticTask,
                        objective: str = "fps", constraints: Constraints | None = None,
                        eval_steps: int = 300) -> tuple[list[RandomPoint], list[RandomPoint]]:
    """Uniform network draws, each paired with its best of ``n_accels_per_net`` uniform accelerators.

    Returns all points and the accuracy/cost Pareto front.
    """
    from .das import hardware_evaluator

    if n_nets < 1 or n_accels_per_net < 1:
        raise ValueError("counts must be >= 1")
    data = task.generate()
    rng = np.random.default_rng([seed, 11])
    mask = spec.mask()
    acc_cache: dict[tuple, float] = {}
    points = []
    for i in range(n_nets):
        choices = [int(rng.choice(np.flatnonzero(row))) for row in mask]
        net = spec.network(choices)
        key = tuple(choices)
        if key not in acc_cache:
            acc_cache[key] = train_fixed(spec, choices, data, steps=eval_steps, seed=seed)
        if not len(net):
            points.append(RandomPoint(choices, acc_cache[key], 0.0, None))
            continue
        evaluate = hardware_evaluator(net, space, tables, objective, constraints)
        gamma = GammaParams.zeros(space)
        best = None
        for j in range(n_accels_per_net):
            rec = sample_config(space, net, gamma, 1.0, np.random.default_rng([seed, 13, i, j]))
            ev = evaluate(rec.config)
            if ev.legal and (best is None or ev.cost < best[0]):
                best = (ev.cost, rec.config)
        if best is not None:
            points.append(RandomPoint(choices, acc_cache[key], best[0], best[1]))
    return points, pareto_front(points)
