"""Differentiable accelerator search.

Every categorical decision of the design space is drawn by Gumbel-max from
its logits; the same noise gives a softmax relaxation whose entry for the
taken option is that decision's soft probability. The search minimizes

    (sum of soft probabilities of the taken options) * hw_cost

with the cost held constant, so each step pushes down the logits of the
options it just paid for, in proportion to what they cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .costmodel import CostReport, HardwareCostTables, network_cost
from .gads import (
    AcceleratorConfig, AcceleratorSpace, Constraints, ShapeMismatchError, validate,
    walk_config,
)
from .workload import NetworkDesc

RAW_LEARNING_RATE = 1e-9
DEFAULT_TEMP_INIT = 3.0
DEFAULT_TEMP_DECAY = 0.92


class EmptyOptionsError(ValueError):
    pass


class NoLegalConfigError(RuntimeError):
    pass


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class DasConfig:
    steps: int = 300
    learning_rate: float = 0.05
    # "normalized": cost divided by the first sample's cost; "raw": cost as is
    lr_mode: str = "normalized"
    momentum: float = 0.9
    temp_init: float = DEFAULT_TEMP_INIT
    temp_decay: float = DEFAULT_TEMP_DECAY
    steps_per_epoch: int = 20
    rng_seed: int = 0
    penalty_multiplier: float = 10.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 < self.temp_decay <= 1:
            raise ValueError("temp_decay must be in (0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.temp_init <= 0:
            raise ValueError("temp_init must be > 0")
        if self.lr_mode not in ("normalized", "raw"):
            raise ValueError(f"unknown lr_mode {self.lr_mode!r}")

    def temperature(self, step: int, epoch_offset: int = 0) -> float:
        return self.temp_init * self.temp_decay ** (epoch_offset + step // self.steps_per_epoch)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------- sampling

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def gumbel_softmax_sample(logits, temp: float, rng: np.random.Generator,
                          noise: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Hard Gumbel-max choice and the softmax relaxation under the same noise.

    Entries of ``logits`` equal to -inf are unavailable and get probability 0.
    """
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise EmptyOptionsError("no options to sample from")
    if temp <= 0:
        raise ValueError("temperature must be > 0")
    if noise is None:
        noise = rng.gumbel(size=logits.shape)
    g = logits + noise
    choice = int(np.argmax(g))
    soft = np.zeros_like(g)
    ok = np.isfinite(logits)
    soft[ok] = softmax(g[ok] / temp)
    return choice, soft


def sample_loop_order(logit_matrix, temp: float,
                      rng: np.random.Generator) -> tuple[list[int], list[float]]:
    """Sequential draw without replacement; row t scores the item placed at position t."""
    logit_matrix = np.asarray(logit_matrix, dtype=float)
    n = logit_matrix.shape[0]
    remaining = np.ones(n, dtype=bool)
    order, probs = [], []
    for t in range(n):
        row = np.where(remaining, logit_matrix[t], -np.inf)
        c, soft = gumbel_softmax_sample(row, temp, rng)
        order.append(c)
        probs.append(float(soft[c]))
        remaining[c] = False
    return order, probs


@dataclass
class Decision:
    slot: tuple  # key into GammaParams
    row: int | None  # loop-order position, None for vector slots
    allowed: np.ndarray  # option indices still legal
    noise: np.ndarray  # Gumbel noise over ``allowed``
    pick: int  # position of the taken option inside ``allowed``


@dataclass
class GammaParams:
    logits: dict[tuple, np.ndarray]

    @classmethod
    def zeros(cls, space: AcceleratorSpace) -> "GammaParams":
        return cls({k: np.zeros(shape) for k, shape in space.slot_shapes().items()})

    def copy(self) -> "GammaParams":
        return GammaParams({k: v.copy() for k, v in self.logits.items()})

    def check(self, space: AcceleratorSpace) -> None:
        shapes = space.slot_shapes()
        if set(shapes) != set(self.logits):
            raise ShapeMismatchError("gamma slots do not match the space")
        for k, shape in shapes.items():
            if self.logits[k].shape != shape:
                raise ShapeMismatchError(f"slot {k}: shape {self.logits[k].shape} != {shape}")

    def probabilities(self, slot: tuple) -> np.ndarray:
        """Gumbel-max choice distribution of a vector slot."""
        return softmax(self.logits[slot])


@dataclass
class SampleRecord:
    config: AcceleratorConfig
    decisions: list[Decision]
    soft_probs: list[float]
    hw_cost: float | None = None


def _row_logits(gamma: GammaParams, d: Decision) -> np.ndarray:
    v = gamma.logits[d.slot]
    return v[d.row] if d.row is not None else v


def sample_config(space: AcceleratorSpace, net: NetworkDesc, gamma: GammaParams, temp: float,
                  rng: np.random.Generator) -> SampleRecord:
    gamma.check(space)
    decisions: list[Decision] = []
    soft_probs: list[float] = []

    def choose(key, allowed):
        if key[1:2] == ("order",):
            slot, row = key[:3], key[3]
        else:
            slot, row = key, None
        allowed = np.asarray(allowed)
        d = Decision(slot, row, allowed, rng.gumbel(size=len(allowed)), 0)
        logits = _row_logits(gamma, d)[allowed]
        pick, soft = gumbel_softmax_sample(logits, temp, rng, noise=d.noise)
        d.pick = pick
        decisions.append(d)
        soft_probs.append(float(soft[pick]))
        return int(allowed[pick])

    config = walk_config(space, net, choose)
    return SampleRecord(config, decisions, soft_probs)


def surrogate_loss(gamma: GammaParams, decisions: list[Decision], temp: float,
                   cost: float) -> float:
    """Sum of taken-option soft probabilities times the (constant) cost."""
    total = 0.0
    for d in decisions:
        soft = softmax((_row_logits(gamma, d)[d.allowed] + d.noise) / temp)
        total += soft[d.pick]
    return total * cost


def surrogate_grad(gamma: GammaParams, decisions: list[Decision], temp: float,
                   cost: float) -> dict[tuple, np.ndarray]:
    grads = {k: np.zeros_like(v) for k, v in gamma.logits.items()}
    for d in decisions:
        soft = softmax((_row_logits(gamma, d)[d.allowed] + d.noise) / temp)
        p = soft[d.pick]
        local = -p * soft
        local[d.pick] += p
        local *= cost / temp
        target = grads[d.slot][d.row] if d.row is not None else grads[d.slot]
        target[d.allowed] += local
    return grads


# ---------------------------------------------------------------- evaluation

@dataclass
class Evaluation:
    cost: float  # objective value, no penalty
    loss: float  # cost with soft-constraint penalty
    legal: bool
    report: CostReport | None = None
    violations: list = field(default_factory=list)


Evaluator = Callable[[AcceleratorConfig], Evaluation]


def hardware_evaluator(net: NetworkDesc, space: AcceleratorSpace, tables: HardwareCostTables,
                       objective: str = "fps", constraints: Constraints | None = None,
                       penalty_multiplier: float = 10.0) -> Evaluator:
    def evaluate(config: AcceleratorConfig) -> Evaluation:
        report = network_cost(net, config, tables)
        legality = validate(config, net, space, tables, constraints)
        cost = report.objective(objective)
        penalty = 1.0 + penalty_multiplier * legality.overflow()
        if not legality.legal and legality.overflow() == 0:
            penalty = 1.0 + penalty_multiplier
        return Evaluation(cost=cost, loss=cost * penalty, legal=legality.legal, report=report,
                          violations=legality.to_list())
    return evaluate


# ---------------------------------------------------------------- optimization

def sample_rng(seed: int, step: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, step, index])


@dataclass
class DasState:
    gamma: GammaParams
    velocity: dict[tuple, np.ndarray]
    scale: float | None = None

    @classmethod
    def fresh(cls, space: AcceleratorSpace, gamma: GammaParams | None = None) -> "DasState":
        gamma = gamma.copy() if gamma is not None else GammaParams.zeros(space)
        return cls(gamma, {k: np.zeros_like(v) for k, v in gamma.logits.items()})


def das_step(space: AcceleratorSpace, net: NetworkDesc, state: DasState, cfg: DasConfig,
             evaluate: Evaluator, step: int, temp: float) -> tuple[SampleRecord, Evaluation]:
    """One sample, one evaluation, one momentum-SGD update of the logits (in place)."""
    rec = sample_config(space, net, state.gamma, temp, sample_rng(cfg.rng_seed, step))
    ev = evaluate(rec.config)
    rec.hw_cost = ev.cost
    if not math.isfinite(ev.loss):
        raise NonFiniteLossError(f"hardware loss {ev.loss} at step {step}; check cost tables")
    if cfg.lr_mode == "normalized":
        if state.scale is None:
            state.scale = ev.loss if ev.loss > 0 else 1.0
        loss = ev.loss / state.scale
    else:
        loss = ev.loss
    grads = surrogate_grad(state.gamma, rec.decisions, temp, loss)
    for k, g in grads.items():
        v = state.velocity[k]
        v *= cfg.momentum
        v += g
        state.gamma.logits[k] -= cfg.learning_rate * v
    return rec, ev


TRACE_COLUMNS = ("step", "temp", "sampled_cost", "incumbent_cost", "legality")


@dataclass
class DasResult:
    config: AcceleratorConfig
    cost: float
    report: CostReport | None
    gamma: GammaParams
    trace: list[dict]
    evaluations: int


def das_optimize(net: NetworkDesc, space: AcceleratorSpace, cfg: DasConfig,
                 tables: HardwareCostTables | None = None, *, objective: str = "fps",
                 constraints: Constraints | None = None, evaluate: Evaluator | None = None,
                 gamma: GammaParams | None = None, epoch_offset: int = 0) -> DasResult:
    """Run ``cfg.steps`` DAS steps and return the cheapest legal sample seen."""
    if evaluate is None:
        if tables is None:
            raise ValueError("need cost tables or an evaluator")
        evaluate = hardware_evaluator(net, space, tables, objective, constraints,
                                      cfg.penalty_multiplier)
    state = DasState.fresh(space, gamma)
    best: tuple[float, AcceleratorConfig, CostReport | None] | None = None
    trace = []
    for step in range(cfg.steps):
        temp = cfg.temperature(step, epoch_offset)
        rec, ev = das_step(space, net, state, cfg, evaluate, step, temp)
        if ev.legal and (best is None or ev.cost < best[0]):
            best = (ev.cost, rec.config, ev.report)
        trace.append({"step": step, "temp": temp, "sampled_cost": ev.cost,
                      "incumbent_cost": best[0] if best else math.nan,
                      "legality": "legal" if ev.legal else "illegal"})
    if best is None:
        raise NoLegalConfigError(f"no legal accelerator in {cfg.steps} samples")
    return DasResult(config=best[1], cost=best[0], report=best[2], gamma=state.gamma,
                     trace=trace, evaluations=cfg.steps)
