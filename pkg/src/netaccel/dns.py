"""Differentiable network search on a desk-scale supernet.

Each searchable layer holds K candidate operators on a fixed-width activation
vector. A candidate is a two-layer tanh map whose hidden width grows with the
MACs of the conv block it stands for, so a more expensive block is also a
more expressive proxy; the skip candidate is the identity. The layer output
is the Gumbel-Softmax weighted sum of its candidates. The stem is affine with
no nonlinearity, so a network that skips every layer is a linear classifier.

Gradients are analytic (plain numpy backprop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gads import ShapeMismatchError
from .workload import BlockChoice, NetworkDesc, expand_block, macs

MAX_HIDDEN = 64


class NonFiniteLossError(FloatingPointError):
    pass


class WidthMismatchError(ValueError):
    pass


# ---------------------------------------------------------------- task

@dataclass(frozen=True)
class SyntheticTask:
    """Gaussian blobs, several per class, placed uniformly in a cube.

    With more than one blob per class the classes are not linearly separable.
    """

    input_dim: int = 3
    num_classes: int = 4
    clusters_per_class: int = 5
    cluster_std: float = 0.1
    n_train: int = 512
    n_val: int = 512
    seed: int = 0

    def generate(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        rng = np.random.default_rng(self.seed)
        n_centers = self.num_classes * self.clusters_per_class
        centers = rng.uniform(-1.0, 1.0, size=(n_centers, self.input_dim))
        labels = np.repeat(np.arange(self.num_classes), self.clusters_per_class)

        def draw(n):
            which = rng.integers(0, n_centers, size=n)
            x = centers[which] + self.cluster_std * rng.standard_normal((n, self.input_dim))
            return x, labels[which]

        # drawn one after the other from one stream: disjoint, deterministic
        return {"train": draw(self.n_train), "val": draw(self.n_val)}

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------- supernet

@dataclass(frozen=True)
class LayerSpec:
    in_channels: int
    out_channels: int
    spatial: int
    stride: int = 1

    @property
    def allows_skip(self) -> bool:
        return self.in_channels == self.out_channels and self.stride == 1

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "spatial": self.spatial, "stride": self.stride}


@dataclass(frozen=True)
class SupernetSpec:
    layers: tuple[LayerSpec, ...]
    candidates: tuple[BlockChoice, ...]
    width: int = 16
    input_dim: int = 3
    num_classes: int = 4

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.width > MAX_HIDDEN:
            raise ValueError(f"width must be <= {MAX_HIDDEN}")
        if not self.layers or not self.candidates:
            raise ValueError("need at least one layer and one candidate")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.layers), len(self.candidates)

    def mask(self) -> np.ndarray:
        """True where candidate k is usable at layer l (skip needs matching shapes)."""
        m = np.ones(self.shape, dtype=bool)
        for l, ls in enumerate(self.layers):
            for k, c in enumerate(self.candidates):
                if c.is_skip and not ls.allows_skip:
                    m[l, k] = False
        return m

    def op_layers(self, l: int, k: int):
        ls = self.layers[l]
        return expand_block(self.candidates[k], ls.in_channels, ls.out_channels, ls.spatial,
                            ls.stride)

    def op_macs(self, l: int, k: int) -> int:
        return sum(macs(x) for x in self.op_layers(l, k))

    def hidden_width(self, l: int, k: int) -> int:
        """Proxy hidden width, proportional to block MACs relative to a k3/e1 block."""
        if self.candidates[k].is_skip:
            return 0
        ls = self.layers[l]
        base = sum(macs(x) for x in expand_block(BlockChoice(3, 1, 1), ls.in_channels,
                                                 ls.out_channels, ls.spatial, ls.stride))
        return int(min(MAX_HIDDEN, max(1, round(self.width * self.op_macs(l, k) / base))))

    def network(self, choices: list[int]) -> NetworkDesc:
        layers = []
        for l, k in enumerate(choices):
            layers.extend(self.op_layers(l, k))
        return NetworkDesc(tuple(layers))

    def all_layers(self):
        """Every conv layer any candidate can produce (for sizing accelerator spaces)."""
        out = []
        for l in range(len(self.layers)):
            for k in range(len(self.candidates)):
                out.extend(self.op_layers(l, k))
        return out

    def max_network_layers(self) -> int:
        return 3 * len(self.layers)

    def to_dict(self) -> dict:
        return {"layers": [x.to_dict() for x in self.layers],
                "candidates": [c.to_dict() for c in self.candidates],
                "width": self.width, "input_dim": self.input_dim,
                "num_classes": self.num_classes}


def init_weights(spec: SupernetSpec, seed: int = 0) -> dict[tuple, np.ndarray]:
    # Each candidate draws from a stream keyed by (layer, hidden width), so two
    # candidates with the same proxy capacity start from identical weights.
    rng = np.random.default_rng([seed, 0])
    w = spec.width
    p: dict[tuple, np.ndarray] = {
        ("stem", "W"): rng.standard_normal((spec.input_dim, w)) / math.sqrt(spec.input_dim),
        ("stem", "b"): np.zeros(w),
        ("head", "W"): rng.standard_normal((w, spec.num_classes)) / math.sqrt(w),
        ("head", "b"): np.zeros(spec.num_classes),
    }
    for l in range(len(spec.layers)):
        for k in range(len(spec.candidates)):
            h = spec.hidden_width(l, k)
            if h == 0:
                continue
            rng = np.random.default_rng([seed, 1, l, h])
            p[(l, k, "W1")] = rng.standard_normal((w, h)) / math.sqrt(w)
            p[(l, k, "b1")] = np.zeros(h)
            p[(l, k, "W2")] = rng.standard_normal((h, w)) / math.sqrt(h)
            p[(l, k, "b2")] = np.zeros(w)
    return p


@dataclass
class SuperNet:
    spec: SupernetSpec
    weights: dict[tuple, np.ndarray]

    @classmethod
    def create(cls, spec: SupernetSpec, seed: int = 0) -> "SuperNet":
        return cls(spec, init_weights(spec, seed))


def _op_forward(p, l, k, x, is_skip):
    if is_skip:
        return x, None
    hpre = x @ p[(l, k, "W1")] + p[(l, k, "b1")]
    h = np.tanh(hpre)
    return h @ p[(l, k, "W2")] + p[(l, k, "b2")], h


def forward_mixed(net: SuperNet, l: int, x: np.ndarray, w_row: np.ndarray) -> np.ndarray:
    """Layer ``l`` output: candidates weighted by ``w_row`` (zero weights are not run)."""
    if x.shape[-1] != net.spec.width:
        raise WidthMismatchError(f"input width {x.shape[-1]} != {net.spec.width}")
    out = np.zeros_like(x)
    for k, wk in enumerate(w_row):
        if wk != 0.0:
            y, _ = _op_forward(net.weights, l, k, x, net.spec.candidates[k].is_skip)
            out = out + wk * y
    return out


def _softmax_rows(z: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def relaxed_weights(alpha: np.ndarray, temp: float, noise: np.ndarray | None,
                    mask: np.ndarray, mode: str = "relaxed") -> np.ndarray:
    """Per-layer operator weights: softmax((alpha+noise)/temp), or its one-hot argmax."""
    g = alpha if noise is None else alpha + noise
    if mode == "hard":
        out = np.zeros_like(alpha, dtype=float)
        idx = np.argmax(np.where(mask, g, -np.inf), axis=1)
        out[np.arange(len(idx)), idx] = 1.0
        return out
    if mode != "relaxed":
        raise ValueError(f"unknown mode {mode!r}")
    return _softmax_rows(g / temp, mask)


def loss_and_grads(net: SuperNet, x: np.ndarray, y: np.ndarray, wts: np.ndarray,
                   need_weight_grads: bool = True):
    """Mean cross-entropy, its gradient w.r.t. every weight, and w.r.t. the operator mix.

    Returns ``(loss, grads, dwts, accuracy)`` where ``dwts[l, k]`` is dL/dwts[l, k].
    """
    p = net.weights
    spec = net.spec
    n = x.shape[0]
    a = x @ p[("stem", "W")] + p[("stem", "b")]
    acts = [a]
    caches = []
    for l in range(len(spec.layers)):
        out = np.zeros_like(a)
        cache = {}
        for k, wk in enumerate(wts[l]):
            if wk == 0.0:
                continue
            yk, h = _op_forward(p, l, k, a, spec.candidates[k].is_skip)
            cache[k] = (yk, h)
            out = out + wk * yk
        caches.append(cache)
        a = out
        acts.append(a)
    logits = a @ p[("head", "W")] + p[("head", "b")]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(logp[np.arange(n), y].mean())
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"loss is {loss}")
    acc = float((logits.argmax(axis=1) == y).mean())

    grads = {k: np.zeros_like(v) for k, v in p.items()} if need_weight_grads else {}
    dwts = np.zeros_like(wts, dtype=float)
    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    if need_weight_grads:
        grads[("head", "W")] = acts[-1].T @ dlogits
        grads[("head", "b")] = dlogits.sum(axis=0)
    da = dlogits @ p[("head", "W")].T
    for l in range(len(spec.layers) - 1, -1, -1):
        a_in = acts[l]
        da_in = np.zeros_like(a_in)
        for k, (yk, h) in caches[l].items():
            dwts[l, k] = float((da * yk).sum())
            dy = wts[l, k] * da
            if h is None:
                da_in += dy
                continue
            if need_weight_grads:
                grads[(l, k, "W2")] = h.T @ dy
                grads[(l, k, "b2")] = dy.sum(axis=0)
            dh = (dy @ p[(l, k, "W2")].T) * (1.0 - h * h)
            if need_weight_grads:
                grads[(l, k, "W1")] = a_in.T @ dh
                grads[(l, k, "b1")] = dh.sum(axis=0)
            da_in += dh @ p[(l, k, "W1")].T
        da = da_in
    if need_weight_grads:
        grads[("stem", "W")] = x.T @ da
        grads[("stem", "b")] = da.sum(axis=0)
    return loss, grads, dwts, acc


def softmax_backward(w: np.ndarray, dw: np.ndarray, temp: float) -> np.ndarray:
    """Row-wise vector-Jacobian product through w = softmax(z / temp)."""
    inner = (w * dw).sum(axis=1, keepdims=True)
    return w * (dw - inner) / temp


# ---------------------------------------------------------------- optimizers

@dataclass
class SGDMomentum:
    lr: float = 0.05
    momentum: float = 0.9
    velocity: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        for k, g in grads.items():
            v = self.velocity.get(k)
            if v is None:
                v = self.velocity[k] = np.zeros_like(g)
            v *= self.momentum
            v += g
            params[k] -= lr * v


@dataclass
class Adam:
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------- search steps

def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.gumbel(size=shape)


def train_step_weights(net: SuperNet, batch: tuple[np.ndarray, np.ndarray], opt: SGDMomentum,
                       wts: np.ndarray, lr: float | None = None) -> float:
    """One descent step on the training cross-entropy w.r.t. the supernet weights only."""
    x, y = batch
    if len(x) == 0:
        raise ValueError("empty batch")
    loss, grads, _, _ = loss_and_grads(net, x, y, wts)
    opt.step(net.weights, grads, lr)
    return loss


def hardware_loss(wts: np.ndarray, hw_table: np.ndarray) -> float:
    """Layer-wise hardware loss: sum over layers and operators of weight times op cost."""
    return float((wts * hw_table).sum())


def alpha_gradient(net: SuperNet, alpha: np.ndarray, batch, hw_table: np.ndarray, lam: float,
                   temp: float, noise: np.ndarray | None) -> tuple[float, float, np.ndarray]:
    """(val loss, hw loss, d(val + lam*hw)/d alpha) for relaxed weights under fixed noise."""
    if alpha.shape != net.spec.shape or hw_table.shape != net.spec.shape:
        raise ShapeMismatchError(f"expected {net.spec.shape}, got alpha {alpha.shape}, "
                                 f"table {hw_table.shape}")
    mask = net.spec.mask()
    wts = relaxed_weights(alpha, temp, noise, mask)
    x, y = batch
    loss, _, dwts, _ = loss_and_grads(net, x, y, wts, need_weight_grads=False)
    hw = hardware_loss(wts, hw_table)
    grad = softmax_backward(wts, dwts + lam * hw_table, temp)
    return loss, hw, np.where(mask, grad, 0.0)


def update_alpha(net: SuperNet, alpha: np.ndarray, batch, hw_table: np.ndarray, lam: float,
                 opt: Adam, temp: float, noise: np.ndarray | None = None) -> tuple[np.ndarray, float, float]:
    """One Adam step on val loss + lam * hardware loss w.r.t. alpha; returns (alpha, val, hw)."""
    hw_table = np.asarray(hw_table, dtype=float)
    if not np.all(np.isfinite(hw_table)) or np.any(hw_table < 0):
        raise ValueError("hardware cost table must be finite and non-negative")
    val, hw, g = alpha_gradient(net, alpha, batch, hw_table, lam, temp, noise)
    return opt.step(alpha, g), val, hw


def derive_network(alpha: np.ndarray, spec: SupernetSpec) -> tuple[list[int], list[BlockChoice], NetworkDesc]:
    """Per-layer argmax of alpha over usable candidates; ties go to the lowest index."""
    masked = np.where(spec.mask(), alpha, -np.inf)
    idx = [int(np.argmax(row)) for row in masked]
    return idx, [spec.candidates[k] for k in idx], spec.network(idx)


def sample_networks(alpha: np.ndarray, spec: SupernetSpec, m: int,
                    rng: np.random.Generator) -> list[tuple[list[int], NetworkDesc]]:
    """``m`` independent hard Gumbel-max draws of one candidate per layer."""
    if m < 1:
        raise ValueError("M must be >= 1")
    mask = spec.mask()
    out = []
    for _ in range(m):
        g = np.where(mask, alpha + rng.gumbel(size=alpha.shape), -np.inf)
        idx = [int(np.argmax(row)) for row in g]
        out.append((idx, spec.network(idx)))
    return out


def one_hot(spec: SupernetSpec, choices: list[int]) -> np.ndarray:
    w = np.zeros(spec.shape)
    w[np.arange(len(choices)), choices] = 1.0
    return w


def train_fixed(spec: SupernetSpec, choices: list[int], data, steps: int = 300,
                batch_size: int = 64, lr: float = 0.05, seed: int = 0) -> float:
    """Train one fixed path from scratch on the train split; return val accuracy."""
    net = SuperNet.create(spec, seed)
    wts = one_hot(spec, choices)
    opt = SGDMomentum(lr=lr)
    xtr, ytr = data["train"]
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        idx = rng.integers(0, len(xtr), size=batch_size)
        train_step_weights(net, (xtr[idx], ytr[idx]), opt, wts)
    xv, yv = data["val"]
    _, _, _, acc = loss_and_grads(net, xv, yv, wts, need_weight_grads=False)
    return acc
