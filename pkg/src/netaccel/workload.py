"""Convolution workloads and the inverted-residual block space.

Shapes and counts only. A network is a flat sequence of conv layers; a
searchable block expands to a 1x1 expand, a kxk depthwise and a 1x1 project.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

DIMS = ("X", "Y", "R", "S", "C", "K")


class InvalidChoiceError(ValueError):
    pass


@dataclass(frozen=True)
class ConvLayerDesc:
    x: int
    y: int
    r: int
    s: int
    c: int
    k: int
    stride: int = 1
    depthwise: bool = False
    groups: int = 1

    def __post_init__(self):
        for name in ("x", "y", "r", "s", "c", "k", "stride", "groups"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.depthwise and self.c != self.k:
            raise ValueError("depthwise layer needs c == k")
        if not self.depthwise and (self.c % self.groups or self.k % self.groups):
            raise ValueError(f"groups={self.groups} must divide c={self.c} and k={self.k}")

    @property
    def group_count(self) -> int:
        return self.c if self.depthwise else self.groups

    @property
    def channels_per_group(self) -> int:
        """Input channels reduced into one output channel."""
        return self.c // self.group_count

    def loop_dims(self) -> dict[str, int]:
        """Trip counts of the six-deep loop nest (C collapses for depthwise)."""
        return {"X": self.x, "Y": self.y, "R": self.r, "S": self.s,
                "C": self.channels_per_group, "K": self.k}

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "r": self.r, "s": self.s, "c": self.c,
                "k": self.k, "stride": self.stride, "depthwise": self.depthwise,
                "groups": self.groups}

    @classmethod
    def from_dict(cls, d: dict) -> "ConvLayerDesc":
        return cls(**d)


@dataclass(frozen=True)
class BlockChoice:
    kernel_size: int = 3
    expansion_ratio: int = 1
    group: int = 1
    is_skip: bool = False

    @classmethod
    def skip(cls) -> "BlockChoice":
        return cls(is_skip=True)

    def label(self) -> str:
        if self.is_skip:
            return "skip"
        return f"k{self.kernel_size}_e{self.expansion_ratio}_g{self.group}"

    def to_dict(self) -> dict:
        if self.is_skip:
            return {"is_skip": True}
        return {"kernel_size": self.kernel_size, "expansion_ratio": self.expansion_ratio,
                "group": self.group}

    @classmethod
    def from_dict(cls, d: dict) -> "BlockChoice":
        if d.get("is_skip"):
            return cls.skip()
        return cls(kernel_size=d["kernel_size"], expansion_ratio=d.get("expansion_ratio", 1),
                   group=d.get("group", 1))


@dataclass(frozen=True)
class NetworkDesc:
    layers: tuple[ConvLayerDesc, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def total_macs(self) -> int:
        return sum(macs(layer) for layer in self.layers)

    def to_dict(self) -> dict:
        return {"layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkDesc":
        return cls(tuple(ConvLayerDesc.from_dict(x) for x in d["layers"]))


def expand_block(choice: BlockChoice, in_channels: int, out_channels: int,
                 spatial: int, stride: int = 1) -> list[ConvLayerDesc]:
    if choice.is_skip:
        return []
    if spatial % stride:
        raise InvalidChoiceError(f"spatial {spatial} not divisible by stride {stride}")
    if choice.kernel_size < 1 or choice.kernel_size % 2 == 0:
        raise InvalidChoiceError(f"kernel_size must be odd, got {choice.kernel_size}")
    if choice.expansion_ratio < 1:
        raise InvalidChoiceError(f"expansion_ratio must be >= 1, got {choice.expansion_ratio}")
    hidden = in_channels * choice.expansion_ratio
    g = choice.group
    if g < 1 or in_channels % g or out_channels % g or hidden % g:
        raise InvalidChoiceError(
            f"group {g} does not divide channels ({in_channels}, {hidden}, {out_channels})")
    out_spatial = spatial // stride
    k = choice.kernel_size
    return [
        ConvLayerDesc(x=spatial, y=spatial, r=1, s=1, c=in_channels, k=hidden, groups=g),
        ConvLayerDesc(x=out_spatial, y=out_spatial, r=k, s=k, c=hidden, k=hidden,
                      stride=stride, depthwise=True),
        ConvLayerDesc(x=out_spatial, y=out_spatial, r=1, s=1, c=hidden, k=out_channels,
                      groups=g),
    ]


def macs(layer: ConvLayerDesc) -> int:
    return prod(layer.loop_dims().values())


def tensor_footprints(layer: ConvLayerDesc) -> dict[str, int]:
    """Whole-tensor word counts; ifmap includes the sliding-window halo."""
    d = layer.loop_dims()
    weights = d["R"] * d["S"] * d["C"] * d["K"]
    rows = (layer.y - 1) * layer.stride + layer.r
    cols = (layer.x - 1) * layer.stride + layer.s
    return {"weights": weights, "ifmap": layer.c * rows * cols,
            "ofmap": layer.k * layer.x * layer.y}
