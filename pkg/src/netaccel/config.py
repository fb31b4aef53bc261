"""Declarative run configuration: one JSON document, schema-checked before use."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .costmodel import OBJECTIVES, HardwareCostTables
from .cosearch import CoSearchConfig
from .das import DasConfig
from .dns import LayerSpec, SupernetSpec, SyntheticTask
from .gads import PIPELINE, MULTICYCLE, AcceleratorSpace, Constraints, NocChoice
from .workload import BlockChoice, ConvLayerDesc, NetworkDesc

SCHEMA_VERSION = 1
CONFIG_DIR_ENV = "NETACCEL_CONFIG_DIR"


class ConfigError(ValueError):
    """Parse or schema failure, anchored to a line of the offending file."""

    def __init__(self, path: str, line: int | None, message: str):
        self.path, self.line = path, line
        where = f"{path}:{line}" if line else path
        super().__init__(f"{where}: {message}")


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_CONV = _obj({"x": _POS, "y": _POS, "r": _POS, "s": _POS, "c": _POS, "k": _POS,
              "stride": _POS, "depthwise": {"type": "boolean"}, "groups": _POS},
             ("x", "y", "r", "s", "c", "k"))
_BLOCK = _obj({"kernel_size": _POS, "expansion_ratio": _POS, "group": _POS,
               "is_skip": {"type": "boolean"}})
_LEVEL_MAP = {"type": "object", "additionalProperties": _NUM}

RUN_SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "seed": _INT,
    "objective": {"enum": list(OBJECTIVES)},
    "workload": _obj({
        "supernet": _obj({
            "layers": {"type": "array", "minItems": 1, "items": _obj(
                {"in_channels": _POS, "out_channels": _POS, "spatial": _POS, "stride": _POS},
                ("in_channels", "out_channels", "spatial"))},
            "candidates": {"type": "array", "minItems": 1, "items": _BLOCK},
            "width": _POS,
        }, ("layers", "candidates")),
        "task": _obj({"input_dim": _POS, "num_classes": _POS, "clusters_per_class": _POS,
                      "cluster_std": _NUM, "n_train": _POS, "n_val": _POS, "seed": _INT}),
        "choices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "network": {"type": "array", "items": _CONV},
    }),
    "accelerator_space": _obj({
        "pe_count_options": {"type": "array", "minItems": 1, "items": _POS},
        "pipeline_options": {"type": "array", "minItems": 1,
                             "items": {"enum": [MULTICYCLE, PIPELINE]}},
        "noc_options": {"type": "array", "minItems": 1,
                        "items": {"enum": [n.name for n in NocChoice]}},
        "num_chunks": _POS,
        "num_dw_chunks": {"type": "integer", "minimum": 0},
        "max_tile_options": {"type": ["integer", "null"], "minimum": 1},
    }),
    "cost_tables": _obj({"unit_energy": _LEVEL_MAP, "bandwidth": _LEVEL_MAP,
                         "gb_capacity": _POS, "rf_capacity": _POS, "clock_freq": _NUM,
                         "dsp_per_pe": _POS, "area_per_pe": _NUM, "area_per_word": _NUM}),
    "constraints": _obj({"dsp_limit": {"type": ["integer", "null"]},
                         "area_limit": _NUM_OR_NULL}),
    "das": _obj({"steps": _POS, "learning_rate": _NUM, "lr_mode": {"enum": ["normalized", "raw"]},
                 "momentum": _NUM, "temp_init": _NUM, "temp_decay": _NUM,
                 "steps_per_epoch": _POS, "penalty_multiplier": _NUM}),
    "dns": _obj({"steps_per_epoch": _POS, "batch_size": _POS, "weight_lr": _NUM,
                 "alpha_lr": _NUM, "sampling": {"enum": ["relaxed", "hard"]},
                 "eval_steps": _POS}),
    "cosearch": _obj({"max_epoch": _POS, "M": _POS, "lambda": _NUM_OR_NULL,
                      "temp_init": _NUM, "temp_decay": _NUM, "warm_start": {"type": "boolean"},
                      "final_das_steps": {"type": ["integer", "null"], "minimum": 1}}),
    "random": _obj({"n_nets": _POS, "n_accels_per_net": _POS}),
    "oracle_check": _obj({"layers": {"type": "array", "items": _CONV},
                          "max_tile_options": _POS, "order_variants": _POS,
                          "pe_count_options": {"type": "array", "minItems": 1, "items": _POS},
                          "limit": {"type": ["integer", "null"]}}),
    "output": _obj({"dir": {"type": "string"}}),
}, ("schema_version",))


def _line_of(text: str, path: list) -> int | None:
    """Best-effort line number of the JSON node at ``path``."""
    pos = 0
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if not m:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1 if pos else None


def parse_json(text: str, path: str, schema: dict | None = None) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(path, e.lineno, e.msg) from None
    if schema is not None:
        errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc),
                        key=lambda e: list(map(str, e.absolute_path)))
        if errors:
            err = errors[0]
            loc = list(err.absolute_path)
            if err.validator == "additionalProperties":
                extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
                loc = loc + extra[:1]
                msg = f"unknown key {extra[0]!r}" if extra else err.message
            else:
                msg = err.message
            dotted = ".".join(map(str, loc)) or "<root>"
            raise ConfigError(path, _line_of(text, loc), f"{dotted}: {msg}")
    return doc


def load_json(path: str | Path, schema: dict | None = None) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(str(p), None, e.strerror or str(e)) from None
    return parse_json(text, str(p), schema)


def config_dir() -> Path:
    return Path(os.environ.get(CONFIG_DIR_ENV, "configs"))


def resolve_config_path(name: str) -> Path:
    """Paths that exist are used as is; bare names are looked up in the config dir."""
    p = Path(name)
    if p.exists() or p.is_absolute() or len(p.parts) > 1:
        return p
    for cand in (config_dir() / name, config_dir() / f"{name}.json"):
        if cand.exists():
            return cand
    return p


@dataclass
class RunConfig:
    raw: dict
    seed: int = 0
    objective: str = "fps"
    spec: SupernetSpec | None = None
    task: SyntheticTask = field(default_factory=SyntheticTask)
    tables: HardwareCostTables = field(default_factory=HardwareCostTables)
    constraints: Constraints = field(default_factory=Constraints)
    das: DasConfig = field(default_factory=DasConfig)
    cosearch: CoSearchConfig = field(default_factory=CoSearchConfig)
    n_nets: int = 10
    n_accels_per_net: int = 100
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        seed = doc.get("seed", 0)
        objective = doc.get("objective", "fps")
        wl = doc.get("workload", {})
        spec = None
        if "supernet" in wl:
            sn = wl["supernet"]
            task_kw = wl.get("task", {})
            task = SyntheticTask(**task_kw)
            spec = SupernetSpec(layers=tuple(LayerSpec(**x) for x in sn["layers"]),
                                candidates=tuple(BlockChoice.from_dict(c) for c in sn["candidates"]),
                                width=sn.get("width", 16), input_dim=task.input_dim,
                                num_classes=task.num_classes)
        else:
            task = SyntheticTask(**wl.get("task", {}))
        tables = HardwareCostTables.from_dict(doc.get("cost_tables", {}))
        constraints = Constraints(**doc.get("constraints", {}))
        das = DasConfig(rng_seed=seed, **doc.get("das", {}))
        dns = doc.get("dns", {})
        cs = dict(doc.get("cosearch", {}))
        lam = cs.pop("lambda", None)
        dns_kw = {"dns_steps_per_epoch": dns.get("steps_per_epoch", 40)}
        for k in ("batch_size", "weight_lr", "alpha_lr", "sampling", "eval_steps"):
            if k in dns:
                dns_kw[k] = dns[k]
        cosearch = CoSearchConfig(lam=lam, objective=objective, constraints=constraints, das=das,
                                  seed=seed, **dns_kw, **cs)
        rnd = doc.get("random", {})
        return cls(raw=doc, seed=seed, objective=objective, spec=spec, task=task, tables=tables,
                   constraints=constraints, das=das, cosearch=cosearch,
                   n_nets=rnd.get("n_nets", 10), n_accels_per_net=rnd.get("n_accels_per_net", 100),
                   output_dir=doc.get("output", {}).get("dir", "out"))

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, das=replace(self.das, rng_seed=seed),
                       cosearch=replace(self.cosearch, seed=seed,
                                        das=replace(self.cosearch.das, rng_seed=seed)))

    def with_workers(self, n: int) -> "RunConfig":
        return replace(self, cosearch=replace(self.cosearch, workers=n))

    def network(self) -> NetworkDesc:
        """Fixed network for single-network commands: explicit layers, else supernet choices."""
        wl = self.raw.get("workload", {})
        if "network" in wl:
            return NetworkDesc(tuple(ConvLayerDesc.from_dict(x) for x in wl["network"]))
        if self.spec is None:
            raise ValueError("workload needs either 'network' or 'supernet'")
        choices = wl.get("choices", [0] * len(self.spec.layers))
        if len(choices) != len(self.spec.layers):
            raise ValueError(f"choices has {len(choices)} entries, supernet has "
                             f"{len(self.spec.layers)} layers")
        return self.spec.network(choices)

    def space_for(self, layers, num_layer_slots: int | None = None) -> AcceleratorSpace:
        sec = dict(self.raw.get("accelerator_space", {}))
        kw = {}
        if "pe_count_options" in sec:
            kw["pe_count_options"] = tuple(sec["pe_count_options"])
        if "pipeline_options" in sec:
            kw["pipeline_options"] = tuple(sec["pipeline_options"])
        if "noc_options" in sec:
            kw["noc_options"] = tuple(NocChoice[n] for n in sec["noc_options"])
        for k in ("num_chunks", "num_dw_chunks"):
            if k in sec:
                kw[k] = sec[k]
        return AcceleratorSpace.for_layers(list(layers), max_tile_options=sec.get("max_tile_options"),
                                           num_layer_slots=num_layer_slots, **kw)

    def search_space(self) -> AcceleratorSpace:
        """Space covering every layer any supernet candidate can produce."""
        if self.spec is None:
            return self.space_for(self.network().layers)
        return self.space_for(self.spec.all_layers(), self.spec.max_network_layers())


def load_run_config(path: str | Path) -> RunConfig:
    doc = load_json(path, RUN_SCHEMA)
    try:
        return RunConfig.from_dict(doc)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(path), None, str(e)) from None
