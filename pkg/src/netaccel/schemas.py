"""JSON schemas for every document the CLI writes."""

from __future__ import annotations

from .config import SCHEMA_VERSION

_NUM = {"type": "number"}
_COUNT = {"type": "integer", "minimum": 0}
_CHOICES = {"type": "array", "items": {"type": "integer", "minimum": 0}}

REPORT = {
    "type": "object",
    "required": ["cycles", "energy", "edp", "fps", "latency_cycles", "pe_used", "dsp_used",
                 "area_used", "layers"],
    "properties": {"cycles": _NUM, "energy": _NUM, "edp": _NUM, "fps": _NUM,
                   "latency_cycles": _NUM, "pe_used": _COUNT, "dsp_used": _COUNT,
                   "area_used": _NUM, "layers": {"type": "array"}},
}

ACCELERATOR = {
    "type": "object",
    "required": ["max_pes", "mode", "chunks", "chunk_of_layer"],
    "properties": {"max_pes": {"type": "integer", "minimum": 1},
                   "mode": {"type": "string"},
                   "chunks": {"type": "array", "minItems": 1},
                   "chunk_of_layer": _CHOICES},
}

NETWORK = {"type": "object", "required": ["layers"],
           "properties": {"layers": {"type": "array"}}}


def _doc(command: str | None, props: dict, required: tuple) -> dict:
    base = {"schema_version": {"const": SCHEMA_VERSION}, "seed": {"type": "integer"}}
    if command:
        base["command"] = {"const": command}
    return {"type": "object", "properties": {**base, **props},
            "required": ["schema_version", *required]}


_SEARCH = {"network": NETWORK, "accelerator": ACCELERATOR, "report": REPORT, "cost": _NUM,
           "accuracy": _NUM, "choices": _CHOICES, "blocks": {"type": "array"},
           "lambda": _NUM, "evaluations": _COUNT}
_SEARCH_REQ = ("command", "seed", "network", "accelerator", "report", "cost", "accuracy",
               "choices", "evaluations")

_POINT = {"type": "object", "required": ["choices", "accuracy", "cost", "accelerator"],
          "properties": {"choices": _CHOICES, "accuracy": _NUM, "cost": _NUM,
                         "accelerator": {"oneOf": [ACCELERATOR, {"type": "null"}]}}}

OUTPUT_SCHEMAS = {
    "estimate.json": _doc(None, {"legal": {"type": "boolean"}, "violations": {"type": "array"},
                                 "report": REPORT}, ("legal", "violations", "report")),
    "das_result.json": _doc("das", {"network": NETWORK, "accelerator": ACCELERATOR,
                                    "cost": _NUM, "legal": {"type": "boolean"},
                                    "evaluations": _COUNT, "report": REPORT},
                            ("command", "seed", "network", "accelerator", "cost", "legal",
                             "report")),
    "cosearch_result.json": _doc("cosearch", _SEARCH, _SEARCH_REQ),
    "seq_result.json": _doc("seq", _SEARCH, _SEARCH_REQ),
    "random_result.json": _doc("random", {"n_nets": _COUNT, "n_accels_per_net": _COUNT,
                                          "points": {"type": "array", "items": _POINT},
                                          "pareto": {"type": "array", "items": _POINT}},
                               ("command", "seed", "points", "pareto")),
}
