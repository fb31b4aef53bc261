"""Command-line entry points.

Exit codes: 0 success, 1 parse/schema failure, 2 estimate with violations
(or oracle mismatch), 3 no legal accelerator found.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from pathlib import Path

from . import __version__
from .config import (
    SCHEMA_VERSION, ConfigError, RunConfig, load_json, load_run_config, resolve_config_path,
)
from .costmodel import HardwareCostTables, network_cost
from .cosearch import EPOCH_TRACE_COLUMNS, run, run_random_baseline, run_sequential_baseline
from .das import TRACE_COLUMNS, NoLegalConfigError, das_optimize
from .gads import DIMS, TILE_LEVELS, AcceleratorConfig, space_size, validate
from .oracle import equivalence_sweep
from .workload import ConvLayerDesc, NetworkDesc

EXIT_OK, EXIT_PARSE, EXIT_VIOLATIONS, EXIT_NO_LEGAL = 0, 1, 2, 3

log = logging.getLogger("netaccel")

_FLOAT_TAG = "\x00f"


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def _tag_floats(obj):
    if isinstance(obj, float):
        return _FLOAT_TAG + _fmt_float(obj)
    if isinstance(obj, dict):
        return {str(k): _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tag_floats(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _tag_floats(obj.item())
    return obj


def dumps(obj) -> str:
    """JSON text with every float at 17 significant digits."""
    text = json.dumps(_tag_floats(obj), indent=2, sort_keys=True)
    return re.sub(r'"\\u0000f([^"]*)"', r"\1", text) + "\n"


def csv_text(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt_float(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


# ---------------------------------------------------------------- commands

def _load(args) -> RunConfig:
    cfg = load_run_config(resolve_config_path(args.config))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "threads", None):
        cfg = cfg.with_workers(args.threads)
    return cfg


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg.output_dir if cfg else "out")


def cmd_estimate(args) -> int:
    cfg = load_run_config(resolve_config_path(args.config)) if args.config else None
    tables = cfg.tables if cfg else HardwareCostTables()
    constraints = cfg.constraints if cfg else None
    net = NetworkDesc.from_dict(load_json(args.network))
    accel_doc = load_json(args.accel)
    accel_doc = accel_doc.get("accelerator", accel_doc)
    try:
        config = AcceleratorConfig.from_dict(accel_doc)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(args.accel, None, f"bad accelerator config: {e}") from None
    legality = validate(config, net, None, tables, constraints)
    report = network_cost(net, config, tables)
    doc = {"schema_version": SCHEMA_VERSION, "legal": legality.legal,
           "violations": legality.to_list(), "report": report.to_dict()}
    text = dumps(doc)
    sys.stdout.write(text)
    out = _out_dir(args, cfg)
    _write(out, "estimate.json", text)
    rows = [dict(zip(("layer", "chunk", "level", "tensor", "reads", "writes"), r))
            for r in report.breakdown_rows()]
    _write(out, "breakdown.csv", csv_text(rows, ("layer", "chunk", "level", "tensor", "reads", "writes")))
    if not legality.legal:
        for v in legality.to_list():
            print(f"violation: {v['kind']}: {v['message']}", file=sys.stderr)
        return EXIT_VIOLATIONS
    return EXIT_OK


def cmd_das(args) -> int:
    cfg = _load(args)
    net = cfg.network()
    space = cfg.space_for(net.layers)
    res = das_optimize(net, space, cfg.das, cfg.tables, objective=cfg.objective,
                       constraints=cfg.constraints)
    legality = validate(res.config, net, space, cfg.tables, cfg.constraints)
    doc = {"schema_version": SCHEMA_VERSION, "command": "das", "seed": cfg.seed,
           "network": net.to_dict(), "accelerator": res.config.to_dict(), "cost": res.cost,
           "legal": legality.legal, "evaluations": res.evaluations, "report": res.report.to_dict()}
    out = _out_dir(args, cfg)
    _write(out, "das_result.json", dumps(doc))
    _write(out, "das_trace.csv", csv_text(res.trace, TRACE_COLUMNS))
    print(f"das: cost {_fmt_float(res.cost)} after {res.evaluations} evaluations -> {out}")
    return EXIT_OK


def _search(args, fn, name: str) -> int:
    cfg = _load(args)
    if cfg.spec is None:
        raise ConfigError(args.config, None, "workload.supernet is required for " + name)
    res = fn(cfg.cosearch, cfg.spec, cfg.search_space(), cfg.tables, cfg.task)
    doc = {"schema_version": SCHEMA_VERSION, "command": name, "seed": cfg.seed, **res.to_dict()}
    out = _out_dir(args, cfg)
    _write(out, f"{name}_result.json", dumps(doc))
    _write(out, f"{name}_trace.csv", csv_text(res.trace, EPOCH_TRACE_COLUMNS))
    print(f"{name}: choices {res.choices} cost {_fmt_float(res.cost)} "
          f"accuracy {_fmt_float(res.accuracy)} -> {out}")
    return EXIT_OK


def cmd_cosearch(args) -> int:
    return _search(args, run, "cosearch")


def cmd_seq(args) -> int:
    return _search(args, run_sequential_baseline, "seq")


def cmd_random(args) -> int:
    cfg = _load(args)
    if cfg.spec is None:
        raise ConfigError(args.config, None, "workload.supernet is required for random")
    points, front = run_random_baseline(cfg.n_nets, cfg.n_accels_per_net, cfg.seed, cfg.spec,
                                        cfg.search_space(), cfg.tables, cfg.task,
                                        cfg.objective, cfg.constraints, cfg.cosearch.eval_steps)
    doc = {"schema_version": SCHEMA_VERSION, "command": "random", "seed": cfg.seed,
           "n_nets": cfg.n_nets, "n_accels_per_net": cfg.n_accels_per_net,
           "points": [p.to_dict() for p in points], "pareto": [p.to_dict() for p in front]}
    out = _out_dir(args, cfg)
    _write(out, "random_result.json", dumps(doc))
    rows = [{"index": i, "choices": " ".join(map(str, p.choices)), "accuracy": p.accuracy,
             "cost": p.cost, "pareto": p in front} for i, p in enumerate(points)]
    _write(out, "random_points.csv", csv_text(rows, ("index", "choices", "accuracy", "cost", "pareto")))
    print(f"random: {len(points)} points, {len(front)} on the Pareto front -> {out}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = _load(args)
    sec = cfg.raw.get("oracle_check", {})
    layers = [ConvLayerDesc.from_dict(x) for x in sec.get("layers", [])]
    res = equivalence_sweep(layers, cfg.tables, max_tile_options=sec.get("max_tile_options", 2),
                            pe_count_options=tuple(sec.get("pe_count_options", (4,))),
                            order_variants=sec.get("order_variants", 2), seed=cfg.seed,
                            limit=sec.get("limit"))
    if res.passed:
        print(f"oracle-check: pass, {res.checked} configs compared "
              f"({res.skipped_illegal} illegal skipped)")
        return EXIT_OK
    print(f"oracle-check: FAIL after {res.checked} configs; first counterexample:")
    print(dumps(res.mismatch), end="")
    return EXIT_VIOLATIONS


def cmd_enumerate(args) -> int:
    cfg = _load(args)
    space = cfg.search_space()
    doc = {"schema_version": SCHEMA_VERSION, "log10_space_size": space_size(space),
           "ref_dims": dict(space.ref_dims),
           "divisors": {lvl: {d: list(space.tile_options[lvl][d]) for d in DIMS}
                        for lvl in TILE_LEVELS},
           "slots": len(space.slot_shapes())}
    sys.stdout.write(dumps(doc))
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "das": cmd_das, "cosearch": cmd_cosearch, "seq": cmd_seq,
            "random": cmd_random, "oracle-check": cmd_oracle_check, "enumerate": cmd_enumerate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netaccel",
                                description="Network/accelerator co-search toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="cost of one network on one accelerator config")
    est.add_argument("network", help="network JSON (layers list)")
    est.add_argument("accel", help="accelerator config JSON")
    est.add_argument("--config", help="run config supplying cost tables and constraints")
    est.add_argument("--out", help="output directory")

    for name, helptext in (("das", "accelerator search for a fixed network"),
                           ("cosearch", "joint network/accelerator search"),
                           ("seq", "network search by MACs, then accelerator search"),
                           ("random", "random network and accelerator sampling"),
                           ("oracle-check", "closed-form vs simulator sweep"),
                           ("enumerate", "space size and divisor tables")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", nargs="?", default="default.json",
                        help="run config path or name in the config dir")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, help="cap on worker processes")
        sp.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except NoLegalConfigError as e:
        print(f"error: no legal accelerator: {e}", file=sys.stderr)
        return EXIT_NO_LEGAL


if __name__ == "__main__":
    sys.exit(main())
