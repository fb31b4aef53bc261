import csv
import json
from pathlib import Path

import jsonschema
import pytest

from netaccel.cli import EPOCH_TRACE_COLUMNS, TRACE_COLUMNS, dumps, main
from netaccel.config import CONFIG_DIR_ENV
from netaccel.schemas import OUTPUT_SCHEMAS

ROOT = Path(__file__).resolve().parent.parent
SMOKE = ROOT / "configs" / "smoke.json"
DATA = Path(__file__).resolve().parent / "data"


def smoke_doc():
    return json.loads(SMOKE.read_text())


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return str(p)


@pytest.fixture(scope="module")
def smoke_runs(tmp_path_factory):
    """Every search command run twice into separate directories."""
    base = tmp_path_factory.mktemp("smoke")
    codes = {}
    for rep in ("a", "b"):
        for cmd in ("das", "cosearch", "seq", "random"):
            codes[cmd, rep] = main([cmd, str(SMOKE), "--out", str(base / rep)])
    return base, codes


def test_smoke_commands_succeed(smoke_runs):
    _, codes = smoke_runs
    assert set(codes.values()) == {0}


def test_outputs_are_byte_identical(smoke_runs):
    base, _ = smoke_runs
    files = sorted(p.name for p in (base / "a").iterdir())
    assert len(files) == 8
    for f in files:
        assert (base / "a" / f).read_bytes() == (base / "b" / f).read_bytes(), f


def test_outputs_match_schemas(smoke_runs):
    base, _ = smoke_runs
    for name, schema in OUTPUT_SCHEMAS.items():
        p = base / "a" / name
        if p.exists():
            jsonschema.validate(json.loads(p.read_text()), schema)


def test_csv_headers(smoke_runs):
    base, _ = smoke_runs
    expect = {"das_trace.csv": list(TRACE_COLUMNS), "cosearch_trace.csv": list(EPOCH_TRACE_COLUMNS),
              "seq_trace.csv": list(EPOCH_TRACE_COLUMNS),
              "random_points.csv": ["index", "choices", "accuracy", "cost", "pareto"]}
    for name, header in expect.items():
        rows = list(csv.reader((base / "a" / name).open()))
        assert rows[0] == header and len(rows) > 1


def test_seed_changes_trace_not_schema(tmp_path):
    assert main(["das", str(SMOKE), "--out", str(tmp_path / "s0")]) == 0
    assert main(["das", str(SMOKE), "--seed", "5", "--out", str(tmp_path / "s5")]) == 0
    a, b = [(tmp_path / d / "das_trace.csv").read_text() for d in ("s0", "s5")]
    assert a != b and a.splitlines()[0] == b.splitlines()[0]
    da, db = [json.loads((tmp_path / d / "das_result.json").read_text()) for d in ("s0", "s5")]
    assert sorted(da) == sorted(db) and db["seed"] == 5


def test_unknown_key_reports_line(tmp_path, capsys):
    doc = smoke_doc()
    doc["das"]["stepz"] = 3
    path = write_cfg(tmp_path, doc)
    assert main(["das", path]) == 1
    err = capsys.readouterr().err
    lines = Path(path).read_text().splitlines()
    lineno = next(i for i, l in enumerate(lines, 1) if '"stepz"' in l)
    assert f"{path}:{lineno}:" in err and "stepz" in err


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema_version": 1,\n  "seed": ,\n}\n')
    assert main(["das", str(p)]) == 1
    assert f"{p}:3:" in capsys.readouterr().err


def test_wrong_schema_version(tmp_path):
    doc = smoke_doc()
    doc["schema_version"] = 99
    assert main(["das", write_cfg(tmp_path, doc)]) == 1


def test_golden_estimate_is_byte_identical(tmp_path, capsys):
    code = main(["estimate", str(DATA / "golden_network.json"), str(DATA / "golden_accel.json"),
                 "--out", str(tmp_path)])
    assert code == 0
    golden = (DATA / "golden_estimate.json").read_text()
    assert capsys.readouterr().out == golden
    assert (tmp_path / "estimate.json").read_text() == golden
    jsonschema.validate(json.loads(golden), OUTPUT_SCHEMAS["estimate.json"])


def test_illegal_estimate_exits_2(tmp_path, capsys):
    doc = smoke_doc()
    doc["constraints"] = {"dsp_limit": 1}
    cfg = write_cfg(tmp_path, doc)
    code = main(["estimate", str(DATA / "golden_network.json"), str(DATA / "golden_accel.json"),
                 "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    out = json.loads(capsys.readouterr().out)
    assert not out["legal"] and any(v["kind"] == "dsp-budget" for v in out["violations"])


def test_no_legal_accelerator_exits_3(tmp_path):
    doc = smoke_doc()
    doc["cost_tables"] = {"rf_capacity": 1, "gb_capacity": 1}
    assert main(["das", write_cfg(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3


def test_one_mac_network(tmp_path, capsys):
    doc = smoke_doc()
    doc["workload"] = {"network": [{"x": 1, "y": 1, "r": 1, "s": 1, "c": 1, "k": 1}]}
    out = tmp_path / "o"
    assert main(["das", write_cfg(tmp_path, doc), "--out", str(out)]) == 0
    net = tmp_path / "net.json"
    net.write_text(dumps(json.loads((out / "das_result.json").read_text())["network"]))
    capsys.readouterr()
    assert main(["estimate", str(net), str(out / "das_result.json"), "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)["report"]
    assert report["cycles"] == 1


def test_oracle_check_passes(capsys):
    assert main(["oracle-check", str(SMOKE)]) == 0
    assert "pass" in capsys.readouterr().out


def test_config_dir_env(tmp_path, monkeypatch, capsys):
    (tmp_path / "mine.json").write_text(SMOKE.read_text())
    monkeypatch.setenv(CONFIG_DIR_ENV, str(tmp_path))
    monkeypatch.chdir(tmp_path)
    assert main(["enumerate", "mine"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["log10_space_size"] > 0 and doc["slots"] >= 1


def test_dumps_float_format():
    text = dumps({"a": 0.1, "b": float("nan"), "c": 2})
    assert '"a": 0.10000000000000001' in text and '"b": NaN' in text and '"c": 2' in text
