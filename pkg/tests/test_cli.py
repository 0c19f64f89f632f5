import csv
import io
import json

import pytest

from antdt import presets
from antdt.cli import main, rows_to_csv, sweep_rows
from antdt.core import ScenarioConfig


def small_cfg_file(tmp_path, **kw):
    cfg = ScenarioConfig(n_workers=2, n_servers=1, global_batch=8, samples=400, epochs=1, **kw)
    p = tmp_path / "cfg.json"
    p.write_text(cfg.dumps())
    return p


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(small_cfg_file(tmp_path)), "--out", str(out), "--emit", "fig-trace"]) == 0
    printed = json.loads(capsys.readouterr().out)
    summary = json.loads((out / "summary.json").read_text())
    assert printed["jct"] == summary["jct"] and not summary["aborted"]
    events = [json.loads(line) for line in (out / "events.jsonl").read_text().splitlines()]
    assert events[0]["kind"] == "run_start" and events[-1]["kind"] == "run_end"
    assert (out / "iterations.csv").read_bytes().startswith(b"t,node,bpt,batch_size\r\n")


def test_same_seed_same_bytes(tmp_path):
    cfg = small_cfg_file(tmp_path)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--set", "seed=7", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "events.jsonl").read_bytes() == (tmp_path / "b" / "events.jsonl").read_bytes()
    assert main(["run", "--config", str(cfg), "--set", "seed=8", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "events.jsonl").read_bytes() != (tmp_path / "c" / "events.jsonl").read_bytes()


def test_env_seed_is_overridden_by_set(tmp_path, monkeypatch):
    cfg = small_cfg_file(tmp_path)
    monkeypatch.setenv("ANTDT_SEED", "3")
    main(["run", "--config", str(cfg), "--set", "seed=5", "--out", str(tmp_path / "a")])
    assert json.loads((tmp_path / "a" / "config.json").read_text())["seed"] == 5
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert json.loads((tmp_path / "b" / "config.json").read_text())["seed"] == 3


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = small_cfg_file(tmp_path)
    assert main(["run", "--config", str(cfg), "--set", "detection.lambda=1.0"]) == 2
    assert "lambda must exceed 1" in capsys.readouterr().err
    assert main(["run", "--config", str(cfg), "--set", "foo.bar=1"]) == 2
    assert main(["run", "--preset", "no-such-preset"]) == 2
    assert main(["validate", "--config", str(cfg)]) == 0


def test_aborted_run_exit_code(tmp_path):
    cfg = small_cfg_file(tmp_path)
    failure = '[{"at": 0.5, "node": ["worker", 0], "cause": "ProgramError"}]'
    assert main(["run", "--config", str(cfg), "--set", f"failover.failures={failure}"]) == 3


def test_solve_commands(capsys):
    assert main(["solve", "batch", "--B", "8", "--speeds", "1,3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["objective"] == 2.0 and out["allocation"] == [[0, 2, 1], [1, 6, 1]]
    assert main(["solve", "accum", "--B", "16", "--class", "4:1:1:10", "--c-max", "5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["per_class"] == [{"batch": 4, "accum": 1}]
    assert main(["solve", "accum", "--B", "10", "--class", "4:1:8:32", "--c-max", "5"]) == 2


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(presets.PRESETS)


def test_sweep_rows_and_csv():
    cfg = ScenarioConfig(n_workers=2, n_servers=1, global_batch=8, samples=400, epochs=1)
    rows = sweep_rows(cfg, "global_batch", ["4", "8"], ["NativeBSP", "AntDtNd"], repeat=2, jobs=1)
    assert len(rows) == 4
    assert {(r["value"], r["policy"]) for r in rows} == {(v, p) for v in ("4", "8") for p in ("NativeBSP", "AntDtNd")}
    text = rows_to_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert len(parsed) == 4 and text.endswith("\r\n")
    # without stragglers the seed only reorders shards, so the spread is zero
    assert all(float(r["jct_std"]) == 0.0 for r in parsed)


def test_sweep_single_repeat_has_zero_spread(tmp_path):
    cfg = small_cfg_file(tmp_path)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(cfg), "--axis", "intensity=0.1,0.5", "--policies", "NativeBSP",
                 "--repeat", "1", "--jobs", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 2 and all(float(r["jct_std"]) == 0.0 for r in rows)


def test_sweep_rejects_missing_values(tmp_path):
    assert main(["sweep", "--config", str(small_cfg_file(tmp_path)), "--axis", "intensity"]) == 2
