import json

import pytest

from querycache import ConfigurationError
from querycache.cli import main, resolve_config, build_parser
from querycache.harness.config import parse_config

SMALL = ["--local-window", "128", "--block-size", "32", "--chunk-size", "64",
         "--context-length", str(128 + 12 * 32)]


def test_run_writes_report(tmp_path, capsys):
    rc = main(["run", *SMALL, "--seed", "2", "--out-dir", str(tmp_path)])
    assert rc == 0
    assert "mean_recall=" in capsys.readouterr().out
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["config"]["engine"]["local_window"] == 128
    assert metrics["config"]["workload"]["seed"] == 2
    assert (tmp_path / "heatmap.csv").exists() and (tmp_path / "trace.jsonl").exists()


def test_run_policy_flags(tmp_path):
    assert main(["run", *SMALL, "--policy", "local-only", "--out-dir", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["mean_recall"] == 0.0
    assert metrics["config"]["engine"]["num_blocks"] == 0


def test_sweep_pairs_with_skipped_point(tmp_path, capsys):
    rc = main(["sweep", *SMALL, "--param", "block_size_x_num_blocks", "--values", "32x4,16x8,32x8",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    assert [r["value"] for r in rows] == [[32, 4], [16, 8], [32, 8]]
    assert [r["skipped"] for r in rows] == [False, False, True]
    assert "skipped" in capsys.readouterr().out
    assert (tmp_path / "sweep.csv").read_text().startswith("parameter,value,")


def test_needle_grid(tmp_path):
    rc = main(["needle-grid", "--local-window", "128", "--block-size", "32", "--chunk-size", "64",
               "--lengths", "384", "--depths", "0,1", "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = json.loads((tmp_path / "needle_grid.json").read_text())["rows"]
    assert [(r["context_length"], r["needle_depth"]) for r in rows] == [(384, 0.0), (384, 1.0)]


def test_oracle_check_small(tmp_path, capsys):
    rc = main(["oracle-check", "--prompts", "2", "--instances", "20", "--traces", "3",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "oracle_check.json").read_text())
    assert report["passed"] and report["schema_version"] == 1
    assert [c["name"] for c in report["checks"]] == ["dense_equivalence", "scoring", "lru"]
    assert capsys.readouterr().out.count("PASS") == 3


def test_oracle_check_failure_exits_3(tmp_path, monkeypatch):
    from querycache import cli
    from querycache.harness.checks import CheckResult

    monkeypatch.setattr(cli, "run_oracle_checks",
                        lambda *a, **kw: [CheckResult("lru", False, 1, 1, "mismatch")])
    assert main(["oracle-check", "--out-dir", str(tmp_path)]) == 3
    assert json.loads((tmp_path / "oracle_check.json").read_text())["passed"] is False


@pytest.mark.parametrize("argv", [
    ["run", "--chunk-size", "0"],
    ["run", "--policy", "psychic"],
    ["run", "--bogus"],
    ["sweep", "--param", "beta", "--values", "x"],
    ["oracle-check", "--prompts", "0"],
    [],
])
def test_configuration_errors_exit_1(argv, tmp_path, capsys):
    try:
        rc = main([*argv, "--out-dir", str(tmp_path)] if argv else argv)
    except SystemExit as exc:
        rc = exc.code
    assert rc == 1


def test_runtime_error_exits_2(tmp_path, capsys):
    # needle block cannot be finalized in a 100-token context
    rc = main(["run", *SMALL[:-1], "100", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "runtime error" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"engine": {"preset": 512, "chunk_size": 32},
                                "policy": {"name": "current-only"},
                                "workload": {"context_length": 2048, "seed": 9}}))
    args = build_parser().parse_args(["run", "--config", str(path), "--num-blocks", "8", "--seed", "1"])
    cfg = resolve_config(args)
    assert (cfg.engine.local_window, cfg.engine.block_size, cfg.engine.chunk_size) == (256, 64, 32)
    assert cfg.engine.num_blocks == 8
    assert cfg.policy.name == "current-only"
    assert (cfg.workload.context_length, cfg.workload.seed) == (2048, 1)


def test_beta_flag_sets_policy_beta():
    cfg = resolve_config(build_parser().parse_args(["run", "--beta", "4"]))
    assert cfg.policy.beta == 4.0 and cfg.engine.beta == 4.0


def test_num_blocks_above_hot_capacity_raises_capacity():
    cfg = resolve_config(build_parser().parse_args(["run", "--num-blocks", "40"]))
    assert cfg.engine.hot_capacity == 40


@pytest.mark.parametrize("raw", [{"engines": {}}, {"engine": {"blocksize": 64}},
                                 {"model": {"d_model": 60}}, {"engine": {"preset": 4096}}])
def test_bad_config_objects(raw):
    with pytest.raises(ConfigurationError):
        parse_config(raw)


def test_unreadable_config_file_exits_1(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_default_config_round_trips():
    cfg = parse_config({})
    again = parse_config(cfg.to_dict())
    assert again == cfg
    assert cfg.workload.needle_depth == 0.5 and cfg.workload.needle_alignment == 0.9
