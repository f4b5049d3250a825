import warnings

import numpy as np
import pytest

from querycache import ConfigurationError, EngineConfig, InternalError
from querycache.harness import experiment
from querycache.harness.experiment import (PolicySpec, needle_grid, recall_from_trace,
                                           run_experiment, selection_heatmap, sweep)
from querycache.harness.workload import WorkloadSpec

CFG = EngineConfig(local_window=128, block_size=32, chunk_size=64, num_blocks=4)


def _spec(**kw):
    # 20 finalized blocks
    base = dict(kind="planted-needle", context_length=128 + 20 * 32, needle_depth=0.5,
                needle_alignment=0.9, seed=0, decode_tokens=4)
    base.update(kw)
    return WorkloadSpec(**base)


def test_policy_validation():
    with pytest.raises(ConfigurationError):
        PolicySpec("oracle")
    with pytest.raises(ConfigurationError):
        PolicySpec("qllm", -1.0)


def test_policy_application():
    assert PolicySpec("qllm", 2.0).apply(CFG).beta == 2.0
    assert PolicySpec("current-only", 2.0).apply(CFG).beta == 0.0
    local = PolicySpec("local-only").apply(CFG)
    assert local.num_blocks == 0 and local.beta == 0.0
    assert PolicySpec("current-only", 3.0).to_dict() == {"name": "current-only", "beta": 0.0}


def test_local_only_recall_is_zero(model):
    report = run_experiment(_spec(repetitions=2), PolicySpec("local-only"), CFG, model)
    assert report.recalls == [0.0, 0.0]
    assert all(not r.selected for rep in report.repetitions for r in rep.trace)


def test_current_only_equals_qllm_at_beta_zero(model):
    a = run_experiment(_spec(), PolicySpec("current-only"), CFG, model)
    b = run_experiment(_spec(), PolicySpec("qllm", 0.0), CFG, model)
    assert [r.selected for r in a.repetitions[0].trace] == [r.selected for r in b.repetitions[0].trace]


def test_report_recall_recomputable_from_trace(model):
    report = run_experiment(_spec(repetitions=3), PolicySpec("qllm", 1.0), CFG, model)
    for rep in report.repetitions:
        assert 0.0 <= rep.recall <= 1.0
        assert rep.recall == recall_from_trace(rep.trace, rep.ground_truth_block)
        np.testing.assert_array_equal(rep.heatmap, selection_heatmap(rep.trace, rep.blocks_finalized))
    assert report.mean_recall == pytest.approx(np.mean(report.recalls))
    assert [r.seed for r in report.repetitions] == [0, 1, 2]


def test_recall_without_ground_truth_is_none():
    assert recall_from_trace([], None) is None
    assert recall_from_trace([], 3) == 0.0


def test_heatmap_shape_ten_steps_twenty_blocks(model):
    report = run_experiment(_spec(decode_tokens=10), PolicySpec("qllm"), CFG, model)
    rep = report.repetitions[0]
    assert rep.blocks_finalized == 20
    assert rep.heatmap.shape == (10, 20)
    # every (step, layer) lookup contributes n_b selections
    np.testing.assert_array_equal(rep.heatmap.sum(axis=1), model.config.n_layers * CFG.num_blocks)


def test_beta_sweep_rows_and_ordering(model):
    rows = sweep("beta", [0, 1, 2, 4], CFG, _spec(repetitions=5), model)
    assert [r.value for r in rows] == [0.0, 1.0, 2.0, 4.0]
    assert not any(r.skipped for r in rows)
    assert rows[1].mean_recall >= rows[0].mean_recall


def test_beta_sweep_overrides_policy_beta(model):
    rows = sweep("beta", [0.0], CFG, _spec(), model, PolicySpec("qllm", 4.0))
    base = run_experiment(_spec(), PolicySpec("qllm", 0.0), CFG, model)
    assert rows[0].recalls == base.recalls


def test_num_repr_sweep_is_deterministic(model):
    a = sweep("num_repr", [1, 2, 4, 8], CFG, _spec(), model)
    b = sweep("num_repr", [1, 2, 4, 8], CFG, _spec(), model)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_fixed_window_grid_keeps_both_rows(model):
    base = CFG.with_(block_size=64, num_blocks=4)
    spec = _spec(context_length=128 + 20 * 64)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rows = sweep("block_size_x_num_blocks", [(32, 8), (64, 4)], base, spec, model)
    assert [r.value for r in rows] == [(32, 8), (64, 4)]
    assert not any(r.skipped for r in rows)
    assert rows[0].to_dict()["value"] == [32, 8]


def test_infeasible_grid_point_becomes_warning_row(model):
    with pytest.warns(UserWarning, match="skipping"):
        rows = sweep("block_size_x_num_blocks", [(32, 4), (32, 8)], CFG, _spec(), model)
    assert not rows[0].skipped
    assert rows[1].skipped and rows[1].mean_recall is None and "fixed window" in rows[1].warning


def test_sweep_rejects_empty_or_unknown_grid(model):
    with pytest.raises(ConfigurationError):
        sweep("beta", [], CFG, _spec(), model)
    with pytest.raises(ConfigurationError):
        sweep("rope_base", [1], CFG, _spec(), model)


def test_needle_grid_rows(model):
    with pytest.warns(UserWarning):
        rows = needle_grid([128 + 8 * 32, 100], [0.0, 1.0], _spec(), PolicySpec("qllm"), CFG, model)
    assert [(r["context_length"], r["needle_depth"]) for r in rows] == [
        (384, 0.0), (384, 1.0), (100, 0.0), (100, 1.0)]
    assert all(0.0 <= r["mean_recall"] <= 1.0 for r in rows[:2])
    assert all(r["skipped"] for r in rows[2:])


def test_engine_errors_carry_the_workload_seed(model, monkeypatch):
    class Broken:
        def __init__(self, *a, **kw):
            pass

        def prefill(self, tokens):
            raise InternalError("store corrupted")

    monkeypatch.setattr(experiment, "start_session", Broken)
    with pytest.raises(InternalError, match="workload seed 7: store corrupted"):
        run_experiment(_spec(seed=7), PolicySpec("qllm"), CFG, model)
