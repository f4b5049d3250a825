import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from querycache import ConfigurationError, EngineConfig, GenerationError
from querycache.harness.workload import (WorkloadSpec, cosine, first_layer_tables,
                                         generate_workload, orthogonal_query_pair)

CFG = EngineConfig(local_window=128, block_size=32, chunk_size=64, num_blocks=4)


def _needle(**kw):
    base = dict(kind="planted-needle", context_length=64 * 32 + 128, needle_depth=0.5,
                needle_alignment=0.9, seed=0)
    base.update(kw)
    return WorkloadSpec(**base)


def _measured_alignment(model, w):
    q_table, k_table = first_layer_tables(model)
    start, end = w.needle_span
    needle_keys = k_table[w.prompt.context_tokens[start:end]]
    return cosine(q_table[w.prompt.query_tokens].mean(axis=0), needle_keys.mean(axis=0))


def test_needle_fields_required_for_planted_needle():
    with pytest.raises(ConfigurationError):
        WorkloadSpec(kind="planted-needle")


def test_needle_fields_rejected_for_other_kinds():
    with pytest.raises(ConfigurationError):
        WorkloadSpec(kind="random-context", needle_depth=0.5)


@pytest.mark.parametrize("changes", [{"context_length": 0}, {"kind": "essay"},
                                     {"needle_depth": 1.5}, {"needle_alignment": 2.0},
                                     {"repetitions": 0}])
def test_invalid_specs(changes):
    with pytest.raises(ConfigurationError):
        _needle(**changes)


def test_depth_zero_occupies_first_block(model):
    w = generate_workload(_needle(needle_depth=0.0), model, CFG)
    assert w.ground_truth_block == 0 and w.needle_span == (0, 32)


def test_depth_one_is_clamped_to_last_finalized_block(model):
    w = generate_workload(_needle(needle_depth=1.0), model, CFG)
    assert w.ground_truth_block == 63


def test_same_seed_same_workload(model):
    a = generate_workload(_needle(seed=5), model, CFG)
    b = generate_workload(_needle(seed=5), model, CFG)
    for name in ("global_tokens", "query_tokens", "context_tokens", "continuation_tokens"):
        np.testing.assert_array_equal(getattr(a.prompt, name), getattr(b.prompt, name))
    assert a.ground_truth_block == b.ground_truth_block
    c = generate_workload(_needle(seed=6), model, CFG)
    assert not np.array_equal(a.prompt.context_tokens, c.prompt.context_tokens)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(0, 1), st.sampled_from([0.5, 0.8, 0.9]))
def test_measured_alignment_meets_target(model, seed, depth, alignment):
    w = generate_workload(_needle(seed=seed, needle_depth=depth, needle_alignment=alignment), model, CFG)
    assert _measured_alignment(model, w) >= alignment - 1e-9
    assert w.alignment >= alignment
    # the needle is a whole block of one token, absent everywhere else in the prompt
    token = w.diagnostics["needle_token"]
    start, end = w.needle_span
    assert np.all(w.prompt.context_tokens[start:end] == token)
    assert np.count_nonzero(w.prompt.context_tokens == token) == end - start
    assert token not in w.prompt.global_tokens
    # distractors never reuse query tokens
    others = np.delete(w.prompt.context_tokens, np.arange(start, end))
    assert not np.isin(others, w.prompt.query_tokens).any()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_needle_free_query_reaches_target_without_the_needle_token(model, seed):
    w = generate_workload(_needle(seed=seed, needle_in_query=False, query_length=24), model, CFG)
    assert w.diagnostics["needle_token"] not in w.prompt.query_tokens
    assert _measured_alignment(model, w) >= 0.9 - 1e-9


def test_unattainable_alignment_reports_diagnostic(model):
    with pytest.raises(GenerationError, match="unattainable"):
        generate_workload(_needle(needle_alignment=0.99, query_length=2, needle_in_query=False),
                          model, CFG)


def test_context_without_finalized_block_is_generation_error(model):
    with pytest.raises(GenerationError):
        generate_workload(_needle(context_length=100), model, CFG)


def test_global_segment_over_budget(model):
    with pytest.raises(ConfigurationError):
        generate_workload(_needle(global_length=200), model, CFG)


def test_kv_retrieval_ground_truth_block(model):
    spec = WorkloadSpec(kind="kv-retrieval", context_length=1024, seed=3, query_length=4)
    w = generate_workload(spec, model, CFG)
    start, end = w.needle_span
    key = w.diagnostics["queried_key"]
    assert np.all(w.prompt.context_tokens[start:start + 4] == key)
    assert np.all(w.prompt.query_tokens == key)
    assert w.ground_truth_block == start // CFG.block_size == (end - 1) // CFG.block_size


def test_random_and_oracle_kinds(model):
    w = generate_workload(WorkloadSpec(kind="random-context", context_length=50, seed=1), model, CFG)
    assert len(w.prompt.context_tokens) == 50 and w.ground_truth_block is None
    o = generate_workload(WorkloadSpec(kind="oracle-check", context_length=50, seed=1), model, CFG)
    assert len(o.prompt.global_tokens) == 0 and len(o.prompt.query_tokens) == 0


def test_orthogonal_query_pair(model):
    a, b, cos = orthogonal_query_pair(model, 8, 0)
    q_table, _ = first_layer_tables(model)
    assert abs(cosine(q_table[a].sum(0), q_table[b].sum(0))) < 1e-3
    assert abs(cos) < 1e-3
