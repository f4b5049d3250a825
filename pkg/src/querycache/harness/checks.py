"""Mechanism-level oracle checks, shared by the ``oracle-check`` subcommand and the tests.

Each check draws its random instances from one seed and compares the
library against the slow references in :mod:`querycache.harness.oracles`.
Results carry no wall-clock numbers, so a check report is a pure function
of its seed and sizes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..blocks import (LookupRequest, MemoryBlock, finalize_block, lookup, representative_scores,
                      score_block_current, score_block_query)
from ..engine import EngineConfig, SegmentedPrompt, start_session
from ..model import ModelConfig, ToyModel, build_toy_model
from ..tiers import BlockStore, TierConfig
from .oracles import (brute_representative_scores, exhaustive_top, reference_forward,
                      reference_lru, scalar_dot_sum, sort_then_take)

__all__ = ["CheckResult", "check_dense_equivalence", "check_scoring", "check_lru",
           "run_oracle_checks", "DENSE_TOLERANCE", "SCORE_TOLERANCE"]

DENSE_TOLERANCE = 1e-5
SCORE_TOLERANCE = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    failures: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(float(np.max(np.abs(expected))), 1e-30)
    return float(np.max(np.abs(np.asarray(actual, dtype=np.float64) - expected))) / scale


def check_dense_equivalence(model: ToyModel, *, prompts: int = 50, decode_tokens: int = 16,
                            local_window: int = 256, seed: int = 0) -> CheckResult:
    """Short prompts never evict, so the engine must reproduce dense decoding.

    Prompt lengths are drawn from ``[1, local_window - decode_tokens]`` so the
    prompt plus every fed-back token stays inside the local window.
    """
    rng = np.random.default_rng(seed)
    cfg = EngineConfig(local_window=local_window, block_size=64, num_blocks=4,
                       chunk_size=min(64, local_window))
    max_len = local_window - decode_tokens
    if max_len < 1:
        raise ValueError("decode_tokens leaves no room for a prompt")
    worst = 0.0
    failures = []
    for i in range(prompts):
        n = int(rng.integers(1, max_len + 1))
        tokens = rng.integers(0, model.config.vocab_size, n)
        session = start_session(model, cfg, SegmentedPrompt(context_tokens=tokens), keep_hidden=True)
        session.prefill(tokens)
        got = session.decode(decode_tokens).tokens
        # the forward pass is causal, so one reference pass over prompt plus
        # engine output checks every greedy step: each emitted token must be
        # the argmax of the reference logits at the position before it
        hidden, logits = reference_forward(model, np.concatenate([tokens, got]))
        want = np.argmax(logits[n - 1:n - 1 + decode_tokens], axis=1).tolist()
        err = relative_error(session.all_hidden(), hidden)
        worst = max(worst, err)
        if got != want or err > DENSE_TOLERANCE or session.num_blocks_finalized:
            failures.append({"prompt": i, "length": n, "tokens_match": got == want,
                             "relative_error": err})
    return CheckResult("dense_equivalence", not failures, prompts, failures,
                       {"max_relative_error": worst, "tolerance": DENSE_TOLERANCE})


def _random_instance(rng: np.random.Generator) -> dict:
    n_heads = int(rng.integers(1, 3))
    d_head = 2 * int(rng.integers(1, 5))
    n_blocks = int(rng.integers(1, 17))
    shape = (n_heads, d_head)
    return {
        "shape": shape,
        "n_blocks": n_blocks,
        "block_size": int(rng.integers(1, 9)),
        "n_r": int(rng.integers(1, 5)),
        "local_window": int(rng.integers(1, 5)),
        "n_b": int(rng.integers(0, n_blocks + 1)),
        "beta": 0.0 if rng.random() < 0.2 else float(rng.uniform(0, 4)),
        "query": rng.standard_normal((int(rng.integers(0, 4)),) + shape),
        "current": rng.standard_normal((int(rng.integers(1, 4)),) + shape),
    }


def check_scoring(*, instances: int = 1000, seed: int = 0) -> CheckResult:
    """Representative scores, block scores and top-n selection against loop oracles."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    for case in range(instances):
        inst = _random_instance(rng)
        shape, lb, lw = inst["shape"], inst["block_size"], inst["local_window"]
        blocks: list[MemoryBlock] = []
        problems = []
        for b in range(inst["n_blocks"]):
            keys = rng.standard_normal((lb,) + shape).astype(np.float32)
            values = rng.standard_normal((lb,) + shape).astype(np.float32)
            succ = rng.standard_normal((lb - 1 + lw,) + shape)[: int(rng.integers(0, lb + lw))]
            fast, _ = representative_scores(keys, succ, lw)
            slow = brute_representative_scores(keys, succ, lw)
            finite = np.isfinite(slow)
            if not np.array_equal(np.isfinite(fast), finite):
                problems.append(f"block {b}: representative -inf pattern differs")
            elif finite.any():
                err = float(np.max(np.abs(fast[finite] - np.asarray(slow)[finite])))
                worst = max(worst, err)
                if err > SCORE_TOLERANCE:
                    problems.append(f"block {b}: representative score error {err:.3g}")
            block = finalize_block(keys, values, fast, inst["n_r"], block_id=b, layer=0, start=b * lb)
            chosen = sort_then_take(slow, inst["n_r"])
            if block.representative_indices.tolist() != chosen:
                problems.append(f"block {b}: representatives {block.representative_indices.tolist()} != {chosen}")
            blocks.append(block)
        request = LookupRequest(0, inst["query"], inst["current"], inst["n_b"], inst["beta"])
        selected, table = lookup(blocks, request)
        combined = []
        for block, row in zip(blocks, table):
            s_q = scalar_dot_sum(inst["query"], block.representative_keys)
            s_c = scalar_dot_sum(inst["current"], block.representative_keys)
            c = s_c + inst["beta"] * s_q
            combined.append(c)
            err = max(abs(row.s_query - s_q), abs(row.s_current - s_c), abs(row.combined - c),
                      abs(score_block_query(block, inst["query"]) - s_q),
                      abs(score_block_current(block, inst["current"]) - s_c))
            worst = max(worst, err)
            if err > SCORE_TOLERANCE:
                problems.append(f"block {block.block_id}: block score error {err:.3g}")
        expected = exhaustive_top([b.block_id for b in blocks], combined, inst["n_b"])
        if set(selected) != expected:
            problems.append(f"selected {sorted(selected)} != exhaustive {sorted(expected)}")
        if selected != sorted(selected):
            problems.append("selection not in context order")
        if problems:
            failures.append({"instance": case, "problems": problems})
    return CheckResult("scoring", not failures, instances, failures,
                       {"max_abs_error": worst, "tolerance": SCORE_TOLERANCE})


def _dummy_block(block_id: int) -> MemoryBlock:
    z = np.zeros((1, 1, 2), dtype=np.float32)
    return MemoryBlock(block_id, 0, (block_id, block_id + 1), z, z, z, np.array([0]))


def check_lru(*, traces: int = 100, fetches: int = 200, capacity: int = 8, universe: int = 16,
              seed: int = 0) -> CheckResult:
    """Hit/miss/eviction sequences of the block store against a list-based LRU."""
    rng = np.random.default_rng(seed)
    failures = []
    for t in range(traces):
        trace = rng.integers(0, universe, fetches).tolist()
        store = BlockStore(TierConfig(capacity))
        for b in range(universe):
            store.admit(_dummy_block(b))
        got = []
        for bid in trace:
            res = store.fetch([bid])
            got.append((bid, res.hits[0], res.evicted[0] if res.evicted else None))
        want = [(e.block_id, e.hit, e.evicted) for e in reference_lru(trace, capacity)]
        hits = sum(e[1] for e in want)
        evictions = sum(e[2] is not None for e in want)
        stats = store.stats
        stats_ok = (stats.hits, stats.misses, stats.evictions) == (hits, fetches - hits, evictions)
        if got != want or not stats_ok or stats.peak_hot_blocks > capacity:
            first = next((i for i, (a, b) in enumerate(zip(got, want)) if a != b), None)
            failures.append({"trace": t, "first_divergence": first, "stats_ok": stats_ok})
    return CheckResult("lru", not failures, traces, failures,
                       {"fetches_per_trace": fetches, "capacity": capacity})


def run_oracle_checks(seed: int = 0, model: ToyModel | None = None, *, prompts: int = 50,
                      instances: int = 1000, traces: int = 100) -> list[CheckResult]:
    model = model or build_toy_model(ModelConfig(seed=seed))
    return [
        check_dense_equivalence(model, prompts=prompts, seed=seed),
        check_scoring(instances=instances, seed=seed),
        check_lru(traces=traces, seed=seed),
    ]
