"""Memory blocks, representative tokens and query-aware block scoring.

Every score here is a plain dot product summed over heads. Because the block
scores are double sums of dot products, they factor as a single inner
product between the summed query-side vectors and the summed representative
keys; :class:`MemoryBlock` caches the latter so a lookup over thousands of
blocks is one matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import PreconditionError

__all__ = [
    "MemoryBlock",
    "RepresentativeScore",
    "BlockScore",
    "LookupRequest",
    "ScoreTable",
    "QueryScoreMemo",
    "BlockScorer",
    "representative_scores",
    "accumulate_representative_scores",
    "finalize_block",
    "score_block_query",
    "score_block_current",
    "select_top",
    "lookup",
]


@dataclass(frozen=True, eq=False)
class MemoryBlock:
    block_id: int
    layer: int
    token_range: tuple[int, int]
    keys: np.ndarray  # [l_b_actual, n_heads, d_head]
    values: np.ndarray
    representative_keys: np.ndarray  # [n_r_actual, n_heads, d_head]
    representative_indices: np.ndarray
    finalized: bool = True
    representative_sum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.keys.shape[0]
        if self.values.shape != self.keys.shape:
            raise PreconditionError("keys and values must share one shape")
        if self.token_range[1] - self.token_range[0] != n:
            raise PreconditionError(f"token_range {self.token_range} does not span {n} tokens")
        idx = np.asarray(self.representative_indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= n):
            raise PreconditionError("representative_indices must be strictly increasing and in range")
        object.__setattr__(self, "representative_indices", idx)
        rep = self.representative_keys
        total = rep.reshape(rep.shape[0], -1).astype(np.float64).sum(axis=0)
        total.setflags(write=False)
        object.__setattr__(self, "representative_sum", total)

    @property
    def size(self) -> int:
        return self.keys.shape[0]


@dataclass(frozen=True)
class RepresentativeScore:
    token_index: int
    score: float
    successor_count: int


@dataclass(frozen=True)
class BlockScore:
    block_id: int
    s_query: float
    s_current: float
    combined: float


@dataclass
class LookupRequest:
    layer: int
    query_token_queries: np.ndarray  # [l_Q, n_heads, d_head], l_Q may be 0
    current_queries: np.ndarray  # [l_H, n_heads, d_head]
    n_b: int
    beta: float = 1.0

    def __post_init__(self):
        if self.current_queries.shape[0] < 1:
            raise PreconditionError("a lookup needs at least one current token")
        if self.n_b < 0:
            raise PreconditionError("n_b must be non-negative")
        if not self.beta >= 0:
            raise PreconditionError(f"beta must be non-negative, got {self.beta}")


# --------------------------------------------------------------------------
# Representative tokens
# --------------------------------------------------------------------------

def _flat(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return x.reshape(x.shape[0], -1).astype(np.float64)


def representative_scores(keys: np.ndarray, successor_queries: np.ndarray,
                          local_window: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised representative scores.

    ``successor_queries[t]`` is the query vector of the token right after
    block token ``t``; the array may run past the block end. Token ``i`` is
    scored by the mean of ``successor_queries[i:i + local_window] . k_i``.
    Returns ``(scores, counts)``; a token with no successor gets ``-inf``.
    """
    k = _flat(keys)
    n = k.shape[0]
    q = _flat(successor_queries) if len(successor_queries) else np.zeros((0, k.shape[1]))
    m = q.shape[0]
    dots = k @ q.T  # [n, m]
    i = np.arange(n)[:, None]
    t = np.arange(m)[None, :]
    window = (t >= i) & (t < i + local_window)
    counts = window.sum(axis=1)
    totals = np.where(window, dots, 0.0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(counts > 0, totals / np.maximum(counts, 1), -np.inf)
    return scores, counts


def accumulate_representative_scores(keys: np.ndarray, successor_queries: np.ndarray,
                                     local_window: int) -> list[RepresentativeScore]:
    scores, counts = representative_scores(keys, successor_queries, local_window)
    return [RepresentativeScore(i, float(s), int(c)) for i, (s, c) in enumerate(zip(scores, counts))]


def finalize_block(keys: np.ndarray, values: np.ndarray,
                   scores: Sequence[RepresentativeScore] | np.ndarray, n_r: int, *,
                   block_id: int = 0, layer: int = 0, start: int = 0) -> MemoryBlock:
    """Freeze a block, keeping its ``n_r`` highest-scoring tokens as representatives.

    Ties go to the lower token index. The chosen indices are stored in
    ascending order.
    """
    n = keys.shape[0]
    if n == 0:
        raise PreconditionError("cannot finalize an empty block")
    if n_r < 1:
        raise PreconditionError("n_r must be at least 1")
    if len(scores) and isinstance(scores[0], RepresentativeScore):
        scores = np.array([s.score for s in scores], dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (n,):
        raise PreconditionError(f"expected {n} scores, got {scores.shape}")
    order = np.lexsort((np.arange(n), -scores))
    chosen = np.sort(order[: min(n_r, n)])
    return MemoryBlock(
        block_id=block_id,
        layer=layer,
        token_range=(start, start + n),
        keys=keys,
        values=values,
        representative_keys=keys[chosen],
        representative_indices=chosen,
    )


# --------------------------------------------------------------------------
# Block scoring
# --------------------------------------------------------------------------

def _require_finalized(block: MemoryBlock) -> None:
    if not block.finalized:
        raise PreconditionError(f"block {block.block_id} is not finalized")


def _summed(queries: np.ndarray, width: int) -> np.ndarray:
    queries = np.asarray(queries)
    if queries.shape[0] == 0:
        return np.zeros(width)
    return _flat(queries).sum(axis=0)


def score_block_query(block: MemoryBlock, query_token_queries: np.ndarray) -> float:
    """Sum of dot products between every query-token vector and every representative key."""
    _require_finalized(block)
    return float(_summed(query_token_queries, block.representative_sum.size) @ block.representative_sum)


def score_block_current(block: MemoryBlock, current_queries: np.ndarray) -> float:
    _require_finalized(block)
    return float(_summed(current_queries, block.representative_sum.size) @ block.representative_sum)


class ScoreTable:
    """Column-oriented block scores that reads like a sequence of BlockScore."""

    def __init__(self, block_ids, s_query, s_current, beta: float):
        self.block_ids = np.asarray(block_ids, dtype=np.int64)
        self.s_query = np.asarray(s_query, dtype=np.float64)
        self.s_current = np.asarray(s_current, dtype=np.float64)
        self.beta = float(beta)
        self.combined = self.s_current + self.beta * self.s_query

    def __len__(self) -> int:
        return self.block_ids.size

    def __getitem__(self, i: int) -> BlockScore:
        return BlockScore(int(self.block_ids[i]), float(self.s_query[i]),
                          float(self.s_current[i]), float(self.combined[i]))

    def __iter__(self) -> Iterator[BlockScore]:
        return (self[i] for i in range(len(self)))

    def by_id(self, block_id: int) -> BlockScore:
        hit = np.flatnonzero(self.block_ids == block_id)
        if hit.size == 0:
            raise KeyError(block_id)
        return self[int(hit[0])]


class QueryScoreMemo:
    """Caches query relevance per block for one (query, layer) pair.

    The query term never changes once the query segment is encoded, so each
    block's value is computed the first time the block is seen.
    """

    def __init__(self, query_token_queries: np.ndarray):
        q = np.asarray(query_token_queries)
        self.query_sum = _summed(q, int(np.prod(q.shape[1:])) if q.ndim > 1 else 0)
        self._ids = np.zeros(0, dtype=np.int64)
        self._values = np.zeros(0)
        self._by_id: dict[int, float] = {}
        self.computed = 0

    def get(self, block: MemoryBlock) -> float:
        value = self._by_id.get(block.block_id)
        if value is None:
            value = float(self.query_sum @ block.representative_sum)
            self._by_id[block.block_id] = value
            self.computed += 1
        return value

    def get_many(self, block_ids: np.ndarray, rep_sums: np.ndarray) -> np.ndarray:
        n_known = self._ids.size
        if block_ids.size >= n_known and np.array_equal(block_ids[:n_known], self._ids):
            fresh = rep_sums[n_known:] @ self.query_sum if self.query_sum.size else np.zeros(block_ids.size - n_known)
            self.computed += fresh.size
            self._ids = block_ids.copy()
            self._values = np.concatenate([self._values, fresh])
            self._by_id.update(zip(block_ids[n_known:].tolist(), fresh.tolist()))
            return self._values
        out = np.empty(block_ids.size)
        for i, bid in enumerate(block_ids.tolist()):
            value = self._by_id.get(bid)
            if value is None:
                value = float(self.query_sum @ rep_sums[i]) if self.query_sum.size else 0.0
                self._by_id[bid] = value
                self.computed += 1
            out[i] = value
        return out


class BlockScorer:
    """Scores blocks for one lookup request.

    Works either block by block (:meth:`score_block`) or on a stacked matrix
    of representative-key sums (:meth:`score_stack`), which is what the
    resident index hands out.
    """

    def __init__(self, request: LookupRequest, memo: QueryScoreMemo | None = None):
        self.request = request
        self.memo = memo if memo is not None else QueryScoreMemo(request.query_token_queries)
        self.current_sum = _flat(request.current_queries).sum(axis=0)

    def score_block(self, block: MemoryBlock) -> BlockScore:
        _require_finalized(block)
        s_q = self.memo.get(block)
        s_c = float(self.current_sum @ block.representative_sum)
        return BlockScore(block.block_id, s_q, s_c, s_c + self.request.beta * s_q)

    def score_stack(self, block_ids: np.ndarray, rep_sums: np.ndarray) -> ScoreTable:
        block_ids = np.asarray(block_ids, dtype=np.int64)
        if block_ids.size == 0:
            return ScoreTable([], [], [], self.request.beta)
        s_c = rep_sums @ self.current_sum
        s_q = self.memo.get_many(block_ids, rep_sums)
        return ScoreTable(block_ids, s_q, s_c, self.request.beta)


def select_top(table: ScoreTable, n_b: int, starts: np.ndarray | None = None) -> list[int]:
    """Top ``n_b`` ids by combined score, ties to the lower id.

    The result is ordered by block start position (``starts``), falling back
    to id order, so retrieved blocks land in the cache in context order.
    """
    if n_b <= 0 or len(table) == 0:
        return []
    order = np.lexsort((table.block_ids, -table.combined))[:n_b]
    if starts is None:
        starts = table.block_ids
    picked = order[np.lexsort((table.block_ids[order], np.asarray(starts)[order]))]
    return table.block_ids[picked].tolist()


def lookup(blocks: Iterable[MemoryBlock], request: LookupRequest,
           memo: QueryScoreMemo | None = None) -> tuple[list[int], ScoreTable]:
    """Select the ``n_b`` best blocks for ``request``.

    Returns the chosen ids in ascending context order together with the
    full score table.
    """
    blocks = list(blocks)
    for block in blocks:
        _require_finalized(block)
        if block.layer != request.layer:
            raise PreconditionError(f"block {block.block_id} belongs to layer {block.layer}")
    scorer = BlockScorer(request, memo)
    if not blocks:
        return [], ScoreTable([], [], [], request.beta)
    ids = np.array([b.block_id for b in blocks], dtype=np.int64)
    rep_sums = np.stack([b.representative_sum for b in blocks])
    starts = np.array([b.token_range[0] for b in blocks], dtype=np.int64)
    table = scorer.score_stack(ids, rep_sums)
    return select_top(table, request.n_b, starts), table
