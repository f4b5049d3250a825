"""Slow, independent reference implementations.

Nothing here imports the code paths it is used to check: attention is a
scalar double loop, the dense forward uses absolute-position rotary
embedding instead of a distance matrix, and the LRU reference is a plain
list scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import ToyModel


def rotate_pair(x: float, y: float, angle: float) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    return x * c - y * s, x * s + y * c


def naive_rotate(vec, distance: int, rope_base: float) -> list[float]:
    d = len(vec)
    out = [0.0] * d
    for i in range(d // 2):
        angle = distance * rope_base ** (-2.0 * i / d)
        out[2 * i], out[2 * i + 1] = rotate_pair(float(vec[2 * i]), float(vec[2 * i + 1]), angle)
    return out


def naive_attention(q, k, v, distances, mask, rope_base: float) -> np.ndarray:
    """Per-query, per-head softmax attention with explicit loops."""
    n_q, n_heads, d_head = q.shape
    n_k = k.shape[0]
    out = np.zeros((n_q, n_heads, d_head))
    for i in range(n_q):
        for h in range(n_heads):
            logits = []
            for j in range(n_k):
                if not mask[i, j]:
                    continue
                kr = naive_rotate(k[j, h], int(distances[i, j]), rope_base)
                dot = sum(float(q[i, h, t]) * kr[t] for t in range(d_head))
                logits.append((j, dot / math.sqrt(d_head)))
            top = max(s for _, s in logits)
            weights = [(j, math.exp(s - top)) for j, s in logits]
            total = sum(w for _, w in weights)
            for j, w in weights:
                out[i, h] += (w / total) * v[j, h].astype(np.float64)
    return out


def _rope_abs(x: np.ndarray, positions: np.ndarray, rope_base: float) -> np.ndarray:
    d = x.shape[-1]
    freqs = rope_base ** (-np.arange(0, d, 2) / d)
    ang = positions[:, None, None] * freqs[None, None, :]
    c, s = np.cos(ang), np.sin(ang)
    out = np.empty_like(x)
    out[..., 0::2] = x[..., 0::2] * c - x[..., 1::2] * s
    out[..., 1::2] = x[..., 0::2] * s + x[..., 1::2] * c
    return out


def reference_forward(model: ToyModel, tokens) -> tuple[np.ndarray, np.ndarray]:
    """Monolithic causal forward pass; returns (hidden, logits) in float64.

    Rotary embedding is applied the textbook way: query i is rotated by -i
    and key j by -j, so their dot product sees a rotation by i - j.
    """
    cfg = model.config
    w = {name: arr.astype(np.float64) for name, arr in model.weights.items()}
    tokens = np.asarray(tokens)
    n = len(tokens)
    pos = np.arange(n, dtype=np.float64)

    def norm(x):
        return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + 1e-6)

    h = w["embed"][tokens]
    causal = np.tril(np.ones((n, n), dtype=bool))
    for layer in range(cfg.n_layers):
        x = norm(h)
        q = (x @ w[f"layers.{layer}.w_q"]).reshape(n, cfg.n_heads, cfg.d_head)
        k = (x @ w[f"layers.{layer}.w_k"]).reshape(n, cfg.n_heads, cfg.d_head)
        v = (x @ w[f"layers.{layer}.w_v"]).reshape(n, cfg.n_heads, cfg.d_head)
        qr = _rope_abs(q, -pos, cfg.rope_base)
        kr = _rope_abs(k, -pos, cfg.rope_base)
        att = np.zeros((n, cfg.n_heads, cfg.d_head))
        for head in range(cfg.n_heads):
            s = qr[:, head] @ kr[:, head].T / math.sqrt(cfg.d_head)
            s = np.where(causal, s, -np.inf)
            p = np.exp(s - s.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            att[:, head] = p @ v[:, head]
        h = h + att.reshape(n, cfg.d_model) @ w[f"layers.{layer}.w_o"]
        u = norm(h) @ w[f"layers.{layer}.w_up"]
        g = 0.5 * u * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (u + 0.044715 * u ** 3)))
        h = h + g @ w[f"layers.{layer}.w_down"]
    logits = norm(h) @ w["w_out"]
    return h, logits


def reference_greedy(model: ToyModel, prompt, steps: int) -> tuple[list[int], np.ndarray]:
    """Greedy decoding by re-running the monolithic forward every step.

    Returns the generated ids and the hidden states of prompt + generated
    tokens (the last generated token included).
    """
    seq = [int(t) for t in prompt]
    out = []
    for _ in range(steps):
        _, logits = reference_forward(model, seq)
        token = int(np.argmax(logits[-1]))
        out.append(token)
        seq.append(token)
    hidden, _ = reference_forward(model, seq)
    return out, hidden


def _rows(x) -> list[list[float]]:
    arr = np.asarray(x, dtype=np.float64)
    return arr.reshape(arr.shape[0], -1).tolist() if arr.shape[0] else []


def scalar_dot_sum(left, right) -> float:
    """sum_i sum_j left[i] . right[j] over flattened per-head vectors, by loops."""
    total = 0.0
    right = _rows(right)
    for a in _rows(left):
        for b in right:
            for x, y in zip(a, b):
                total += x * y
    return total


def brute_representative_scores(keys, successor_queries, local_window: int) -> list[float]:
    """Mean key/query dot product over each token's next ``local_window`` successors.

    ``successor_queries[t]`` belongs to the token right after block token ``t``.
    """
    keys = _rows(keys)
    succ = _rows(successor_queries)
    out = []
    for i, k in enumerate(keys):
        total, count = 0.0, 0
        for j in range(1, local_window + 1):
            t = i + j - 1
            if t >= len(succ):
                break
            for x, y in zip(succ[t], k):
                total += x * y
            count += 1
        out.append(total / count if count else float("-inf"))
    return out


def sort_then_take(scores, n: int) -> list[int]:
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(ranked[:n])


def exhaustive_top(ids, combined, n_b: int) -> set[int]:
    pairs = sorted(zip(ids, combined), key=lambda p: (-p[1], p[0]))
    return {i for i, _ in pairs[:n_b]}


@dataclass
class LruEvent:
    block_id: int
    hit: bool
    evicted: int | None


def reference_lru(trace, capacity: int) -> list[LruEvent]:
    """Textbook LRU over a list ordered oldest -> newest."""
    resident: list[int] = []
    events = []
    for bid in trace:
        if bid in resident:
            resident.remove(bid)
            resident.append(bid)
            events.append(LruEvent(bid, True, None))
            continue
        evicted = None
        if len(resident) >= capacity:
            evicted = resident.pop(0)
        resident.append(bid)
        events.append(LruEvent(bid, False, evicted))
    return events
