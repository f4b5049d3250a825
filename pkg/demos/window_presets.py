"""The three context-window presets on one 8K-token stream.

For each preset prints its shape (local window, block size, block count),
the bound on attended tokens, the peak actually reached, hot-tier
traffic and wall time. Attended tokens never exceed the budget no matter
how long the stream grows.
"""

import time

import numpy as np

from querycache import WINDOW_PRESETS, EngineConfig, ModelConfig, SegmentedPrompt, build_toy_model, start_session

model = build_toy_model(ModelConfig())
rng = np.random.default_rng(0)
context = rng.integers(0, 512, 8192)
query = rng.integers(0, 512, 8)
glob = rng.integers(0, 512, 16)

print(f"{'window':>6} {'l_L':>5} {'l_b':>4} {'n_b':>3} {'budget':>6} {'peak':>5} "
      f"{'blocks':>6} {'hit rate':>8} {'peak hot':>8} {'secs':>5}")
for window in WINDOW_PRESETS:
    cfg = EngineConfig.preset(window)
    t0 = time.perf_counter()
    s = start_session(model, cfg, SegmentedPrompt(glob, query, context))
    s.prefill(context)
    s.decode(8)
    st = s.cache_stats()
    hit = st.hits / max(1, st.hits + st.misses)
    print(f"{window:6d} {cfg.local_window:5d} {cfg.block_size:4d} {cfg.num_blocks:3d} "
          f"{cfg.window_budget(len(query)):6d} {s.peak_cache_tokens:5d} {s.num_blocks_finalized:6d} "
          f"{hit:8.2f} {s.peak_hot_blocks():8d} {time.perf_counter() - t0:5.1f}")
