"""Which blocks two unrelated questions pull out of the same document.

Two queries with near-zero cosine are asked over one shared random
context. Printed are the per-step selection heatmaps (rows: decode steps,
columns: block ids, cells: how many layers chose that block), first with
query-aware scoring and then with beta=0, where the two runs coincide.
"""

import numpy as np

from querycache import EngineConfig, ModelConfig, SegmentedPrompt, build_toy_model, start_session
from querycache.harness.experiment import selection_heatmap
from querycache.harness.workload import orthogonal_query_pair


def heatmap(model, cfg, query, context, steps=6):
    s = start_session(model, cfg, SegmentedPrompt(query_tokens=query, context_tokens=context))
    s.prefill(context)
    s.decode(steps)
    return selection_heatmap(s.trace, s.num_blocks_finalized)


def show(name, m):
    print(name)
    print("step " + "".join(f"{b % 10}" for b in range(m.shape[1])))
    for step, row in enumerate(m):
        print(f"{step:4d} " + "".join("." if c == 0 else str(c) for c in row))


model = build_toy_model(ModelConfig())
cfg = EngineConfig(local_window=128, block_size=32, chunk_size=64, num_blocks=4, pin_query=False)
a, b, cos = orthogonal_query_pair(model, 8, 0)
context = np.random.default_rng(1).integers(0, 512, 128 + 48 * 32)
print(f"query cosine at the first layer: {cos:+.1e}\n")

for beta in (1.0, 0.0):
    ha = heatmap(model, cfg.with_(beta=beta), a, context)
    hb = heatmap(model, cfg.with_(beta=beta), b, context)
    show(f"beta={beta:g}, query A", ha)
    show(f"beta={beta:g}, query B", hb)
    print(f"identical: {np.array_equal(ha, hb)}\n")
