"""
Recovering from a lost worker
=============================

When a worker is evicted, shard leasing only has to redo the lost
worker's unfinished shard. Checkpoint recovery rolls the whole job back to
the last checkpoint and pays for every checkpoint taken along the way.
"""

from antdt import presets
from antdt.sim import run

# %%
for label, cfg in presets.failover_variants(presets.get("failover-compare")):
    m, log = run(cfg)
    print(f"{label:26s} failover delay {m.failover_delay:6.0f} s  checkpoints {m.checkpoints:2d}  JCT {m.jct:6.0f} s")
