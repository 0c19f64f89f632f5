"""
Mixed GPU generations under AllReduce
=====================================

Four fast and four slow GPUs train with a global batch of 768. One solve
of the accumulation split, made once step times are known, removes most
of the idle time the fast devices spend waiting.
"""

from antdt import presets
from antdt.sim import run

cfg = presets.get("dd-hetero-gpu")

# %%
for policy in ("AntDtDd", "LbBsp", "NativeBSP"):
    m, _ = run(presets.with_policy(cfg, policy))
    print(f"{policy:10s} JCT {m.jct:6.0f} s")

# %%
# The split is applied at one iteration on all eight workers.
m, log = run(cfg)
(apply,) = log.of_kind("apply")
print("applied at iteration", apply[3]["iteration"], "on workers", apply[3]["workers"])
print("new (micro-batch, accumulation):", m.actions[0]["alloc"])
