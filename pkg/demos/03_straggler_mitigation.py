"""
Mitigating stragglers in a parameter-server job
===============================================

A simulated 20-worker, 8-server job trains 3 epochs. Every worker slows
down now and then, and one worker is slow for good. The non-dedicated
policy watches per-node step times, rebalances batches for short
slowdowns, and restarts nodes that stay slow while the cluster is idle.
"""

from antdt import presets
from antdt.sim import run

# %%
# Worker stragglers at increasing intensity.
for si in presets.INTENSITIES:
    cfg = presets.get(f"nd-worker-si{int(round(si * 10)):02d}")
    nd, _ = run(cfg)
    bsp, _ = run(presets.with_policy(cfg, "NativeBSP"))
    print(f"intensity {si}: mitigated {nd.jct:7.0f} s, plain BSP {bsp.jct:7.0f} s, speedup {bsp.jct / nd.jct:.2f}x")

# %%
# A slow server delays every worker equally, so batch resizing cannot help.
# Only a restart onto a healthy host does.
cfg = presets.get("nd-server-persistent")
for label, c in [("mitigated", cfg), ("plain BSP", presets.with_policy(cfg, "NativeBSP")),
                 ("LB-BSP", presets.get("server-lb-bsp")), ("backup workers", presets.get("server-backup-workers"))]:
    m, log = run(c)
    kills = [e[2] for e in log.of_kind("terminate")]
    print(f"{label:15s} {m.jct:7.0f} s  restarted: {kills or '-'}")
