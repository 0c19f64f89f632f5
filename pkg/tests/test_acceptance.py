"""End-to-end acceptance checks; a PASS/FAIL line per criterion is printed in the terminal summary."""

import random
import statistics
import time
from functools import lru_cache

import pytest

from antdt import presets
from antdt.core import ActionKind
from antdt.dds import build_shards
from antdt.sim import Simulator, run
from antdt.solver import BatchProblem, DeviceClassSpec, GradAccumProblem, Infeasible, solve_batch, solve_grad_accum
from chaos import chaos_config
from report import note
from oracles import batch_optimum, covers_exactly, grad_accum_optimum, pearson, shard_lengths

SEEDS = (0, 1, 2)


def mean_jct(cfg) -> float:
    return statistics.fmean(run(cfg.with_(seed=s))[0].jct for s in SEEDS)


@lru_cache(maxsize=None)
def preset_run(name: str):
    return run(presets.get(name))


def audit_sync(cfg, metrics, log) -> list[str]:
    """Replay the event log and list every breach of the synchronized-apply rules."""
    problems = []
    live = {w for w in range(cfg.n_workers)}
    pending = {}
    for t, kind, node, payload in log.events:
        if kind == "terminate" and node.startswith("w-"):
            live.discard(int(node[2:]))
        elif kind == "relaunch" and node.startswith("w-"):
            live.add(int(node[2:]))
        elif kind == "envelope":
            pending[payload["seq"]] = payload["apply_at"]
        elif kind == "envelope_abort" and "seq" in payload:
            pending.pop(payload["seq"])
        elif kind == "apply":
            seq = payload["seq"]
            if pending.pop(seq, None) != payload["iteration"]:
                problems.append(f"seq {seq} applied at {payload['iteration']}, not its announced iteration")
            if sorted(payload["workers"]) != sorted(live):
                problems.append(f"seq {seq} applied on {payload['workers']} while live set was {sorted(live)}")
        elif kind == "action" and payload.get("kind") == ActionKind.KILL_RESTART.value and payload["busy"]:
            problems.append(f"kill issued at t={t} while the cluster was busy")
    if len(pending) > 1 or (pending and not metrics.jct):
        problems.append(f"envelopes never applied: {sorted(pending)}")
    if metrics.late_envelopes:
        problems.append(f"{metrics.late_envelopes} late envelopes")
    if metrics.allocation_violations:
        problems.append(f"{metrics.allocation_violations} iterations with a batch sum other than B")
    if metrics.conservation_violations:
        problems.append(f"{metrics.conservation_violations} iterations lost samples")
    return problems


@pytest.mark.criterion(1, "batch solver equals exhaustive optimum (1000 cases, < 5 s)")
def test_batch_solver_matches_enumeration():
    rng = random.Random(2024)
    cases = []
    for _ in range(1000):
        n = rng.randint(1, 5)
        B = rng.randint(n, 40)
        cases.append((B, [rng.choice([rng.uniform(0.1, 10.0), float(rng.randint(1, 6))]) for _ in range(n)]))
    start = time.perf_counter()
    sols = [solve_batch(BatchProblem(B, v)) for B, v in cases]
    elapsed = time.perf_counter() - start
    mismatches = []
    for (B, v), sol in zip(cases, sols):
        ref = float(batch_optimum(B, v))
        if sol.allocation.total != B or abs(sol.objective_z - ref) > 1e-12 * max(1.0, ref):
            mismatches.append((B, v, sol.objective_z, ref))
    note(1, f"{1000 - len(mismatches)}/1000 optimal, solver time {elapsed:.2f} s")
    assert not mismatches, mismatches[:3]
    assert elapsed < 5.0


@pytest.mark.criterion(2, "accumulation solver equals full-grid brute force (200 cases, < 60 s)")
def test_grad_accum_solver_matches_grid():
    rng = random.Random(7)
    start = time.perf_counter()
    mismatches = []
    infeasible = 0
    for _ in range(200):
        k = rng.randint(1, 3)
        classes = []
        for _ in range(k):
            lo = rng.randint(1, 100)
            classes.append((rng.randint(1, 4), rng.uniform(10.0, 500.0), lo, rng.randint(lo, 100)))
        c_min = rng.randint(1, 5)
        c_max = rng.randint(c_min, 5)
        B = sum(n * rng.randint(c_min, c_max) * rng.randint(lo, hi) for n, _, lo, hi in classes)
        B += rng.choice([0, 0, 0, 1, -1])
        ref = grad_accum_optimum(B, classes, c_min, c_max)
        try:
            sol = solve_grad_accum(GradAccumProblem(B, [DeviceClassSpec(*c) for c in classes], c_min, c_max))
            got = sol.objective_z
            assert sol.allocation.total == B
        except Infeasible:
            got = None
            infeasible += 1
        if (got is None) != (ref is None) or (ref is not None and abs(got - ref) > 1e-9 * max(1.0, ref)):
            mismatches.append((B, classes, c_min, c_max, got, ref))
    elapsed = time.perf_counter() - start
    note(2, f"{200 - len(mismatches)}/200 match ({infeasible} infeasible agreed), {elapsed:.2f} s")
    assert not mismatches, mismatches[:3]
    assert 0 < infeasible < 200
    assert elapsed < 60.0


@pytest.mark.criterion(3, "shard arithmetic at cluster scale")
def test_shard_arithmetic():
    led = build_shards(45_000_000, 81_920, 100)
    got = [led.shards[i].length for i in sorted(led.shards)]
    note(3, f"K={led.K}, lengths {got}")
    assert led.K == 6
    assert got == [8_192_000] * 5 + [4_040_000] == shard_lengths(45_000_000, 81_920, 100)


@pytest.mark.criterion(4, "data integrity under 100 chaos runs")
def test_chaos_data_integrity():
    failures = []
    for i in range(100):
        cfg = chaos_config(i)
        sim = Simulator(cfg)
        m = sim.run()
        K = len(shard_lengths(cfg.samples, cfg.shard_batch, cfg.batches_per_shard))
        ranges = sim.feed.done_ranges()
        done_in_log = {(p["epoch"], p["shard"]) for _, kind, _, p in sim.log.events if kind == "done"}
        ok = (
            not m.aborted
            and m.done_per_epoch == {e: K for e in range(cfg.epochs)}
            and sorted(ranges) == list(range(cfg.epochs))
            and all(covers_exactly(r, cfg.samples) for r in ranges.values())
            and done_in_log == {(e, s) for e in range(cfg.epochs) for s in range(K)}
        )
        sim.feed.check()
        problems = audit_sync(cfg, m, sim.log)
        if not ok or problems:
            failures.append((i, m.abort_reason, m.done_per_epoch, K, problems[:2]))
    note(4, f"{100 - len(failures)}/100 runs intact")
    assert not failures, failures[:3]


@pytest.mark.criterion(5, "worker-straggler speedup: ratio <= 0.55 and within 0.49 +- 0.15, monotone")
def test_worker_straggler_trend():
    ratios = {}
    for si in presets.INTENSITIES:
        cfg = presets.get(f"nd-worker-si{int(round(si * 10)):02d}")
        nd = mean_jct(cfg)
        bsp = mean_jct(presets.with_policy(cfg, "NativeBSP"))
        ratios[si] = nd / bsp
    speedups = [1 / ratios[si] for si in presets.INTENSITIES]
    r = ratios[0.8]
    note(5, "ND/BSP by intensity: " + ", ".join(f"{si}: {ratios[si]:.3f}" for si in presets.INTENSITIES))
    assert r <= 0.55
    assert abs(r - 0.49) <= 0.15
    assert all(a <= b for a, b in zip(speedups, speedups[1:])), speedups


@pytest.mark.criterion(6, "server-straggler: ND <= 0.5 x BSP, LB-BSP and backup workers do not beat ND")
def test_server_straggler():
    cfg = presets.get("nd-server-persistent")
    nd = mean_jct(cfg)
    bsp = mean_jct(presets.with_policy(cfg, "NativeBSP"))
    lb = mean_jct(presets.get("server-lb-bsp"))
    bw = mean_jct(presets.get("server-backup-workers"))
    note(6, f"ND {nd:.0f} s, BSP {bsp:.0f} s, LB-BSP {lb:.0f} s, backup workers {bw:.0f} s")
    assert nd <= 0.5 * bsp
    assert lb >= nd and bw >= nd


@pytest.mark.criterion(7, "ASP ordering: ND < dynamic shards < static, static >= 3 x ND")
def test_asp_ordering():
    nd = mean_jct(presets.get("asp-antdt"))
    dds = mean_jct(presets.get("asp-dds"))
    native = mean_jct(presets.get("asp-native"))
    note(7, f"ND {nd:.0f} s, dynamic {dds:.0f} s, static {native:.0f} s ({native / nd:.2f}x)")
    assert nd < dds < native
    assert native >= 3 * nd


@pytest.mark.criterion(8, "done shards proportional to worker speed (Pearson > 0.95)")
def test_shard_throughput_proportionality():
    cfg = presets.get("asp-dds-hetero")
    m, _ = preset_run("asp-dds-hetero")
    speeds = [cfg.cluster.speed_of(w) for w in range(cfg.n_workers)]
    done = [m.done_shards.get(w, 0) for w in range(cfg.n_workers)]
    r = pearson(done, speeds)
    note(8, f"Pearson r = {r:.4f}")
    assert r > 0.95


@pytest.mark.criterion(9, "failover: shard recompute beats every checkpoint interval; U-shape beyond the minimum")
def test_failover_crossover():
    variants = presets.failover_variants(presets.get("failover-compare"))
    delays = {}
    for label, cfg in variants:
        m, log = run(cfg)
        assert not m.aborted and m.failures == 1
        delays[label] = m.failover_delay
    dds = delays.pop("DdsBased")
    ckpt = [delays[f"CheckpointBased@{mins}min"] for mins in presets.FAILOVER_INTERVALS_MIN]
    assert all(dds < d for d in ckpt)
    note(9, f"shard recompute {dds:.0f} s; checkpoint " + ", ".join(f"{m}min: {d:.0f} s" for m, d in zip(presets.FAILOVER_INTERVALS_MIN, ckpt)))
    lo = ckpt.index(min(ckpt))
    assert all(a < b for a, b in zip(ckpt[lo:], ckpt[lo + 1:])), ckpt


@pytest.mark.criterion(10, "sync protocol: same-iteration apply, batch sum B, overhead < 1%")
def test_sync_protocol_invariants():
    problems = {}
    for name in presets.PRESETS:
        m, log = preset_run(name)
        found = audit_sync(presets.get(name), m, log)
        if m.sync_overhead >= 0.01:
            found.append(f"sync overhead {m.sync_overhead:.4f}")
        if found:
            problems[name] = found
    applied = sum(len(preset_run(n)[1].of_kind("apply")) for n in presets.PRESETS)
    worst = max(preset_run(n)[0].sync_overhead for n in presets.PRESETS)
    note(10, f"{applied} envelopes applied, worst sync overhead {100 * worst:.4f}% of JCT")
    assert applied > 0
    assert not problems, problems


@pytest.mark.criterion(11, "every preset is byte-identical across two runs")
def test_determinism():
    differing = []
    for name in presets.PRESETS:
        first = preset_run(name)[1].dumps()
        second = run(presets.get(name))[1].dumps()
        if first != second:
            differing.append(name)
    note(11, f"{len(presets.PRESETS) - len(differing)}/{len(presets.PRESETS)} presets identical")
    assert not differing


@pytest.mark.criterion(12, "accumulation split beats LB-BSP which beats plain data parallel (>= 1.2x)")
def test_dedicated_cluster_improvement():
    cfg = presets.get("dd-hetero-gpu")
    dd = mean_jct(cfg)
    lb = mean_jct(presets.with_policy(cfg, "LbBsp"))
    ddp = mean_jct(presets.with_policy(cfg, "NativeBSP"))
    note(12, f"accumulation {dd:.0f} s, LB-BSP {lb:.0f} s, data parallel {ddp:.0f} s ({ddp / dd:.2f}x)")
    assert dd < lb < ddp
    assert ddp >= 1.2 * dd
