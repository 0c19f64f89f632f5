"""Named scenario presets."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import (
    Architecture,
    ClusterModel,
    Consistency,
    DetectionConfig,
    DeviceClass,
    ErrorCause,
    FailoverConfig,
    NodeId,
    PatternKind,
    Policy,
    PolicyKind,
    RecomputeMode,
    ScenarioConfig,
    ScheduledFailure,
    StragglerPattern,
)


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    cfg: ScenarioConfig


INTENSITIES = (0.1, 0.3, 0.5, 0.8)
SLEEP_DURATION = 1.5
PERSISTENT_WORKER = NodeId.worker(3)
PERSISTENT_SERVER = NodeId.server(3)

# CPU cluster: 20 workers, 8 servers, 45M samples, 3 epochs
CPU_BSP = ScenarioConfig(cluster=ClusterModel(worker_speed=1890.0))
CPU_ASP = ScenarioConfig(consistency=Consistency.ASP, cluster=ClusterModel(worker_speed=2730.0))


def worker_patterns(intensity: float) -> tuple[StragglerPattern, ...]:
    """Transient slowdowns on every worker plus one persistently slow worker.

    The persistent delay grows with intensity and reaches 4 s at 0.8.
    """
    return (
        StragglerPattern(PatternKind.TRANSIENT, "workers", SLEEP_DURATION, intensity),
        StragglerPattern(PatternKind.PERSISTENT, (PERSISTENT_WORKER,), 5.0, intensity),
    )


def server_patterns(delay: float = 4.0) -> tuple[StragglerPattern, ...]:
    return (StragglerPattern(PatternKind.PERSISTENT, (PERSISTENT_SERVER,), delay),)


def with_intensity(cfg: ScenarioConfig, intensity: float) -> ScenarioConfig:
    """Set the intensity of every transient and persistent pattern."""
    pats = tuple(
        p if p.kind is PatternKind.DETERMINISTIC else replace(p, intensity=intensity)
        for p in cfg.patterns
    )
    return cfg.with_(patterns=pats)


def with_policy(cfg: ScenarioConfig, policy: str | Policy) -> ScenarioConfig:
    return cfg.with_(policy=Policy.parse(policy))


def _gpu_cluster() -> ScenarioConfig:
    v100 = tuple(range(4))
    p100 = tuple(range(4, 8))
    return ScenarioConfig(
        n_workers=8,
        n_servers=0,
        global_batch=768,
        samples=1_280_000,
        epochs=1,
        architecture=Architecture.ALL_REDUCE,
        policy=Policy(PolicyKind.ANTDT_DD),
        detection=DetectionConfig(lambda_=1.3, act_every=60.0),
        patterns=(
            StragglerPattern(PatternKind.DETERMINISTIC, tuple(NodeId.worker(w) for w in p100), speed_multiplier=1 / 3),
        ),
        cluster=ClusterModel(
            worker_speed=420.0,
            comm_time=0.15,
            server_update_cost=0.0,
            device_classes=(DeviceClass(v100, 16, 128), DeviceClass(p100, 16, 128)),
            accum_min=1,
            accum_max=5,
        ),
    )


def _failover_base() -> ScenarioConfig:
    return CPU_BSP.with_(
        policy=Policy(PolicyKind.NATIVE_BSP),
        failover=FailoverConfig(failures=(ScheduledFailure(1350.0, NodeId.worker(5), ErrorCause.EVICTION),)),
    )


def _hetero_speeds(n: int = 20) -> tuple[float, ...]:
    return tuple(1000.0 + 2000.0 * i / (n - 1) for i in range(n))


def _build() -> dict[str, Preset]:
    out: list[Preset] = []
    for si in INTENSITIES:
        tag = f"{int(round(si * 10)):02d}"
        out.append(Preset(
            f"nd-worker-si{tag}",
            f"BSP parameter-server cluster, transient + persistent worker stragglers at intensity {si}",
            CPU_BSP.with_(patterns=worker_patterns(si)),
        ))
    out += [
        Preset("nd-server-persistent", "BSP parameter-server cluster, 4 s constant delay on one server",
               CPU_BSP.with_(patterns=server_patterns())),
        Preset("server-backup-workers", "one persistently slow server under backup workers (b=2)",
               CPU_BSP.with_(patterns=server_patterns(), policy=Policy(PolicyKind.BACKUP_WORKERS, 2))),
        Preset("server-lb-bsp", "one persistently slow server under throughput-proportional batch sizing",
               CPU_BSP.with_(patterns=server_patterns(), policy=Policy(PolicyKind.LB_BSP))),
        Preset("asp-native", "ASP with a static even data partition, worker stragglers",
               CPU_ASP.with_(policy=Policy(PolicyKind.NATIVE_ASP), patterns=worker_patterns(0.8))),
        Preset("asp-dds", "ASP pulling shards dynamically, worker stragglers",
               CPU_ASP.with_(policy=Policy(PolicyKind.ASP_DDS), patterns=worker_patterns(0.8))),
        Preset("asp-antdt", "ASP with dynamic shards and restarts of persistent stragglers",
               CPU_ASP.with_(policy=Policy(PolicyKind.ANTDT_ND), patterns=worker_patterns(0.8))),
        Preset("asp-dds-hetero", "ASP with dynamic shards over workers of linearly spread speed",
               CPU_ASP.with_(policy=Policy(PolicyKind.ASP_DDS), cluster=ClusterModel(worker_speed=_hetero_speeds()))),
        Preset("asp-server-persistent", "ASP with dynamic shards, 4 s constant delay on one server",
               CPU_ASP.with_(policy=Policy(PolicyKind.ASP_DDS), cluster=CPU_BSP.cluster, patterns=server_patterns())),
        Preset("dd-hetero-gpu", "AllReduce over 4 fast + 4 slow GPUs (3:1), one-shot accumulation split",
               _gpu_cluster()),
        Preset("failover-compare", "one eviction mid-run; sweep checkpoint intervals against shard recompute",
               _failover_base()),
    ]
    names = [p.name for p in out]
    assert len(set(names)) == len(names)
    return {p.name: p for p in out}


PRESETS: dict[str, Preset] = _build()

FAILOVER_INTERVALS_MIN = (5, 10, 20, 30, 60)


def get(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name].cfg
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def failover_variants(cfg: ScenarioConfig, intervals_min=FAILOVER_INTERVALS_MIN) -> list[tuple[str, ScenarioConfig]]:
    """The shard-recompute run plus one checkpoint run per interval.

    Each checkpoint run fails halfway through a checkpoint interval, at
    the interval midpoint nearest the base failure time.
    """
    fo = cfg.failover
    base_fail = fo.failures[0]
    out = [("DdsBased", cfg.with_(failover=replace(fo, recompute_mode=RecomputeMode.DDS_BASED)))]
    for minutes in intervals_min:
        interval = 60.0 * minutes
        k = int(base_fail.at // interval)
        at = k * interval + 0.5 * interval
        f = ScheduledFailure(at, base_fail.node, base_fail.cause)
        out.append((
            f"CheckpointBased@{minutes}min",
            cfg.with_(failover=replace(fo, recompute_mode=RecomputeMode.CHECKPOINT_BASED, checkpoint_interval=interval, failures=(f,))),
        ))
    return out
