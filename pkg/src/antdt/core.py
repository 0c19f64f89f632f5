"""Shared vocabulary: node identities, timing records, actions and scenario configuration."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable

US_PER_S = 1_000_000
INT64_MAX = 2**63 - 1


def to_us(seconds: float) -> int:
    """Seconds to the simulator's fixed-point microsecond clock."""
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S


class ConfigError(ValueError):
    """Raised for malformed or invalid scenario configuration."""


class Role(str, enum.Enum):
    WORKER = "worker"
    SERVER = "server"


@dataclass(frozen=True, order=True)
class NodeId:
    role: Role
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("node index must be non-negative")

    @classmethod
    def worker(cls, index: int) -> "NodeId":
        return cls(Role.WORKER, index)

    @classmethod
    def server(cls, index: int) -> "NodeId":
        return cls(Role.SERVER, index)

    @property
    def is_worker(self) -> bool:
        return self.role is Role.WORKER

    def to_json(self) -> list:
        return [self.role.value, self.index]

    @classmethod
    def from_json(cls, obj) -> "NodeId":
        role, index = obj
        return cls(Role(role), int(index))

    def __str__(self) -> str:
        return f"{'w' if self.is_worker else 'ps'}-{self.index}"


@dataclass(frozen=True)
class IterationRecord:
    """Timing decomposition of one node iteration.

    Worker records carry the effective local batch (accumulation steps times
    micro-batch), so ``batch_size / worker_compute`` is the node's throughput.
    Server records carry their aggregation time in ``server_compute`` and a
    zero batch size.
    """

    node: NodeId
    iteration: int
    wall_time: float
    worker_compute: float
    server_compute: float
    comm: float
    batch_size: int

    def __post_init__(self):
        if min(self.worker_compute, self.server_compute, self.comm) < 0:
            raise ValueError("durations must be non-negative")
        if self.node.is_worker and self.batch_size < 1:
            raise ValueError("worker records need batch_size >= 1")
        if not self.node.is_worker and self.batch_size != 0:
            raise ValueError("server records carry batch_size = 0")

    @property
    def bpt(self) -> float:
        return self.worker_compute + self.server_compute + self.comm

    def to_json(self) -> dict:
        d = asdict(self)
        d["node"] = self.node.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "IterationRecord":
        d = dict(d)
        d["node"] = NodeId.from_json(d["node"])
        return cls(**d)


@dataclass(frozen=True)
class BatchAllocation:
    """Per-worker ``(worker index, batch_size, accum_steps)`` triples."""

    per_worker: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "per_worker", tuple(tuple(int(x) for x in e) for e in self.per_worker))
        for _, b, c in self.per_worker:
            if b < 1 or c < 1:
                raise ValueError("batch sizes and accumulation steps must be >= 1")
        idx = [w for w, _, _ in self.per_worker]
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate worker in allocation")

    @classmethod
    def from_sizes(cls, sizes: Iterable[int], workers: Iterable[int] | None = None) -> "BatchAllocation":
        sizes = list(sizes)
        workers = list(range(len(sizes))) if workers is None else list(workers)
        return cls(tuple((w, b, 1) for w, b in zip(workers, sizes)))

    @property
    def total(self) -> int:
        return sum(b * c for _, b, c in self.per_worker)

    def batch_of(self, worker: int) -> tuple[int, int]:
        for w, b, c in self.per_worker:
            if w == worker:
                return b, c
        raise KeyError(worker)

    def as_dict(self) -> dict[int, tuple[int, int]]:
        return {w: (b, c) for w, b, c in self.per_worker}


class ActionKind(str, enum.Enum):
    ADJUST_BS = "ADJUST_BS"
    BACKUP_WORKERS = "BACKUP_WORKERS"
    KILL_RESTART = "KILL_RESTART"
    ADJUST_LR = "ADJUST_LR"
    NONE = "NONE"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    issue_iteration: int = 0
    alloc: BatchAllocation | None = None
    backups: int | None = None
    target: NodeId | None = None
    lr_scale: tuple[float, ...] | None = None

    def __post_init__(self):
        k = self.kind
        if (k is ActionKind.ADJUST_BS) != (self.alloc is not None):
            raise ValueError("ADJUST_BS carries exactly one allocation")
        if (k is ActionKind.BACKUP_WORKERS) != (self.backups is not None):
            raise ValueError("BACKUP_WORKERS carries a backup count")
        if k is ActionKind.BACKUP_WORKERS and self.backups < 1:
            raise ValueError("backup count must be positive")
        if (k is ActionKind.KILL_RESTART) != (self.target is not None):
            raise ValueError("KILL_RESTART targets exactly one node")
        if (k is ActionKind.ADJUST_LR) != (self.lr_scale is not None):
            raise ValueError("ADJUST_LR carries per-worker scales")
        if k is ActionKind.ADJUST_LR and any(s <= 0 for s in self.lr_scale):
            raise ValueError("learning-rate scales must be positive")

    @classmethod
    def none(cls, iteration: int = 0) -> "Action":
        return cls(ActionKind.NONE, iteration)

    @classmethod
    def adjust_bs(cls, alloc: BatchAllocation, iteration: int = 0) -> "Action":
        return cls(ActionKind.ADJUST_BS, iteration, alloc=alloc)

    @classmethod
    def backup_workers(cls, b: int, iteration: int = 0) -> "Action":
        return cls(ActionKind.BACKUP_WORKERS, iteration, backups=b)

    @classmethod
    def kill_restart(cls, target: NodeId, iteration: int = 0) -> "Action":
        return cls(ActionKind.KILL_RESTART, iteration, target=target)

    @classmethod
    def adjust_lr(cls, scales: Iterable[float], iteration: int = 0) -> "Action":
        return cls(ActionKind.ADJUST_LR, iteration, lr_scale=tuple(float(s) for s in scales))

    @property
    def is_none(self) -> bool:
        return self.kind is ActionKind.NONE

    @property
    def is_global(self) -> bool:
        """Global actions need the agents' synchronized application."""
        return self.kind in (ActionKind.ADJUST_BS, ActionKind.BACKUP_WORKERS, ActionKind.ADJUST_LR)

    def to_json(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind.value, "issue_iteration": self.issue_iteration}
        if self.alloc is not None:
            d["alloc"] = [list(e) for e in self.alloc.per_worker]
        if self.backups is not None:
            d["b"] = self.backups
        if self.target is not None:
            d["target"] = self.target.to_json()
        if self.lr_scale is not None:
            d["lr_scale"] = list(self.lr_scale)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Action":
        return cls(
            ActionKind(d["kind"]),
            int(d.get("issue_iteration", 0)),
            alloc=BatchAllocation(tuple(tuple(e) for e in d["alloc"])) if "alloc" in d else None,
            backups=d.get("b"),
            target=NodeId.from_json(d["target"]) if "target" in d else None,
            lr_scale=tuple(d["lr_scale"]) if "lr_scale" in d else None,
        )


# --------------------------------------------------------------------------
# scenario configuration


class Consistency(str, enum.Enum):
    BSP = "BSP"
    ASP = "ASP"


class Architecture(str, enum.Enum):
    PARAMETER_SERVER = "ParameterServer"
    ALL_REDUCE = "AllReduce"


class PolicyKind(str, enum.Enum):
    NATIVE_BSP = "NativeBSP"
    NATIVE_ASP = "NativeASP"
    ASP_DDS = "AspDds"
    BACKUP_WORKERS = "BackupWorkers"
    LB_BSP = "LbBsp"
    ANTDT_ND = "AntDtNd"
    ANTDT_DD = "AntDtDd"


_BSP_ONLY = {PolicyKind.NATIVE_BSP, PolicyKind.BACKUP_WORKERS, PolicyKind.LB_BSP, PolicyKind.ANTDT_DD}
_ASP_ONLY = {PolicyKind.NATIVE_ASP, PolicyKind.ASP_DDS}


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    b: int | None = None

    @classmethod
    def parse(cls, obj) -> "Policy":
        if isinstance(obj, Policy):
            return obj
        if isinstance(obj, dict):
            _check_keys(obj, {"kind", "b"}, "policy")
            return cls(PolicyKind(obj["kind"]), obj.get("b"))
        text = str(obj).strip()
        # "BackupWorkers(2)" or "BackupWorkers:2"
        for sep in ("(", ":"):
            if sep in text:
                name, arg = text.split(sep, 1)
                return cls(PolicyKind(name.strip()), int(arg.strip(" )")))
        return cls(PolicyKind(text))

    def to_json(self):
        if self.b is None:
            return self.kind.value
        return {"kind": self.kind.value, "b": self.b}

    def __str__(self) -> str:
        return self.kind.value if self.b is None else f"{self.kind.value}({self.b})"


@dataclass(frozen=True)
class DetectionConfig:
    lambda_: float = 1.5
    window_transient: float = 300.0
    window_persistent: float = 600.0
    report_every: int = 10
    act_every: float = 300.0
    busy_threshold: float = 120.0


class PatternKind(str, enum.Enum):
    TRANSIENT = "transient"
    PERSISTENT = "persistent"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class StragglerPattern:
    """Injected slowdown.

    ``targets`` is ``"workers"``, ``"servers"`` or a tuple of NodeIds.
    Transient and persistent delays are ``sleep_duration * intensity``; a
    persistent pattern given as ``delay`` stores it with intensity 1. A
    persistent pattern with ``component="comm"`` doubles the node's
    communication time instead of adding compute delay.
    """

    kind: PatternKind
    targets: str | tuple[NodeId, ...] = "workers"
    sleep_duration: float = 0.0
    intensity: float = 1.0
    on_period: float = 900.0
    cycle: float = 1800.0
    probability: float = 0.3
    speed_multiplier: float = 1.0
    component: str = "compute"
    fixed_per_run: bool = False

    @property
    def delay(self) -> float:
        return self.sleep_duration * self.intensity

    def applies_to(self, node: NodeId) -> bool:
        if self.targets == "workers":
            return node.is_worker
        if self.targets == "servers":
            return not node.is_worker
        return node in self.targets

    @classmethod
    def from_json(cls, d: dict) -> "StragglerPattern":
        allowed = {f.name for f in fields(cls)} | {"delay"}
        _check_keys(d, allowed, "patterns[]")
        d = dict(d)
        kind = PatternKind(d.pop("kind"))
        if "delay" in d:
            if "sleep_duration" in d:
                raise ConfigError("patterns[]: give either delay or sleep_duration")
            d["sleep_duration"] = float(d.pop("delay"))
            d.setdefault("intensity", 1.0)
        t = d.get("targets", "workers")
        if not isinstance(t, str):
            d["targets"] = tuple(NodeId.from_json(x) for x in t)
        return cls(kind=kind, **d)

    def to_json(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["kind"] = self.kind.value
        if not isinstance(self.targets, str):
            d["targets"] = [n.to_json() for n in self.targets]
        return d


class ErrorCause(str, enum.Enum):
    PROACTIVE_KILL = "ProactiveKill"
    NETWORK_ERROR = "NetworkError"
    EVICTION = "Eviction"
    CONFIG_ERROR = "ConfigError"
    PROGRAM_ERROR = "ProgramError"

    @property
    def retryable(self) -> bool:
        return self in (ErrorCause.PROACTIVE_KILL, ErrorCause.NETWORK_ERROR, ErrorCause.EVICTION)


@dataclass(frozen=True)
class ScheduledFailure:
    at: float
    node: NodeId
    cause: ErrorCause = ErrorCause.EVICTION

    @classmethod
    def from_json(cls, d: dict) -> "ScheduledFailure":
        _check_keys(d, {"at", "node", "cause"}, "failover.failures[]")
        return cls(float(d["at"]), NodeId.from_json(d["node"]), ErrorCause(d.get("cause", "Eviction")))

    def to_json(self) -> dict:
        return {"at": self.at, "node": self.node.to_json(), "cause": self.cause.value}


class RecomputeMode(str, enum.Enum):
    DDS_BASED = "DdsBased"
    CHECKPOINT_BASED = "CheckpointBased"


@dataclass(frozen=True)
class FailoverConfig:
    pending_time_idle: float = 10.0
    pending_time_busy: float = 1800.0
    node_init: float = 60.0
    restore: float = 30.0
    checkpoint_interval: float = 1800.0
    checkpoint_cost: float = 60.0
    recompute_mode: RecomputeMode = RecomputeMode.DDS_BASED
    failures: tuple[ScheduledFailure, ...] = ()


@dataclass(frozen=True)
class DeviceClass:
    workers: tuple[int, ...]
    b_min: int = 1
    b_max: int = 1 << 30


@dataclass(frozen=True)
class ClusterModel:
    """Timing model knobs of the simulated cluster.

    ``worker_speed`` is samples/second, either one value for every worker or
    one per worker. ``shard_batch`` is the batch unit used when the
    simulator cuts shards (``None`` means the mean local batch ``ceil(B/n)``).
    """

    worker_speed: float | tuple[float, ...] = 2730.0
    comm_time: float = 0.05
    server_update_cost: float = 0.05
    asp_contention: float = 0.1
    envelope_latency: float = 0.001
    dds_rpc_latency: float = 0.001
    busy_windows: tuple[tuple[float, float], ...] = ()
    shard_batch: int | None = None
    device_classes: tuple[DeviceClass, ...] = ()
    accum_min: int = 1
    accum_max: int = 1

    def speed_of(self, worker: int) -> float:
        if isinstance(self.worker_speed, tuple):
            return self.worker_speed[worker]
        return self.worker_speed

    def class_of(self, worker: int) -> DeviceClass | None:
        for dc in self.device_classes:
            if worker in dc.workers:
                return dc
        return None


@dataclass(frozen=True)
class ScenarioConfig:
    n_workers: int = 20
    n_servers: int = 8
    global_batch: int = 81920
    samples: int = 45_000_000
    batches_per_shard: int = 100
    epochs: int = 3
    consistency: Consistency = Consistency.BSP
    architecture: Architecture = Architecture.PARAMETER_SERVER
    policy: Policy = Policy(PolicyKind.ANTDT_ND)
    detection: DetectionConfig = DetectionConfig()
    patterns: tuple[StragglerPattern, ...] = ()
    failover: FailoverConfig = FailoverConfig()
    cluster: ClusterModel = ClusterModel()
    seed: int = 0

    @property
    def shard_batch(self) -> int:
        if self.cluster.shard_batch is not None:
            return self.cluster.shard_batch
        return -(-self.global_batch // self.n_workers)

    def workers(self) -> list[NodeId]:
        return [NodeId.worker(i) for i in range(self.n_workers)]

    def servers(self) -> list[NodeId]:
        return [NodeId.server(j) for j in range(self.n_servers)]

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        det = self.detection
        fo = self.failover
        cl = self.cluster
        return {
            "n_workers": self.n_workers,
            "n_servers": self.n_servers,
            "global_batch": self.global_batch,
            "samples": self.samples,
            "batches_per_shard": self.batches_per_shard,
            "epochs": self.epochs,
            "consistency": self.consistency.value,
            "architecture": self.architecture.value,
            "policy": self.policy.to_json(),
            "detection": {
                "lambda": det.lambda_,
                "window_transient": det.window_transient,
                "window_persistent": det.window_persistent,
                "report_every": det.report_every,
                "act_every": det.act_every,
                "busy_threshold": det.busy_threshold,
            },
            "patterns": [p.to_json() for p in self.patterns],
            "failover": {
                "pending_time_idle": fo.pending_time_idle,
                "pending_time_busy": fo.pending_time_busy,
                "node_init": fo.node_init,
                "restore": fo.restore,
                "checkpoint_interval": fo.checkpoint_interval,
                "checkpoint_cost": fo.checkpoint_cost,
                "recompute_mode": fo.recompute_mode.value,
                "failures": [f.to_json() for f in fo.failures],
            },
            "cluster": {
                "worker_speed": list(cl.worker_speed) if isinstance(cl.worker_speed, tuple) else cl.worker_speed,
                "comm_time": cl.comm_time,
                "server_update_cost": cl.server_update_cost,
                "asp_contention": cl.asp_contention,
                "envelope_latency": cl.envelope_latency,
                "dds_rpc_latency": cl.dds_rpc_latency,
                "busy_windows": [list(w) for w in cl.busy_windows],
                "shard_batch": cl.shard_batch,
                "device_classes": [
                    {"workers": list(dc.workers), "b_min": dc.b_min, "b_max": dc.b_max} for dc in cl.device_classes
                ],
                "accum_min": cl.accum_min,
                "accum_max": cl.accum_max,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioConfig":
        top = {f.name for f in fields(cls)}
        _check_keys(d, top, "")
        kw: dict[str, Any] = {}
        for k in ("n_workers", "n_servers", "global_batch", "samples", "batches_per_shard", "epochs", "seed"):
            if k in d:
                kw[k] = _as_int(d[k], k)
        try:
            if "consistency" in d:
                kw["consistency"] = Consistency(d["consistency"])
            if "architecture" in d:
                kw["architecture"] = Architecture(d["architecture"])
            if "policy" in d:
                kw["policy"] = Policy.parse(d["policy"])
            if "detection" in d:
                det = dict(d["detection"])
                _check_keys(det, {"lambda", "window_transient", "window_persistent", "report_every", "act_every", "busy_threshold"}, "detection")
                if "lambda" in det:
                    det["lambda_"] = float(det.pop("lambda"))
                if "report_every" in det:
                    det["report_every"] = _as_int(det["report_every"], "detection.report_every")
                kw["detection"] = DetectionConfig(**det)
            if "patterns" in d:
                kw["patterns"] = tuple(StragglerPattern.from_json(p) for p in d["patterns"])
            if "failover" in d:
                fo = dict(d["failover"])
                _check_keys(fo, {f.name for f in fields(FailoverConfig)}, "failover")
                if "recompute_mode" in fo:
                    fo["recompute_mode"] = RecomputeMode(fo["recompute_mode"])
                if "failures" in fo:
                    fo["failures"] = tuple(ScheduledFailure.from_json(x) for x in fo["failures"])
                kw["failover"] = FailoverConfig(**fo)
            if "cluster" in d:
                cl = dict(d["cluster"])
                _check_keys(cl, {f.name for f in fields(ClusterModel)}, "cluster")
                if isinstance(cl.get("worker_speed"), list):
                    cl["worker_speed"] = tuple(float(x) for x in cl["worker_speed"])
                if "busy_windows" in cl:
                    cl["busy_windows"] = tuple((float(a), float(b)) for a, b in cl["busy_windows"])
                if "device_classes" in cl:
                    dcs = []
                    for x in cl["device_classes"]:
                        _check_keys(x, {"workers", "b_min", "b_max"}, "cluster.device_classes[]")
                        dcs.append(DeviceClass(tuple(int(w) for w in x["workers"]), int(x.get("b_min", 1)), int(x.get("b_max", 1 << 30))))
                    cl["device_classes"] = tuple(dcs)
                kw["cluster"] = ClusterModel(**cl)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return cls(**kw)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _as_int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return int(v)


def _check_keys(d: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key {where}{unknown[0]}")


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return ScenarioConfig.from_json(json.load(fh))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: ScenarioConfig, overrides: Iterable[str]) -> ScenarioConfig:
    """Apply ``dotted.path=value`` overrides; list elements are addressed by index.

    Unknown paths raise ConfigError naming the offending key.
    """
    d = cfg.to_json()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node: Any = d
        for i, p in enumerate(parts):
            last = i == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(p)
                    node[idx]
                except (ValueError, IndexError):
                    raise ConfigError(f"unknown override key {key}") from None
                if last:
                    node[idx] = _parse_value(raw)
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if p not in node:
                    raise ConfigError(f"unknown override key {key}")
                if last:
                    node[p] = _parse_value(raw)
                else:
                    node = node[p]
            else:
                raise ConfigError(f"unknown override key {key}")
    return ScenarioConfig.from_json(d)


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}" if self.path else self.message


def validate_config(cfg: ScenarioConfig) -> list[Violation]:
    """Every invariant violation in ``cfg``; an empty list means the config is usable."""
    out: list[Violation] = []

    def bad(path, msg):
        out.append(Violation(path, msg))

    n, m = cfg.n_workers, cfg.n_servers
    if n < 1:
        bad("n_workers", "need at least one worker")
    if cfg.architecture is Architecture.PARAMETER_SERVER and m < 1:
        bad("n_servers", "parameter-server runs need at least one server")
    if cfg.architecture is Architecture.ALL_REDUCE and m != 0:
        bad("n_servers", "AllReduce runs have no servers")
    if m < 0:
        bad("n_servers", "must be non-negative")
    if cfg.global_batch < 1:
        bad("global_batch", "must be positive")
    elif n >= 1 and cfg.global_batch < n:
        bad("global_batch", "B must be at least n_workers so every worker gets one sample")
    if cfg.samples < max(cfg.global_batch, 1):
        bad("samples", "N ≥ B required")
    if cfg.batches_per_shard < 1:
        bad("batches_per_shard", "M must be at least 1")
    if cfg.epochs < 1:
        bad("epochs", "must be positive")
    if cfg.shard_batch < 1:
        bad("cluster.shard_batch", "must be positive")
    elif cfg.shard_batch * cfg.batches_per_shard > INT64_MAX:
        bad("batches_per_shard", "shard length overflows 64 bits")

    if cfg.architecture is Architecture.ALL_REDUCE and cfg.consistency is not Consistency.BSP:
        bad("consistency", "AllReduce is synchronous only")
    pk = cfg.policy.kind
    if pk in _BSP_ONLY and cfg.consistency is not Consistency.BSP:
        bad("policy", f"{pk.value} requires BSP consistency")
    if pk in _ASP_ONLY and cfg.consistency is not Consistency.ASP:
        bad("policy", f"{pk.value} requires ASP consistency")
    if pk is PolicyKind.BACKUP_WORKERS:
        if cfg.policy.b is None or not 1 <= cfg.policy.b < max(n, 1):
            bad("policy.b", "backup count must satisfy 1 <= b < n_workers")
    elif cfg.policy.b is not None:
        bad("policy.b", "only BackupWorkers takes a parameter")
    if pk is PolicyKind.ANTDT_DD and not cfg.cluster.device_classes:
        bad("cluster.device_classes", "AntDtDd needs device classes")

    det = cfg.detection
    if not det.lambda_ > 1:
        bad("detection.lambda", "lambda must exceed 1")
    if det.window_transient <= 0 or det.window_persistent <= 0:
        bad("detection", "windows must be positive")
    if det.window_transient > det.window_persistent:
        bad("detection.window_transient", "must not exceed window_persistent")
    if det.report_every < 1:
        bad("detection.report_every", "must be at least 1")
    if det.act_every <= 0:
        bad("detection.act_every", "must be positive")
    if det.busy_threshold < 0:
        bad("detection.busy_threshold", "must be non-negative")

    for i, p in enumerate(cfg.patterns):
        path = f"patterns.{i}"
        if not 0 <= p.intensity <= 1:
            bad(f"{path}.intensity", "must lie in [0, 1]")
        if not 0 <= p.probability <= 1:
            bad(f"{path}.probability", "must lie in [0, 1]")
        if p.sleep_duration < 0:
            bad(f"{path}.sleep_duration", "must be non-negative")
        if p.kind is PatternKind.TRANSIENT and (p.cycle <= 0 or not 0 <= p.on_period <= p.cycle):
            bad(f"{path}.cycle", "need 0 <= on_period <= cycle and cycle > 0")
        if p.kind is PatternKind.DETERMINISTIC and p.speed_multiplier <= 0:
            bad(f"{path}.speed_multiplier", "must be positive")
        if p.component not in ("compute", "comm"):
            bad(f"{path}.component", "must be compute or comm")
        if isinstance(p.targets, str):
            if p.targets not in ("workers", "servers"):
                bad(f"{path}.targets", "must be workers, servers or a node list")
        else:
            for node in p.targets:
                if not _node_in_range(node, n, m):
                    bad(f"{path}.targets", f"{node} out of range")

    fo = cfg.failover
    for name in ("pending_time_idle", "pending_time_busy", "node_init", "restore", "checkpoint_interval", "checkpoint_cost"):
        if getattr(fo, name) < 0:
            bad(f"failover.{name}", "must be non-negative")
    if fo.recompute_mode is RecomputeMode.CHECKPOINT_BASED and fo.checkpoint_interval <= 0:
        bad("failover.checkpoint_interval", "checkpoint-based recovery needs a positive interval")
    for i, f in enumerate(fo.failures):
        if not _node_in_range(f.node, n, m):
            bad(f"failover.failures.{i}.node", f"{f.node} out of range")
        if f.at < 0:
            bad(f"failover.failures.{i}.at", "must be non-negative")

    cl = cfg.cluster
    speeds = cl.worker_speed if isinstance(cl.worker_speed, tuple) else (cl.worker_speed,)
    if isinstance(cl.worker_speed, tuple) and len(speeds) != n:
        bad("cluster.worker_speed", "need one speed per worker")
    if any(not (s > 0 and math.isfinite(s)) for s in speeds):
        bad("cluster.worker_speed", "speeds must be positive")
    for name in ("comm_time", "server_update_cost", "asp_contention", "envelope_latency", "dds_rpc_latency"):
        if getattr(cl, name) < 0:
            bad(f"cluster.{name}", "must be non-negative")
    for a, b in cl.busy_windows:
        if b < a:
            bad("cluster.busy_windows", "window end precedes start")
    if not 1 <= cl.accum_min <= cl.accum_max:
        bad("cluster.accum_min", "need 1 <= accum_min <= accum_max")
    seen: set[int] = set()
    for i, dc in enumerate(cl.device_classes):
        if not 1 <= dc.b_min <= dc.b_max:
            bad(f"cluster.device_classes.{i}", "need 1 <= b_min <= b_max")
        for w in dc.workers:
            if not 0 <= w < n:
                bad(f"cluster.device_classes.{i}.workers", f"worker {w} out of range")
            if w in seen:
                bad(f"cluster.device_classes.{i}.workers", f"worker {w} in two classes")
            seen.add(w)
    if cl.device_classes and len(seen) != n:
        bad("cluster.device_classes", "every worker must belong to a class")
    return out


def _node_in_range(node: NodeId, n: int, m: int) -> bool:
    return node.index < (n if node.is_worker else m)
