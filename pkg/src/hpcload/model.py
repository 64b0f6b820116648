"""Domain types and the pure load math shared by every other module."""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence


class HpcloadWarning(UserWarning):
    """Base category for recoverable data problems (stale GPU data, bad files...)."""


class PolicyWarning(HpcloadWarning):
    """More than one user found on a node that should be whole-node scheduled."""


class InvalidNodeError(ValueError):
    pass


class NoRecommendationError(ValueError):
    pass


class NodeState(str, Enum):
    IDLE = "idle"
    MIXED = "mixed"
    ALLOC = "alloc"
    DOWN = "down"


class JobType(str, Enum):
    BATCH = "batch"
    INTERACTIVE = "interactive"
    JUPYTER = "jupyter"


class JobState(str, Enum):
    RUNNING = "running"
    PENDING = "pending"


class Flag(str, Enum):
    """Weekly-report categories, in report order."""

    LOW_GPU = "low_gpu"
    LOW_CPU = "low_cpu"
    HIGH_CPU = "high_cpu"


# job types allowed to share a node between users (debug / Jupyter partitions)
SHARED_JOB_TYPES = frozenset({JobType.INTERACTIVE, JobType.JUPYTER})

_NATURAL_SPLIT = re.compile(r"(\d+)")


def natural_key(name: str) -> tuple:
    """Sort key that orders ``c-8-6-2`` before ``c-8-6-10``."""
    return tuple(
        (0, int(part), part) if part.isdigit() else (1, 0, part)
        for part in _NATURAL_SPLIT.split(name)
        if part
    )


def mb_to_gb_floor(mb: int) -> int:
    return mb // 1024


def mb_to_gb_round(mb: int) -> int:
    # round half up
    return (mb + 512) // 1024


@dataclass(frozen=True)
class NodeRecord:
    node_name: str
    cores_total: int
    cores_alloc: int
    load5: float
    mem_total_mb: int
    mem_used_mb: int
    gpus_total: int
    gpus_alloc: int
    state: NodeState

    def __post_init__(self):
        if not 0 <= self.cores_alloc <= self.cores_total:
            raise ValueError(f"{self.node_name}: cores_alloc {self.cores_alloc} outside [0, {self.cores_total}]")
        if not 0 <= self.mem_used_mb <= self.mem_total_mb:
            raise ValueError(f"{self.node_name}: mem_used_mb {self.mem_used_mb} outside [0, {self.mem_total_mb}]")
        if not 0 <= self.gpus_alloc <= self.gpus_total:
            raise ValueError(f"{self.node_name}: gpus_alloc {self.gpus_alloc} outside [0, {self.gpus_total}]")
        if not (self.load5 >= 0 and math.isfinite(self.load5)):
            raise ValueError(f"{self.node_name}: load5 must be a finite non-negative number")
        if not isinstance(self.state, NodeState):
            object.__setattr__(self, "state", NodeState(self.state))

    @property
    def cores_free(self) -> int:
        return self.cores_total - self.cores_alloc

    @property
    def gpus_free(self) -> int:
        return self.gpus_total - self.gpus_alloc

    @property
    def load_norm(self) -> float:
        return normalize_cpu_load(self.load5, self.cores_total)


@dataclass(frozen=True)
class GpuRecord:
    node_name: str
    gpu_index: int
    util_percent: int
    mem_used_mb: int
    mem_total_mb: int

    def __post_init__(self):
        if not 0 <= self.util_percent <= 100:
            raise ValueError(f"{self.node_name} gpu {self.gpu_index}: util {self.util_percent} outside [0, 100]")
        if self.gpu_index < 0:
            raise ValueError(f"{self.node_name}: negative gpu index {self.gpu_index}")
        if not 0 <= self.mem_used_mb <= self.mem_total_mb:
            raise ValueError(f"{self.node_name} gpu {self.gpu_index}: mem_used_mb exceeds mem_total_mb")


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    user: str
    node_name: str
    job_type: JobType
    cores_req: int
    gpus_req: int
    state: JobState
    name: str

    def __post_init__(self):
        if not isinstance(self.job_type, JobType):
            object.__setattr__(self, "job_type", JobType(self.job_type))
        if not isinstance(self.state, JobState):
            object.__setattr__(self, "state", JobState(self.state))
        if self.cores_req < 1:
            raise ValueError(f"job {self.job_id}: cores_req must be >= 1")
        if self.gpus_req < 0:
            raise ValueError(f"job {self.job_id}: gpus_req must be >= 0")

    @property
    def running(self) -> bool:
        return self.state is JobState.RUNNING


@dataclass(frozen=True)
class UserNodeUsage:
    """One user's resource picture on one node; the row every view prints.

    GPU load and GPU memory are ``None`` when there is nothing to measure
    (CPU-only node, no GPUs allocated, or the node's GPU query is missing).
    """

    user: str
    node_name: str
    job_type: str
    cpu_total: int
    cpu_used: int
    cpu_free: int
    load_norm: float
    mem_total_gb: int
    mem_used_gb: int
    mem_free_gb: int
    gpu_total: int = 0
    gpu_used: int = 0
    gpu_free: int = 0
    gpu_load_norm: float | None = None
    gpu_mem_total_gb: int | None = None
    gpu_mem_used_gb: int | None = None
    gpu_mem_free_gb: int | None = None
    notes: tuple[str, ...] = field(default=(), compare=False)

    def quantized(self) -> UserNodeUsage:
        """Copy with loads rounded to the two decimals used in all text output."""
        gpu = None if self.gpu_load_norm is None else float(f"{self.gpu_load_norm:.2f}")
        return replace(self, load_norm=float(f"{self.load_norm:.2f}"), gpu_load_norm=gpu)


@dataclass(frozen=True)
class Thresholds:
    low_threshold: float = 0.45
    high_cpu_threshold: float = 1.65
    snapshot_interval_hours: float = 0.25

    def __post_init__(self):
        if not 0 < self.low_threshold < 1 < self.high_cpu_threshold:
            raise ValueError(
                f"need 0 < low ({self.low_threshold}) < 1 < high ({self.high_cpu_threshold})"
            )
        if self.snapshot_interval_hours <= 0:
            raise ValueError("snapshot_interval_hours must be positive")

    @classmethod
    def from_low(cls, low_threshold: float, snapshot_interval_hours: float = 0.25) -> Thresholds:
        """Derive the overload cutoff as ``1 + (1 - low_threshold)``."""
        return cls(low_threshold, 1 + (1 - low_threshold), snapshot_interval_hours)


def normalize_cpu_load(load5: float, cores_total: int) -> float:
    """5-minute load average per core. Not clamped: above 1.0 means overloaded."""
    if cores_total < 1:
        raise InvalidNodeError(f"cores_total must be >= 1, got {cores_total}")
    if load5 < 0:
        raise ValueError(f"load5 must be non-negative, got {load5}")
    return load5 / cores_total


def normalize_gpu_load(gpus: Sequence[GpuRecord]) -> float | None:
    if not gpus:
        return None
    return sum(g.util_percent for g in gpus) / len(gpus) / 100


def _node_is_shared(jobs: Iterable[JobRecord]) -> bool:
    return all(j.job_type in SHARED_JOB_TYPES for j in jobs)


def assign_gpu_indices(node: NodeRecord, jobs: Sequence[JobRecord]) -> dict[str, list[int]]:
    """Map job_id -> GPU indices, handing out indices in job-id order.

    Requests beyond the node's GPU count get nothing more (they would share).
    """
    out: dict[str, list[int]] = {}
    nxt = 0
    for job in sorted(jobs, key=lambda j: natural_key(j.job_id)):
        take = max(0, min(job.gpus_req, node.gpus_total - nxt))
        out[job.job_id] = list(range(nxt, nxt + take))
        nxt += take
    return out


def aggregate_user_node(
    node: NodeRecord,
    jobs: Sequence[JobRecord],
    gpus: Sequence[GpuRecord] | None,
) -> list[UserNodeUsage]:
    """Aggregate the running jobs on ``node`` into one row per user.

    ``gpus`` is ``None`` when the node's GPU data could not be collected;
    the GPU counts are still filled but load and memory stay absent.
    """
    running = [j for j in jobs if j.running and j.node_name == node.node_name]
    if not running:
        return []
    users = sorted({j.user for j in running})
    notes: tuple[str, ...] = ()
    if len(users) > 1 and not _node_is_shared(running):
        msg = f"{node.node_name}: jobs from {len(users)} users ({', '.join(users)}) on a whole-node host"
        warnings.warn(msg, PolicyWarning, stacklevel=2)
        notes = (msg,)

    indices = assign_gpu_indices(node, running)
    by_index = {g.gpu_index: g for g in gpus} if gpus is not None else None
    load_norm = normalize_cpu_load(node.load5, node.cores_total)
    mem_total = mb_to_gb_round(node.mem_total_mb)
    mem_used = mb_to_gb_floor(node.mem_used_mb)

    rows = []
    for user in users:
        mine = [j for j in running if j.user == user]
        cpu_used = min(sum(j.cores_req for j in mine), node.cores_total)
        gpu_idx = sorted({i for j in mine for i in indices[j.job_id]})
        gpu_used = len(gpu_idx)
        gpu_load = gmem_total = gmem_used = gmem_free = None
        if node.gpus_total > 0 and by_index is not None:
            recs = [by_index[i] for i in gpu_idx if i in by_index]
            gpu_load = normalize_gpu_load(recs)
            gmem_total = mb_to_gb_round(sum(g.mem_total_mb for g in recs))
            gmem_used = mb_to_gb_floor(sum(g.mem_used_mb for g in recs))
            gmem_free = gmem_total - gmem_used
        rows.append(
            UserNodeUsage(
                user=user,
                node_name=node.node_name,
                job_type="+".join(sorted({j.job_type.value for j in mine})),
                cpu_total=node.cores_total,
                cpu_used=cpu_used,
                cpu_free=node.cores_total - cpu_used,
                load_norm=load_norm,
                mem_total_gb=mem_total,
                mem_used_gb=mem_used,
                mem_free_gb=mem_total - mem_used,
                gpu_total=node.gpus_total,
                gpu_used=gpu_used,
                gpu_free=node.gpus_total - gpu_used,
                gpu_load_norm=gpu_load,
                gpu_mem_total_gb=gmem_total,
                gpu_mem_used_gb=gmem_used,
                gpu_mem_free_gb=gmem_free,
                notes=notes,
            )
        )
    return rows


def classify_load(usage: UserNodeUsage, t: Thresholds = Thresholds()) -> frozenset[Flag]:
    flags = set()
    if usage.load_norm < t.low_threshold:
        flags.add(Flag.LOW_CPU)
    elif usage.load_norm > t.high_cpu_threshold:
        flags.add(Flag.HIGH_CPU)
    if usage.gpu_total > 0 and usage.gpu_load_norm is not None and usage.gpu_load_norm < t.low_threshold:
        flags.add(Flag.LOW_GPU)
    return frozenset(flags)


class Factor(str, Enum):
    GPU_LOAD = "gpu_load"
    GPU_MEMORY = "gpu_memory"
    CPU_CORES = "cpu_cores"
    CPU_MEMORY = "cpu_memory"


@dataclass(frozen=True)
class NppnAdvice:
    nppn: int
    limiting_factor: Factor
    # jobs-per-node each factor would allow, before taking the minimum
    factors: dict[Factor, int]


# absorbs float noise so that e.g. 2 / (0.9 / 2) floors to 4, not 3
_FLOOR_EPS = 1e-9


def recommend_nppn(usage: UserNodeUsage, current_nppn: int) -> NppnAdvice:
    """How many copies of the observed job would fit on one node.

    The per-job footprint is the measured usage divided by ``current_nppn``.
    CPU cores are counted from the load (busy cores), not the request; GPU
    memory capacity is scaled from the allocated GPUs to the whole node.
    """
    if current_nppn < 1:
        raise ValueError("current_nppn must be >= 1")
    candidates: list[tuple[Factor, float, float]] = []
    if usage.gpu_total > 0 and usage.gpu_load_norm is not None:
        candidates.append((Factor.GPU_LOAD, usage.gpu_total, usage.gpu_load_norm * usage.gpu_used))
    if usage.gpu_used > 0 and usage.gpu_mem_used_gb is not None and usage.gpu_mem_total_gb:
        capacity = usage.gpu_mem_total_gb * usage.gpu_total / usage.gpu_used
        candidates.append((Factor.GPU_MEMORY, capacity, usage.gpu_mem_used_gb))
    candidates.append((Factor.CPU_CORES, usage.cpu_total, usage.load_norm * usage.cpu_total))
    candidates.append((Factor.CPU_MEMORY, usage.mem_total_gb, usage.mem_used_gb))

    factors: dict[Factor, int] = {}
    for factor, capacity, total in candidates:
        if total <= 0:
            continue
        # capacity / (total / nppn), written to avoid a second rounding
        factors[factor] = max(1, math.floor(capacity * current_nppn / total + _FLOOR_EPS))
    if not factors:
        raise NoRecommendationError(f"{usage.user}@{usage.node_name}: zero footprint in every factor")
    limiting = min(factors, key=lambda f: factors[f])
    return NppnAdvice(factors[limiting], limiting, factors)
