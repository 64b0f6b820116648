"""Synthetic whole-node-scheduled clusters, emitted in the collectors' file formats.

Each preset lays out which user holds which node and the load envelopes
every node wanders in. Loads then follow a clipped random walk driven by a
SplitMix64 generator, so a (seed, config) pair always produces the same
bytes on every platform.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Iterator

from .collectors import (
    GPU_DIR,
    ClusterView,
    JOBS_FILE,
    META_FILE,
    NODES_FILE,
    PRIVILEGES_FILE,
    USERS_FILE,
    emit_gpu_csv,
    emit_job_table,
    emit_node_table,
    format_ts,
    load_cluster_files,
)
from .model import GpuRecord, JobRecord, JobState, JobType, NodeRecord, NodeState

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Steele, Lea & Flood's SplitMix64; tiny, fast and fully specified."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.next_u64() % (hi - lo + 1)


USER_NAMES = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy",
    "mallory", "niaj", "olivia", "peggy", "rupert", "sybil", "trent", "victor", "walter", "yvonne",
]  # fmt: skip
ADMIN_USER = "admin"
PRESETS = ("healthy", "lowgpu", "misalloc", "threadstorm", "mixed")
DEFAULT_START = datetime(2024, 3, 4, tzinfo=timezone.utc)  # a Monday


def user_name(i: int) -> str:
    base = USER_NAMES[i % len(USER_NAMES)]
    return base if i < len(USER_NAMES) else f"{base}{i // len(USER_NAMES)}"


def node_name(i: int) -> str:
    return f"c-{i // 32 + 1}-{(i // 8) % 4 + 1}-{i % 8 + 1}"


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    nodes: int = 16
    cores_per_node: int = 40
    gpus_per_node: int = 2
    mem_gb_per_node: int = 384
    users: int = 4
    duration_hours: float = 24.0
    interval_hours: float = 0.25
    preset: str = "healthy"
    cluster_name: str = "sim"
    start: datetime = DEFAULT_START
    gpu_mem_gb: int = 64
    # trailing nodes without GPUs
    cpu_only_nodes: int = 0
    # overrides the designated user's normalized CPU load range
    cpu_envelope: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("nodes", "cores_per_node", "mem_gb_per_node", "users", "gpu_mem_gb"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.gpus_per_node < 0 or not 0 <= self.cpu_only_nodes <= self.nodes:
            raise ValueError("bad GPU layout")
        if self.interval_hours <= 0 or self.duration_hours <= 0:
            raise ValueError("interval and duration must be positive")
        steps = self.duration_hours / self.interval_hours
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("interval must divide duration")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")

    @property
    def n_intervals(self) -> int:
        return round(self.duration_hours / self.interval_hours)

    def gpus_on(self, i: int) -> int:
        return 0 if i >= self.nodes - self.cpu_only_nodes else self.gpus_per_node

    def user_list(self) -> list[str]:
        return [user_name(i) for i in range(self.users)]


@dataclass(frozen=True)
class JobPlan:
    job_id: str
    user: str
    cores: int
    gpus: int
    job_type: JobType = JobType.BATCH
    name: str = "run"


@dataclass
class NodePlan:
    """What one node runs during a phase and the ranges its loads stay within."""

    jobs: list[JobPlan] = field(default_factory=list)
    cpu_env: tuple[float, float] = (0.0, 0.02)  # normalized load
    gpu_env: tuple[int, int] = (60, 95)  # util percent of allocated GPUs
    gpu_mem_env: tuple[int, int] = (8192, 40960)  # MB per allocated GPU
    mem_env: tuple[float, float] = (0.01, 0.02)  # fraction of node memory
    mem_fixed_mb: int | None = None


@dataclass
class Scenario:
    config: ScenarioConfig
    designated: str | None
    # (first interval index, per-node plans) in increasing order
    phases: list[tuple[int, list[NodePlan]]]

    def plan_at(self, step: int) -> list[NodePlan]:
        current = self.phases[0][1]
        for first, plans in self.phases:
            if step >= first:
                current = plans
        return current


HEALTHY_CPU = (0.7, 1.0)
HEALTHY_MEM = (0.2, 0.6)


class _Ids:
    def __init__(self, start: int = 1000):
        self.n = start

    def __call__(self) -> str:
        self.n += 1
        return str(self.n)


def _healthy_plan(cfg: ScenarioConfig, i: int, user: str, ids: _Ids, rng: SplitMix64) -> NodePlan:
    gpus = cfg.gpus_on(i)
    njobs = 2 if gpus >= 2 and rng.random() < 0.5 else 1
    cores = cfg.cores_per_node // njobs
    jobs = [JobPlan(ids(), user, cores, gpus // njobs, name="train" if gpus else "sim") for _ in range(njobs)]
    return NodePlan(jobs, cpu_env=HEALTHY_CPU, mem_env=HEALTHY_MEM)


def _fill_healthy(cfg, plans, free_nodes, users, ids, rng):
    """Spread ``free_nodes`` over ``users`` in contiguous blocks."""
    if not users:
        return
    per = math.ceil(len(free_nodes) / len(users)) if free_nodes else 0
    for k, i in enumerate(free_nodes):
        plans[i] = _healthy_plan(cfg, i, users[min(k // per, len(users) - 1)], ids, rng)


def _lowgpu_plan(cfg: ScenarioConfig, i: int, user: str, ids: _Ids) -> NodePlan:
    return NodePlan(
        [JobPlan(ids(), user, min(20, cfg.cores_per_node), 1 if cfg.gpus_on(i) else 0, name="train")],
        cpu_env=cfg.cpu_envelope or (0.05, 0.12),
        # integer percent; 45 itself would not count as low
        gpu_env=(23, 44),
        gpu_mem_env=(2048, 2048),
        mem_fixed_mb=min(63 * 1024, cfg.mem_gb_per_node * 1024),
    )


def _threadstorm_plan(cfg: ScenarioConfig, i: int, user: str, ids: _Ids) -> NodePlan:
    return NodePlan(
        [JobPlan(ids(), user, cfg.cores_per_node, cfg.gpus_on(i), name="mp_writer")],
        cpu_env=cfg.cpu_envelope or (1.8, 6.0),
        mem_env=HEALTHY_MEM,
    )


def _lowcpu_plan(cfg: ScenarioConfig, i: int, user: str, ids: _Ids) -> NodePlan:
    return NodePlan(
        [JobPlan(ids(), user, cfg.cores_per_node, cfg.gpus_on(i), name="serial")],
        cpu_env=(0.05, 0.3),
        mem_env=(0.05, 0.1),
    )


def _share(n: int, frac: int) -> int:
    return max(1, n // frac)


def preset_healthy(cfg: ScenarioConfig) -> Scenario:
    rng = SplitMix64(cfg.seed ^ 0x5EED)
    ids = _Ids()
    plans = [NodePlan() for _ in range(cfg.nodes)]
    _fill_healthy(cfg, plans, list(range(cfg.nodes)), cfg.user_list(), ids, rng)
    return Scenario(cfg, None, [(0, plans)])


def preset_lowgpu(cfg: ScenarioConfig) -> Scenario:
    """One user under-feeds one GPU per node, one job per node."""
    rng = SplitMix64(cfg.seed ^ 0x5EED)
    ids = _Ids()
    users = cfg.user_list()
    plans = [NodePlan() for _ in range(cfg.nodes)]
    mine = list(range(_share(cfg.nodes, 4)))
    for i in mine:
        plans[i] = _lowgpu_plan(cfg, i, users[0], ids)
    _fill_healthy(cfg, plans, list(range(len(mine), cfg.nodes)), users[1:], ids, rng)
    return Scenario(cfg, users[0], [(0, plans)])


def preset_threadstorm(cfg: ScenarioConfig) -> Scenario:
    """One user's single job per node drives the load far past the core count."""
    rng = SplitMix64(cfg.seed ^ 0x5EED)
    ids = _Ids()
    users = cfg.user_list()
    plans = [NodePlan() for _ in range(cfg.nodes)]
    mine = list(range(_share(cfg.nodes, 4)))
    for i in mine:
        plans[i] = _threadstorm_plan(cfg, i, users[0], ids)
    _fill_healthy(cfg, plans, list(range(len(mine), cfg.nodes)), users[1:], ids, rng)
    return Scenario(cfg, users[0], [(0, plans)])


MISALLOC_JOBS = 5


def preset_misalloc(cfg: ScenarioConfig) -> Scenario:
    """Five GPU jobs that each request a whole node, then the corrected submission.

    Phase 1 (first half): every job asks for all cores and one GPU, so each
    sits alone on a node with a GPU idle. Phase 2: 20 cores and one GPU per
    job, two jobs per node, leaving the first node with a single job.
    """
    if cfg.nodes < MISALLOC_JOBS or cfg.gpus_per_node < 2 or cfg.cpu_only_nodes > cfg.nodes - MISALLOC_JOBS:
        raise ValueError("misalloc needs at least 5 GPU nodes with 2 GPUs each")
    rng = SplitMix64(cfg.seed ^ 0x5EED)
    users = cfg.user_list()
    me = users[0]
    job_ids = [str(2001 + k) for k in range(MISALLOC_JOBS)]
    low_cpu, low_gpu = (0.05, 0.10), (5, 20)

    ids = _Ids()
    others = [NodePlan() for _ in range(cfg.nodes)]
    _fill_healthy(cfg, others, list(range(MISALLOC_JOBS, cfg.nodes)), users[1:], ids, rng)

    phase1 = list(others)
    for k, jid in enumerate(job_ids):
        phase1[k] = NodePlan(
            [JobPlan(jid, me, cfg.cores_per_node, 1, name="infer")],
            cpu_env=low_cpu,
            gpu_env=low_gpu,
            gpu_mem_env=(1024, 3072),
            mem_env=(0.05, 0.1),
        )

    cores = min(20, cfg.cores_per_node // 2)
    phase2 = list(others)
    # job 1 alone on the first node, then pairs
    groups = [[job_ids[0]], job_ids[1:3], job_ids[3:5]]
    for k, group in enumerate(groups):
        single = len(group) == 1
        phase2[k] = NodePlan(
            [JobPlan(jid, me, cores, 1, name="infer") for jid in group],
            cpu_env=low_cpu if single else (0.10, 0.20),
            gpu_env=low_gpu if single else (30, 60),
            gpu_mem_env=(1024, 3072),
            mem_env=(0.05, 0.1) if single else (0.1, 0.2),
        )
    for k in range(len(groups), MISALLOC_JOBS):
        phase2[k] = NodePlan()
    return Scenario(cfg, me, [(0, phase1), (cfg.n_intervals // 2, phase2)])


def preset_mixed(cfg: ScenarioConfig) -> Scenario:
    """Low-GPU, thread-storm and low-CPU users next to healthy ones, plus a shared Jupyter node."""
    rng = SplitMix64(cfg.seed ^ 0x5EED)
    ids = _Ids()
    users = cfg.user_list()
    plans = [NodePlan() for _ in range(cfg.nodes)]
    q = _share(cfg.nodes, 8)
    roles = [_lowgpu_plan, _threadstorm_plan, _lowcpu_plan]
    nxt = 0
    for r, make in enumerate(roles[: max(0, min(len(roles), len(users), cfg.nodes - 1))]):
        for _ in range(q):
            if nxt < cfg.nodes - 1:
                plans[nxt] = make(cfg, nxt, users[r], ids)
                nxt += 1
    used_roles = min(len(roles), len(users))
    jupyter = cfg.nodes - 1 if cfg.nodes >= 2 else None
    if jupyter is not None and jupyter >= nxt:
        a, b = users[-1], users[0]
        gpus = cfg.gpus_on(jupyter)
        plans[jupyter] = NodePlan(
            [
                JobPlan(ids(), a, 4, min(1, gpus), JobType.JUPYTER, "notebook"),
                JobPlan(ids(), b, 4, 0, JobType.JUPYTER, "notebook"),
            ],
            cpu_env=(0.05, 0.5),
            mem_env=HEALTHY_MEM,
        )
    # leave roughly one node in eight idle
    end = (jupyter if jupyter is not None else cfg.nodes) - (cfg.nodes // 8)
    _fill_healthy(cfg, plans, list(range(nxt, max(nxt, end))), users[used_roles:] or users, ids, rng)
    return Scenario(cfg, users[0], [(0, plans)])


PRESET_BUILDERS: dict[str, Callable[[ScenarioConfig], Scenario]] = {
    "healthy": preset_healthy,
    "lowgpu": preset_lowgpu,
    "misalloc": preset_misalloc,
    "threadstorm": preset_threadstorm,
    "mixed": preset_mixed,
}


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    return PRESET_BUILDERS[cfg.preset](cfg)


@dataclass
class FileSet:
    timestamp: datetime
    files: dict[str, str]

    @property
    def dirname(self) -> str:
        return format_ts(self.timestamp)

    def view(self) -> ClusterView:
        return load_cluster_files(self.files)

    def write(self, out_dir: str | Path) -> Path:
        d = Path(out_dir) / self.dirname
        for rel, text in self.files.items():
            p = d / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text)
        return d


def _walk(rng: SplitMix64, value: float | None, lo: float, hi: float) -> float:
    if value is None or not lo <= value <= hi:
        return rng.uniform(lo, hi)
    step = 0.1 * (hi - lo)
    return min(hi, max(lo, value + rng.uniform(-step, step)))


class _NodeState:
    def __init__(self):
        self.plan_id = None
        self.cpu = None
        self.mem = None
        self.gpu_util: dict[int, float] = {}
        self.gpu_mem: dict[int, float] = {}


def generate_timeline(cfg: ScenarioConfig) -> Iterator[FileSet]:
    """One FileSet per interval, each a complete cluster directory."""
    scenario = build_scenario(cfg)
    rng = SplitMix64(cfg.seed)
    users = cfg.user_list()
    user_text = "".join(f"{u}\t{u}@example.org\n" for u in [*users, ADMIN_USER])
    priv_text = f"# users allowed to run --all\n{ADMIN_USER}\n"
    mem_total_mb = cfg.mem_gb_per_node * 1024
    gpu_total_mb = cfg.gpu_mem_gb * 1024
    states = [_NodeState() for _ in range(cfg.nodes)]

    for step in range(cfg.n_intervals):
        ts = cfg.start + timedelta(hours=cfg.interval_hours * step)
        plans = scenario.plan_at(step)
        nodes, jobs, gpu_files = [], [], {}
        for i, plan in enumerate(plans):
            st = states[i]
            if st.plan_id != id(plan):
                # new phase for this node: restart the walk inside the new envelopes
                st = states[i] = _NodeState()
                st.plan_id = id(plan)
            name = node_name(i)
            gpus_total = cfg.gpus_on(i)
            cores_alloc = min(cfg.cores_per_node, sum(j.cores for j in plan.jobs))
            gpus_alloc = min(gpus_total, sum(j.gpus for j in plan.jobs))

            st.cpu = _walk(rng, st.cpu, *plan.cpu_env)
            load5 = round(st.cpu * cfg.cores_per_node, 2)
            if plan.mem_fixed_mb is not None:
                mem_used = plan.mem_fixed_mb
            else:
                st.mem = _walk(rng, st.mem, *plan.mem_env)
                mem_used = int(st.mem * mem_total_mb)
            if not plan.jobs:
                state = NodeState.IDLE
            elif cores_alloc >= cfg.cores_per_node:
                state = NodeState.ALLOC
            else:
                state = NodeState.MIXED
            nodes.append(
                NodeRecord(name, cfg.cores_per_node, cores_alloc, load5, mem_total_mb, mem_used, gpus_total, gpus_alloc, state)
            )
            for j in plan.jobs:
                jobs.append(JobRecord(j.job_id, j.user, name, j.job_type, j.cores, j.gpus, JobState.RUNNING, j.name))

            if gpus_total:
                recs = []
                for g in range(gpus_total):
                    if g < gpus_alloc:
                        st.gpu_util[g] = _walk(rng, st.gpu_util.get(g), *plan.gpu_env)
                        st.gpu_mem[g] = _walk(rng, st.gpu_mem.get(g), *plan.gpu_mem_env)
                        util, gmem = round(st.gpu_util[g]), min(gpu_total_mb, int(st.gpu_mem[g]))
                    else:
                        util, gmem = 0, 0
                    recs.append(GpuRecord(name, g, util, gmem, gpu_total_mb))
                gpu_files[f"{GPU_DIR}/{name}.csv"] = emit_gpu_csv(recs)

        files = {
            NODES_FILE: emit_node_table(nodes),
            JOBS_FILE: emit_job_table(jobs),
            USERS_FILE: user_text,
            PRIVILEGES_FILE: priv_text,
            META_FILE: f"cluster\t{cfg.cluster_name}\ntimestamp\t{format_ts(ts)}\n",
            **gpu_files,
        }
        yield FileSet(ts, files)


def write_timeline(cfg: ScenarioConfig, out_dir: str | Path) -> list[Path]:
    return [fs.write(out_dir) for fs in generate_timeline(cfg)]


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="hpcload-sim", description="Generate a synthetic cluster timeline.")
    p.add_argument("--preset", choices=PRESETS, default="healthy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--nodes", type=int, default=16)
    p.add_argument("--users", type=int, default=4)
    p.add_argument("--hours", type=float, default=24.0)
    p.add_argument("--interval", type=float, default=0.25, help="hours between snapshots")
    p.add_argument("--cluster", default="sim")
    p.add_argument("--start", type=lambda s: datetime.fromisoformat(s.replace("Z", "+00:00")), default=DEFAULT_START)
    args = p.parse_args(argv)
    try:
        cfg = ScenarioConfig(
            seed=args.seed,
            nodes=args.nodes,
            users=args.users,
            duration_hours=args.hours,
            interval_hours=args.interval,
            preset=args.preset,
            cluster_name=args.cluster,
            start=args.start if args.start.tzinfo else args.start.replace(tzinfo=timezone.utc),
        )
        dirs = write_timeline(cfg, args.out)
    except ValueError as exc:
        p.error(str(exc))
    print(f"wrote {len(dirs)} snapshots to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
