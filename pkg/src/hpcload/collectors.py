"""Parse scheduler-format tables and per-node GPU output into a ClusterView.

All inputs are plain text so a live scheduler can be swapped for files:

    nodes.txt   NODE|CORES_TOTAL|CORES_ALLOC|LOAD5|MEM_TOTAL_MB|MEM_USED_MB|GPUS_TOTAL|GPUS_ALLOC|STATE
    jobs.txt    JOBID|USER|NODE|JOBTYPE|CORES|GPUS|STATE|NAME
    gpu/<node>.csv   index,util,mem_used_mb,mem_total_mb   (no header)
    users.tsv   user<TAB>email
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

from .model import (
    GpuRecord,
    HpcloadWarning,
    JobRecord,
    JobState,
    JobType,
    NodeRecord,
    NodeState,
    UserNodeUsage,
    aggregate_user_node,
    natural_key,
)

log = logging.getLogger(__name__)

NODE_HEADER = "NODE|CORES_TOTAL|CORES_ALLOC|LOAD5|MEM_TOTAL_MB|MEM_USED_MB|GPUS_TOTAL|GPUS_ALLOC|STATE"
JOB_HEADER = "JOBID|USER|NODE|JOBTYPE|CORES|GPUS|STATE|NAME"

NODES_FILE = "nodes.txt"
JOBS_FILE = "jobs.txt"
USERS_FILE = "users.tsv"
PRIVILEGES_FILE = "privileges.tsv"
META_FILE = "meta.tsv"
GPU_DIR = "gpu"


class ParseError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None, source: str = ""):
        self.lineno = lineno
        self.source = source
        where = f"{source or 'input'}:{lineno}: " if lineno is not None else ""
        super().__init__(where + msg)


class AssemblyError(ValueError):
    pass


class StaleDataWarning(HpcloadWarning):
    pass


def _data_lines(text: str, header: str | None, source: str):
    lines = text.splitlines()
    start = 0
    if header is not None:
        if not lines or lines[0].strip() != header:
            raise ParseError(f"expected header {header!r}", 1, source)
        start = 1
    for i, line in enumerate(lines[start:], start=start + 1):
        if line.strip():
            yield i, line


def _int(tok: str, what: str, lineno: int, source: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{what}: not an integer: {tok!r}", lineno, source) from None


def parse_node_table(text: str, source: str = NODES_FILE) -> list[NodeRecord]:
    nodes = []
    for lineno, line in _data_lines(text, NODE_HEADER, source):
        parts = line.split("|")
        if len(parts) != 9:
            raise ParseError(f"expected 9 fields, got {len(parts)}", lineno, source)
        name, ct, ca, load, mt, mu, gt, ga, state = parts
        try:
            state_v = NodeState(state)
        except ValueError:
            raise ParseError(f"unknown node state {state!r}", lineno, source) from None
        try:
            load5 = float(load)
        except ValueError:
            raise ParseError(f"LOAD5: not a number: {load!r}", lineno, source) from None
        try:
            nodes.append(
                NodeRecord(
                    name,
                    _int(ct, "CORES_TOTAL", lineno, source),
                    _int(ca, "CORES_ALLOC", lineno, source),
                    load5,
                    _int(mt, "MEM_TOTAL_MB", lineno, source),
                    _int(mu, "MEM_USED_MB", lineno, source),
                    _int(gt, "GPUS_TOTAL", lineno, source),
                    _int(ga, "GPUS_ALLOC", lineno, source),
                    state_v,
                )
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), lineno, source) from None
    return nodes


def emit_node_table(nodes: Iterable[NodeRecord]) -> str:
    out = [NODE_HEADER]
    for n in nodes:
        out.append(
            f"{n.node_name}|{n.cores_total}|{n.cores_alloc}|{n.load5:.2f}|{n.mem_total_mb}|"
            f"{n.mem_used_mb}|{n.gpus_total}|{n.gpus_alloc}|{n.state.value}"
        )
    return "\n".join(out) + "\n"


def parse_job_table(text: str, source: str = JOBS_FILE) -> list[JobRecord]:
    jobs = []
    for lineno, line in _data_lines(text, JOB_HEADER, source):
        parts = line.split("|")
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}", lineno, source)
        job_id, user, node, jtype, cores, gpus, state, name = parts
        try:
            jtype_v = JobType(jtype)
        except ValueError:
            raise ParseError(f"unknown job type {jtype!r}", lineno, source) from None
        try:
            state_v = JobState(state)
        except ValueError:
            raise ParseError(f"unknown job state {state!r}", lineno, source) from None
        if not job_id or not user:
            raise ParseError("empty JOBID or USER", lineno, source)
        try:
            jobs.append(
                JobRecord(
                    job_id,
                    user,
                    node,
                    jtype_v,
                    _int(cores, "CORES", lineno, source),
                    _int(gpus, "GPUS", lineno, source),
                    state_v,
                    name,
                )
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), lineno, source) from None
    return jobs


def emit_job_table(jobs: Iterable[JobRecord]) -> str:
    out = [JOB_HEADER]
    for j in jobs:
        out.append(
            f"{j.job_id}|{j.user}|{j.node_name}|{j.job_type.value}|{j.cores_req}|"
            f"{j.gpus_req}|{j.state.value}|{j.name}"
        )
    return "\n".join(out) + "\n"


def parse_gpu_csv(node_name: str, text: str) -> list[GpuRecord]:
    source = f"{GPU_DIR}/{node_name}.csv"
    recs = []
    seen = set()
    for lineno, line in _data_lines(text, None, source):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", lineno, source)
        idx, util, used, total = (_int(p, "field", lineno, source) for p in parts)
        if idx in seen:
            raise ParseError(f"duplicate GPU index {idx}", lineno, source)
        if not 0 <= util <= 100:
            raise ParseError(f"utilization {util} outside 0-100", lineno, source)
        seen.add(idx)
        try:
            recs.append(GpuRecord(node_name, idx, util, used, total))
        except ValueError as exc:
            raise ParseError(str(exc), lineno, source) from None
    return recs


def emit_gpu_csv(gpus: Iterable[GpuRecord]) -> str:
    return "".join(f"{g.gpu_index},{g.util_percent},{g.mem_used_mb},{g.mem_total_mb}\n" for g in gpus)


@dataclass
class UserTable:
    entries: dict[str, str] = field(default_factory=dict)

    def email(self, user: str) -> str | None:
        return self.entries.get(user)


def load_user_table(text: str) -> UserTable:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        user = parts[0].strip()
        email = parts[1].strip() if len(parts) > 1 else ""
        if "@" not in email:
            warnings.warn(f"{USERS_FILE}:{lineno}: no valid email for {user!r}, skipped", HpcloadWarning, stacklevel=2)
            continue
        # periodic updates append; the latest line wins
        entries[user] = email
    return UserTable(entries)


def emit_user_table(table: UserTable) -> str:
    return "".join(f"{u}\t{e}\n" for u, e in table.entries.items())


def load_privileges(text: str) -> frozenset[str]:
    users = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            users.add(line.split("\t")[0])
    return frozenset(users)


@dataclass
class ClusterView:
    timestamp: datetime
    cluster_name: str
    nodes: list[NodeRecord]
    jobs: list[JobRecord]
    # node -> records; a GPU node missing here had no usable GPU data
    gpu_records: dict[str, list[GpuRecord]]
    user_table: UserTable = field(default_factory=UserTable)
    warnings: list[str] = field(default_factory=list, compare=False)

    def node(self, name: str) -> NodeRecord | None:
        return self._node_index().get(name)

    def _node_index(self) -> dict[str, NodeRecord]:
        return {n.node_name: n for n in self.nodes}

    def running_jobs(self, node_name: str | None = None) -> list[JobRecord]:
        return [j for j in self.jobs if j.running and (node_name is None or j.node_name == node_name)]

    def usages(self) -> list[UserNodeUsage]:
        """All (user, node) rows, sorted by user then node."""
        per_node: dict[str, list[JobRecord]] = {}
        for j in self.jobs:
            if j.running:
                per_node.setdefault(j.node_name, []).append(j)
        rows = []
        with warnings.catch_warnings():
            # policy violations are attached to the rows themselves
            warnings.simplefilter("ignore")
            for n in self.nodes:
                if n.node_name in per_node:
                    gpus = self.gpu_records.get(n.node_name) if n.gpus_total else []
                    rows.extend(aggregate_user_node(n, per_node[n.node_name], gpus))
        rows.sort(key=lambda r: (r.user, natural_key(r.node_name)))
        return rows


def assemble_cluster_view(
    nodes: Iterable[NodeRecord],
    jobs: Iterable[JobRecord],
    gpu_texts: Mapping[str, str],
    user_table: UserTable | None = None,
    timestamp: datetime | None = None,
    cluster_name: str = "cluster",
) -> ClusterView:
    """Cross-check the parsed inputs and parse GPU text node by node, in name order."""
    nodes = sorted(nodes, key=lambda n: natural_key(n.node_name))
    jobs = sorted(jobs, key=lambda j: (natural_key(j.job_id), j.user))
    index = {}
    for n in nodes:
        if n.node_name in index:
            raise AssemblyError(f"duplicate node {n.node_name}")
        index[n.node_name] = n
    orphans = [j for j in jobs if j.running and j.node_name not in index]
    if orphans:
        listing = ", ".join(f"{j.job_id} ({j.user} on {j.node_name})" for j in orphans)
        raise AssemblyError(f"running jobs reference unknown nodes: {listing}")

    notes: list[str] = []
    gpu_records: dict[str, list[GpuRecord]] = {}
    for name in sorted(gpu_texts, key=natural_key):
        if name not in index or index[name].gpus_total == 0:
            notes.append(f"GPU data for {name} ignored: not a GPU node")
    for n in nodes:
        if n.gpus_total == 0:
            continue
        text = gpu_texts.get(n.node_name)
        if text is None:
            notes.append(f"{n.node_name}: GPU data missing, GPU load/memory left blank")
            continue
        recs = parse_gpu_csv(n.node_name, text)
        if any(r.gpu_index >= n.gpus_total for r in recs):
            raise AssemblyError(f"{n.node_name}: GPU index beyond gpus_total={n.gpus_total}")
        gpu_records[n.node_name] = recs
    for msg in notes:
        warnings.warn(msg, StaleDataWarning, stacklevel=2)
    if timestamp is None:
        timestamp = datetime.now(timezone.utc)
    return ClusterView(
        timestamp=timestamp.astimezone(timezone.utc),
        cluster_name=cluster_name,
        nodes=nodes,
        jobs=jobs,
        gpu_records=gpu_records,
        user_table=user_table or UserTable(),
        warnings=notes,
    )


def format_ts(ts: datetime) -> str:
    """RFC 3339, UTC, second resolution: ``2024-03-04T10:00:00Z``."""
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ts(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def read_meta(text: str) -> dict[str, str]:
    meta = {}
    for line in text.splitlines():
        if "\t" in line and not line.startswith("#"):
            k, v = line.split("\t", 1)
            meta[k.strip()] = v.strip()
    return meta


def load_cluster_files(
    files: Mapping[str, str],
    timestamp: datetime | None = None,
    cluster_name: str | None = None,
) -> ClusterView:
    """Build a view from a mapping of relative path -> text (one cluster dir)."""
    meta = read_meta(files.get(META_FILE, ""))
    if timestamp is None and "timestamp" in meta:
        timestamp = parse_ts(meta["timestamp"])
    if cluster_name is None:
        cluster_name = meta.get("cluster", "cluster")
    if NODES_FILE not in files or JOBS_FILE not in files:
        raise ParseError(f"cluster data needs {NODES_FILE} and {JOBS_FILE}")
    nodes = parse_node_table(files[NODES_FILE])
    jobs = parse_job_table(files[JOBS_FILE])
    gpu_texts = {
        Path(p).stem: text for p, text in files.items() if p.startswith(GPU_DIR + "/") and p.endswith(".csv")
    }
    users = load_user_table(files.get(USERS_FILE, ""))
    return assemble_cluster_view(nodes, jobs, gpu_texts, users, timestamp, cluster_name)


def read_cluster_dir(path: str | Path) -> dict[str, str]:
    path = Path(path)
    files = {}
    for name in (NODES_FILE, JOBS_FILE, USERS_FILE, PRIVILEGES_FILE, META_FILE):
        p = path / name
        if p.exists():
            files[name] = p.read_text()
    gpu_dir = path / GPU_DIR
    if gpu_dir.is_dir():
        for p in sorted(gpu_dir.glob("*.csv")):
            files[f"{GPU_DIR}/{p.name}"] = p.read_text()
    return files


def load_cluster_dir(
    path: str | Path,
    timestamp: datetime | None = None,
    cluster_name: str | None = None,
) -> ClusterView:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"cluster dir not found: {path}")
    files = read_cluster_dir(path)
    if timestamp is None and META_FILE not in files:
        try:
            timestamp = parse_ts(path.name)
        except ValueError:
            pass
    return load_cluster_files(files, timestamp, cluster_name)
