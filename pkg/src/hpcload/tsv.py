"""Tab-separated snapshot rows: the ``--tsv`` output and the archive file format."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from .collectors import ClusterView, ParseError, format_ts, parse_ts
from .model import UserNodeUsage

CPU_COLUMNS = [
    "ts",
    "cluster",
    "user",
    "node",
    "jobtype",
    "cpu_total",
    "cpu_used",
    "cpu_free",
    "load_norm",
    "mem_total_gb",
    "mem_used_gb",
    "mem_free_gb",
]
GPU_COLUMNS = [
    "gpu_total",
    "gpu_used",
    "gpu_free",
    "gpu_load_norm",
    "gpu_mem_total_gb",
    "gpu_mem_used_gb",
    "gpu_mem_free_gb",
]
COLUMNS = CPU_COLUMNS + GPU_COLUMNS
ABSENT = "-"


@dataclass(frozen=True)
class SnapshotRow:
    ts: datetime
    cluster: str
    usage: UserNodeUsage


def _opt(value, fmt: str = "{}") -> str:
    return ABSENT if value is None else fmt.format(value)


def format_row(ts: str, cluster: str, u: UserNodeUsage, gpu: bool = True) -> str:
    fields = [
        ts,
        cluster,
        u.user,
        u.node_name,
        u.job_type,
        str(u.cpu_total),
        str(u.cpu_used),
        str(u.cpu_free),
        f"{u.load_norm:.2f}",
        str(u.mem_total_gb),
        str(u.mem_used_gb),
        str(u.mem_free_gb),
    ]
    if gpu:
        if u.gpu_total == 0:
            fields += ["0"] + [ABSENT] * 6
        else:
            fields += [
                str(u.gpu_total),
                str(u.gpu_used),
                str(u.gpu_free),
                _opt(u.gpu_load_norm, "{:.2f}"),
                _opt(u.gpu_mem_total_gb),
                _opt(u.gpu_mem_used_gb),
                _opt(u.gpu_mem_free_gb),
            ]
    return "\t".join(fields)


def render_tsv(view: ClusterView, user: str | None = None, gpu: bool = True, ts: datetime | None = None) -> str:
    """Header plus one line per (user, node); ``user=None`` means every user."""
    stamp = format_ts(ts or view.timestamp)
    lines = ["\t".join(COLUMNS if gpu else CPU_COLUMNS)]
    for u in view.usages():
        if user is None or u.user == user:
            lines.append(format_row(stamp, view.cluster_name, u, gpu))
    return "\n".join(lines) + "\n"


def _int_or_none(tok: str) -> int | None:
    return None if tok == ABSENT else int(tok)


def parse_tsv(text: str, source: str = "tsv") -> list[SnapshotRow]:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty TSV (missing header)", 1, source)
    header = lines[0].split("\t")
    if header == COLUMNS:
        gpu = True
    elif header == CPU_COLUMNS:
        gpu = False
    else:
        raise ParseError("unrecognized TSV header", 1, source)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        f = line.split("\t")
        if len(f) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(f)}", lineno, source)
        try:
            kw = dict(
                user=f[2],
                node_name=f[3],
                job_type=f[4],
                cpu_total=int(f[5]),
                cpu_used=int(f[6]),
                cpu_free=int(f[7]),
                load_norm=float(f[8]),
                mem_total_gb=int(f[9]),
                mem_used_gb=int(f[10]),
                mem_free_gb=int(f[11]),
            )
            if gpu:
                gpu_total = int(f[12])
                if gpu_total == 0:
                    # CPU-only node: the remaining six fields are placeholders
                    if any(x != ABSENT for x in f[13:]):
                        raise ValueError("GPU fields on a node with gpu_total=0")
                else:
                    load = f[15]
                    kw.update(
                        gpu_total=gpu_total,
                        gpu_used=int(f[13]),
                        gpu_free=int(f[14]),
                        gpu_load_norm=None if load == ABSENT else float(load),
                        gpu_mem_total_gb=_int_or_none(f[16]),
                        gpu_mem_used_gb=_int_or_none(f[17]),
                        gpu_mem_free_gb=_int_or_none(f[18]),
                    )
            rows.append(SnapshotRow(parse_ts(f[0]), f[1], UserNodeUsage(**kw)))
        except ValueError as exc:
            raise ParseError(str(exc), lineno, source) from None
    return rows
