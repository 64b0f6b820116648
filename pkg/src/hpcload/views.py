"""Plain-text renderers for the command-line views.

Every renderer is a pure function of its arguments, so output is
byte-stable and can be diffed against golden files.
"""

from __future__ import annotations

import re
from typing import Sequence

from .collectors import ClusterView, NodeRecord, UserTable
from .model import JobType, UserNodeUsage, mb_to_gb_floor, mb_to_gb_round, natural_key

NO_EMAIL = "(no email on file)"
HIDDEN = "(hidden)"


def _triple(used, free, total) -> str:
    if used is None or total is None:
        return "-"
    return f"{used}/{free}/{total}"


def _load(x: float | None) -> str:
    return "-" if x is None else f"{x:.2f}"


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]], indent: str = "") -> list[str]:
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    out = []
    for r in [header, *rows]:
        out.append((indent + "  ".join(c.ljust(w) for c, w in zip(r, widths))).rstrip())
    return out


def _is_jupyter_only(u: UserNodeUsage) -> bool:
    return u.job_type == JobType.JUPYTER.value


def user_rows(view: ClusterView, user: str) -> list[UserNodeUsage]:
    """The user's per-node rows, excluding nodes where they only run notebooks."""
    return [u for u in view.usages() if u.user == user and not _is_jupyter_only(u)]


def _usage_table(rows: Sequence[UserNodeUsage], gpu: bool) -> list[str]:
    header = ["NODE", "CPU(U/F/T)", "LOAD", "MEM_GB(U/F/T)"]
    if gpu:
        header += ["GPU(U/F/T)", "GPULOAD", "GPUMEM_GB(U/F/T)"]
    if not rows:
        return format_table(header, []) + ["no active jobs"]

    body = []
    for u in rows:
        r = [
            u.node_name,
            _triple(u.cpu_used, u.cpu_free, u.cpu_total),
            _load(u.load_norm),
            _triple(u.mem_used_gb, u.mem_free_gb, u.mem_total_gb),
        ]
        if gpu:
            if u.gpu_total == 0:
                r += ["-", "-", "-"]
            else:
                r += [
                    _triple(u.gpu_used, u.gpu_free, u.gpu_total),
                    _load(u.gpu_load_norm),
                    _triple(u.gpu_mem_used_gb, u.gpu_mem_free_gb, u.gpu_mem_total_gb),
                ]
        body.append(r)

    cpu_t = sum(u.cpu_total for u in rows)
    cpu_u = sum(u.cpu_used for u in rows)
    mem_t = sum(u.mem_total_gb for u in rows)
    mem_u = sum(u.mem_used_gb for u in rows)
    # aggregate load = total load average over total cores
    total = [
        "TOTAL",
        _triple(cpu_u, cpu_t - cpu_u, cpu_t),
        _load(sum(u.load_norm * u.cpu_total for u in rows) / cpu_t),
        _triple(mem_u, mem_t - mem_u, mem_t),
    ]
    if gpu:
        grows = [u for u in rows if u.gpu_total > 0]
        if not grows:
            total += ["-", "-", "-"]
        else:
            g_t = sum(u.gpu_total for u in grows)
            g_u = sum(u.gpu_used for u in grows)
            loaded = [u for u in grows if u.gpu_load_norm is not None and u.gpu_used]
            g_load = (
                sum(u.gpu_load_norm * u.gpu_used for u in loaded) / sum(u.gpu_used for u in loaded)
                if loaded
                else None
            )
            mem_rows = [u for u in grows if u.gpu_mem_total_gb is not None]
            gm_t = sum(u.gpu_mem_total_gb for u in mem_rows) if mem_rows else None
            gm_u = sum(u.gpu_mem_used_gb for u in mem_rows) if mem_rows else None
            total += [
                _triple(g_u, g_t - g_u, g_t),
                _load(g_load),
                _triple(gm_u, None if gm_t is None else gm_t - gm_u, gm_t),
            ]
    body.append(total)
    return format_table(header, body)


def render_user_view(view: ClusterView, user: str, gpu: bool = False) -> str:
    return "\n".join(_usage_table(user_rows(view, user), gpu)) + "\n"


def render_jupyter_block(view: ClusterView, user: str | None = None) -> str:
    jobs = [
        j
        for j in view.running_jobs()
        if j.job_type is JobType.JUPYTER and (user is None or j.user == user)
    ]
    jobs.sort(key=lambda j: (natural_key(j.node_name), j.user, natural_key(j.job_id)))
    lines = ["JUPYTER NOTEBOOK JOBS"]
    if not jobs:
        lines.append("none")
    else:
        rows = [[j.node_name, j.user, j.job_id, str(j.gpus_req) if j.gpus_req else "-"] for j in jobs]
        lines += format_table(["NODE", "USER", "JOBID", "GPUS"], rows)
    return "\n".join(lines) + "\n"


def render_all_view(view: ClusterView, gpu: bool = False, user_table: UserTable | None = None) -> str:
    table = user_table if user_table is not None else view.user_table
    parts = [render_jupyter_block(view)]
    users = sorted({u.user for u in view.usages() if not _is_jupyter_only(u)})
    for user in users:
        email = table.email(user) or NO_EMAIL
        parts.append(f"USER {user} {email}\n" + render_user_view(view, user, gpu))
    return "\n".join(parts)


def top_nodes(view: ClusterView, n: int) -> list[NodeRecord]:
    if n < 1:
        raise ValueError("n must be >= 1")
    ranked = sorted(view.nodes, key=lambda x: (-x.load_norm, natural_key(x.node_name)))
    return ranked[:n]


def render_top_view(view: ClusterView, n: int) -> str:
    rows = [[x.node_name, f"{x.load_norm:.2f}", str(x.cores_total), x.state.value] for x in top_nodes(view, n)]
    return "\n".join(format_table(["NODE", "LOAD_NORM", "CORES", "STATE"], rows)) + "\n"


_BRACKET = re.compile(r"^(.*?)\[([^\]]+)\](.*)$")


def expand_nodelist(pattern: str) -> list[str]:
    """Expand ``c-8-6-[1-3],c-9-1-1`` style lists, keeping order.

    Zero padding in ranges is preserved (``n[08-10]`` -> n08, n09, n10).
    """
    items, depth, cur = [], 0, ""
    for ch in pattern:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced brackets in {pattern!r}")
        if ch == "," and depth == 0:
            items.append(cur)
            cur = ""
        else:
            cur += ch
    if depth:
        raise ValueError(f"unbalanced brackets in {pattern!r}")
    items.append(cur)

    out: list[str] = []
    for item in (i.strip() for i in items):
        if item:
            out.extend(_expand_one(item))
    return out


def _expand_one(item: str) -> list[str]:
    m = _BRACKET.match(item)
    if not m:
        return [item]
    prefix, body, rest = m.groups()
    tails = _expand_one(rest)
    out = []
    for piece in body.split(","):
        if "-" in piece:
            lo, hi = piece.split("-", 1)
            if not (lo.isdigit() and hi.isdigit()) or int(lo) > int(hi):
                raise ValueError(f"bad range {piece!r}")
            width = len(lo) if lo.startswith("0") else 0
            nums = [str(i).zfill(width) for i in range(int(lo), int(hi) + 1)]
        else:
            nums = [piece]
        out.extend(prefix + num + t for num in nums for t in tails)
    return out


def render_nodes_view(
    view: ClusterView,
    nodelist: Sequence[str],
    gpu: bool = False,
    viewer: str | None = None,
    privileged: bool = True,
) -> tuple[str, int]:
    """Node inventory plus running jobs for each requested node.

    Returns ``(text, found)`` where ``found`` counts names that resolved.
    Unprivileged viewers see other users' job names as ``(hidden)``.
    """
    blocks, found = [], 0
    for name in nodelist:
        node = view.node(name)
        if node is None:
            blocks.append(f"node {name}: not found\n")
            continue
        found += 1
        head = (
            f"NODE {node.node_name}  STATE {node.state.value}  LOAD {node.load_norm:.2f}  "
            f"CPU(U/F/T) {_triple(node.cores_alloc, node.cores_free, node.cores_total)}  "
            f"MEM_GB(U/F/T) {_mem_triple(node)}  "
            f"GPU(U/F/T) {_triple(node.gpus_alloc, node.gpus_free, node.gpus_total)}"
        )
        lines = [head]
        jobs = sorted(view.running_jobs(name), key=lambda j: natural_key(j.job_id))
        if jobs:
            rows = [
                [
                    j.job_id,
                    j.user,
                    j.job_type.value,
                    str(j.cores_req),
                    str(j.gpus_req),
                    j.name if privileged or j.user == viewer else HIDDEN,
                ]
                for j in jobs
            ]
            lines += format_table(["JOBID", "USER", "TYPE", "CORES", "GPUS", "NAME"], rows, indent="  ")
        else:
            lines.append("  (no running jobs)")
        if gpu and node.gpus_total:
            recs = view.gpu_records.get(name)
            if recs is None:
                lines.append("  GPU data unavailable")
            else:
                for g in sorted(recs, key=lambda g: g.gpu_index):
                    lines.append(
                        f"  GPU {g.gpu_index}  util {g.util_percent}%  "
                        f"mem {mb_to_gb_floor(g.mem_used_mb)}/{mb_to_gb_round(g.mem_total_mb)} GB"
                    )
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks), found


def _mem_triple(node: NodeRecord) -> str:
    total = mb_to_gb_round(node.mem_total_mb)
    used = mb_to_gb_floor(node.mem_used_mb)
    return _triple(used, total - used, total)
