"""Weekly utilization analysis over the snapshot archive.

Every archived (user, node, snapshot) row is classified on its own; each
flagged row is worth one snapshot interval of node-hours to its user. The
top users per category make up the report, and notification drafts are
written for staff to review (nothing is sent).
"""

from __future__ import annotations

import argparse
import sys
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .archive import SnapshotArchive, _resolve_cluster, align_to_grid, read_range
from .collectors import UserTable, format_ts, load_user_table
from .model import Flag, HpcloadWarning, NoRecommendationError, NppnAdvice, Thresholds, classify_load, recommend_nppn
from .tsv import SnapshotRow
from .views import format_table

SECTION_TITLES = {
    Flag.LOW_GPU: "Low GPU load",
    Flag.LOW_CPU: "Low CPU load",
    Flag.HIGH_CPU: "High CPU load",
}
TOP_K = 10
EVIDENCE_CAP = 12
NO_RECIPIENT = "<no email on file>"


@dataclass(frozen=True)
class RankEntry:
    rank: int
    display_user: str
    node_hours: float


@dataclass
class WeeklyReport:
    period: tuple[datetime, datetime]
    cluster: str
    thresholds: Thresholds
    snapshot_count: int
    sections: dict[Flag, list[RankEntry]]
    anonymized: bool = False
    # per section: label -> real user; kept out of the rendered report
    anonymization_maps: dict[Flag, dict[str, str]] = field(default_factory=dict)


@dataclass
class EmailDraft:
    to: str
    user: str
    category: Flag
    node_hours: float
    evidence: list[SnapshotRow]
    suggestions: str
    nppn: NppnAdvice | None = None
    text: str = ""


def flatten(snapshots: Iterable[tuple[datetime, Sequence[SnapshotRow]]]) -> list[SnapshotRow]:
    return [row for _, rows in snapshots for row in rows]


def count_flagged(rows: Iterable[SnapshotRow], t: Thresholds) -> Counter:
    """(user, category) -> number of flagged (user, node, snapshot) rows."""
    counts: Counter = Counter()
    for row in rows:
        for flag in classify_load(row.usage, t):
            counts[row.usage.user, flag] += 1
    return counts


def compute_node_hours(rows: Iterable[SnapshotRow], t: Thresholds = Thresholds()) -> dict[tuple[str, Flag], float]:
    return {key: n * t.snapshot_interval_hours for key, n in count_flagged(rows, t).items()}


def rank_top(node_hours: Mapping[tuple[str, Flag], float], category: Flag, k: int = TOP_K) -> list[RankEntry]:
    totals = [(user, hours) for (user, flag), hours in node_hours.items() if flag == category and hours > 0]
    totals.sort(key=lambda uh: (-uh[1], uh[0]))
    return [RankEntry(i, user, hours) for i, (user, hours) in enumerate(totals[:k], start=1)]


def anonymize(report: WeeklyReport) -> WeeklyReport:
    """Replace names with per-section labels user01, user02... in rank order.

    Labels are assigned independently in each section, so the same label
    in two sections need not be the same person.
    """
    if report.anonymized:
        return report
    sections, maps = {}, {}
    for flag, entries in report.sections.items():
        width = max(2, len(str(len(entries))))
        labels = {}
        new = []
        for e in entries:
            label = f"user{e.rank:0{width}d}"
            labels[label] = e.display_user
            new.append(replace(e, display_user=label))
        sections[flag], maps[flag] = new, labels
    return replace(report, sections=sections, anonymized=True, anonymization_maps=maps)


def deanonymize(report: WeeklyReport) -> WeeklyReport:
    if not report.anonymized:
        return report
    sections = {
        flag: [replace(e, display_user=report.anonymization_maps[flag][e.display_user]) for e in entries]
        for flag, entries in report.sections.items()
    }
    return replace(report, sections=sections, anonymized=False, anonymization_maps={})


def week_start(day: date | datetime) -> datetime:
    """Monday 00:00 UTC of the week containing ``day``."""
    if isinstance(day, datetime):
        day = day.astimezone(timezone.utc).date()
    monday = day - timedelta(days=day.weekday())
    return datetime(monday.year, monday.month, monday.day, tzinfo=timezone.utc)


def render_report(report: WeeklyReport) -> str:
    start, end = report.period
    t = report.thresholds
    lines = [
        f"Weekly utilization report: {report.cluster}",
        f"Period: {format_ts(start)} .. {format_ts(end)}",
        f"Snapshots: {report.snapshot_count} (interval {t.snapshot_interval_hours:g} h)",
        f"Thresholds: low < {t.low_threshold:g}, high > {t.high_cpu_threshold:g}",
    ]
    if report.snapshot_count == 0:
        lines.append("Note: no snapshots found in this period.")
    for flag in Flag:
        entries = report.sections.get(flag, [])
        lines += ["", f"{SECTION_TITLES[flag]} (node-hours)"]
        if not entries:
            lines.append("(none)")
            continue
        width = max(4, *(len(e.display_user) for e in entries))
        lines.append(f"{'RANK':<4}  {'USER':<{width}}  NODE_HOURS")
        for e in entries:
            lines.append(f"{e.rank:<4}  {e.display_user:<{width}}  {e.node_hours:.2f}")
    return "\n".join(lines) + "\n"


def report_from_rows(
    rows: Sequence[SnapshotRow],
    period: tuple[datetime, datetime],
    cluster: str,
    thresholds: Thresholds,
    snapshot_count: int,
    anonymized: bool = True,
) -> WeeklyReport:
    hours = compute_node_hours(rows, thresholds)
    report = WeeklyReport(
        period=period,
        cluster=cluster,
        thresholds=thresholds,
        snapshot_count=snapshot_count,
        sections={flag: rank_top(hours, flag) for flag in Flag},
    )
    return anonymize(report) if anonymized else report


def build_weekly_report(
    archive: SnapshotArchive,
    start: datetime,
    thresholds: Thresholds = Thresholds(),
    days: int = 7,
    anonymized: bool = True,
) -> tuple[WeeklyReport, str]:
    if align_to_grid(start, thresholds.snapshot_interval_hours) != start:
        raise ValueError(f"period start {format_ts(start)} is not on the snapshot grid")
    end = start + timedelta(days=days)
    snapshots = read_range(archive, start, end)
    report = report_from_rows(
        flatten(snapshots), (start, end), archive.cluster_name, thresholds, len(snapshots), anonymized
    )
    return report, render_report(report)


# -- notification drafts -------------------------------------------------

_SUGGESTIONS = {
    Flag.LOW_GPU: [
        "Give each GPU more work: a larger batch or problem size keeps it busier.",
        "Run several tasks per GPU (GPU overloading) by raising the number of "
        "processes per node (NPPN) in your submission.",
    ],
    Flag.LOW_CPU: [
        "Request only the cores your tasks actually use; oversized requests leave "
        "cores idle and block other tasks from landing on the node.",
        "Pack more tasks onto each node by raising NPPN, or use fewer nodes.",
    ],
    Flag.HIGH_CPU: [
        "Many libraries (OpenMP, BLAS, Python multiprocessing) start one thread per "
        "detected core or hyperthread in every process. With several processes on a "
        "node the thread count far exceeds the cores. Cap threads per process "
        "(for example OMP_NUM_THREADS) so processes x threads <= cores.",
        "Large numbers of concurrent small file writes (a write inside a tight loop) "
        "can also drive the load up; buffer output and write less often.",
    ],
}


def _metric(flag: Flag, u) -> float:
    return u.gpu_load_norm if flag is Flag.LOW_GPU else u.load_norm


def select_evidence(rows: Sequence[SnapshotRow], flag: Flag, cap: int = EVIDENCE_CAP) -> list[SnapshotRow]:
    """Earliest, latest, then the most extreme rows; returned in time order."""
    if not rows:
        return []
    by_time = sorted(rows, key=lambda r: (r.ts, r.usage.node_name))
    # most extreme first: lowest load for low categories, highest for high
    sign = -1 if flag is Flag.HIGH_CPU else 1
    by_extreme = sorted(by_time, key=lambda r: sign * _metric(flag, r.usage))
    picked: list[SnapshotRow] = []
    for r in [by_time[0], by_time[-1], *by_extreme]:
        if len(picked) >= cap:
            break
        if not any(r is p for p in picked):
            picked.append(r)
    picked.sort(key=lambda r: (r.ts, r.usage.node_name))
    return picked


def median_row(rows: Sequence[SnapshotRow], flag: Flag) -> SnapshotRow:
    ordered = sorted(rows, key=lambda r: (_metric(flag, r.usage), r.ts, r.usage.node_name))
    return ordered[(len(ordered) - 1) // 2]


def nppn_for(rows: Sequence[SnapshotRow]) -> NppnAdvice | None:
    """NPPN advice from the median low-GPU row, assuming one job per allocated GPU."""
    row = median_row(rows, Flag.LOW_GPU)
    try:
        return recommend_nppn(row.usage, max(1, row.usage.gpu_used))
    except NoRecommendationError:
        return None


def _evidence_table(rows: Sequence[SnapshotRow]) -> list[str]:
    out = []
    for r in rows:
        u = r.usage
        gpu = "-" if u.gpu_total == 0 else f"{u.gpu_used}/{u.gpu_total}"
        gload = "-" if u.gpu_load_norm is None else f"{u.gpu_load_norm:.2f}"
        gmem = "-" if u.gpu_mem_total_gb is None else f"{u.gpu_mem_used_gb}/{u.gpu_mem_total_gb}"
        out.append(
            [
                format_ts(r.ts),
                u.node_name,
                f"{u.cpu_used}/{u.cpu_total}",
                f"{u.load_norm:.2f}",
                f"{u.mem_used_gb}/{u.mem_total_gb}",
                gpu,
                gload,
                gmem,
            ]
        )
    header = ["TIME", "NODE", "CORES", "LOAD", "MEM_GB", "GPUS", "GPULOAD", "GPUMEM_GB"]
    return format_table(header, out, indent="  ")


def _draft_text(d: EmailDraft, report: WeeklyReport, nodes: Sequence[str]) -> str:
    t = report.thresholds
    start, end = report.period
    if d.category is Flag.HIGH_CPU:
        cond = f"normalized CPU load above {t.high_cpu_threshold:g}"
    elif d.category is Flag.LOW_CPU:
        cond = f"normalized CPU load below {t.low_threshold:g}"
    else:
        cond = f"normalized GPU load below {t.low_threshold:g}"
    minutes = round(t.snapshot_interval_hours * 60)
    lines = [
        f"To: {d.to}",
        f"Subject: {SECTION_TITLES[d.category].lower()} on your jobs ({report.cluster}, week of {start:%Y-%m-%d})",
        "",
        f"Hello {d.user},",
        "",
        f"Between {format_ts(start)} and {format_ts(end)} your jobs on {report.cluster} ran "
        f"{d.node_hours:.2f} node-hours with {cond}.",
        "",
        "How this is measured:",
        f"  Every {minutes} minutes we record CPU and GPU load for each node running jobs.",
        f"  Each record where one of your nodes met the condition counts as "
        f"{t.snapshot_interval_hours:g} node-hours.",
        "",
        "Selected records:",
        *_evidence_table(d.evidence),
        "",
        f"Nodes involved: {', '.join(nodes)}",
        "",
        "Suggestions:",
    ]
    for s in _SUGGESTIONS[d.category]:
        lines.append(f"  - {s}")
    if d.nppn is not None:
        lines.append(
            f"  - Based on the observed load and memory use, about NPPN={d.nppn.nppn} tasks per node "
            f"would fit (limiting factor: {d.nppn.limiting_factor.value.replace('_', ' ')})."
        )
    return "\n".join(lines) + "\n"


def draft_emails(
    report: WeeklyReport,
    user_table: UserTable,
    rows: Sequence[SnapshotRow] | SnapshotArchive,
    out_dir: str | Path | None = None,
) -> list[EmailDraft]:
    """One draft per (user, category) in the report; written under ``out_dir/emails``."""
    if isinstance(rows, SnapshotArchive):
        rows = flatten(read_range(rows, *report.period))
    real = deanonymize(report)
    flagged: dict[tuple[str, Flag], list[SnapshotRow]] = {}
    for r in rows:
        for flag in classify_load(r.usage, report.thresholds):
            flagged.setdefault((r.usage.user, flag), []).append(r)

    drafts = []
    for flag in Flag:
        for e in real.sections.get(flag, []):
            mine = flagged.get((e.display_user, flag), [])
            to = user_table.email(e.display_user)
            if to is None:
                warnings.warn(f"no email on file for {e.display_user}; draft uses a placeholder", HpcloadWarning, stacklevel=2)
                to = NO_RECIPIENT
            d = EmailDraft(
                to=to,
                user=e.display_user,
                category=flag,
                node_hours=e.node_hours,
                evidence=select_evidence(mine, flag),
                suggestions="\n".join(_SUGGESTIONS[flag]),
                nppn=nppn_for(mine) if flag is Flag.LOW_GPU and mine else None,
            )
            nodes = sorted({r.usage.node_name for r in mine})
            d.text = _draft_text(d, report, nodes)
            drafts.append(d)

    if out_dir is not None:
        email_dir = Path(out_dir) / "emails"
        email_dir.mkdir(parents=True, exist_ok=True)
        for d in drafts:
            (email_dir / f"{d.user}-{d.category.value}.txt").write_text(d.text)
    return drafts


def render_mapping(report: WeeklyReport) -> str:
    lines = ["section\tlabel\tuser"]
    for flag in Flag:
        for label, user in report.anonymization_maps.get(flag, {}).items():
            lines.append(f"{flag.value}\t{label}\t{user}")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="hpcload-weekly", description="Weekly low/high load report from the snapshot archive.")
    p.add_argument("--archive-root", type=Path, required=True)
    p.add_argument("--week-of", type=date.fromisoformat, required=True, help="any date in the week (YYYY-MM-DD)")
    p.add_argument("--low", type=float, default=0.45, help="low-load threshold (default 0.45)")
    p.add_argument("--high", type=float, default=1.65, help="high CPU load threshold (default 1.65)")
    p.add_argument("--interval", type=float, default=0.25, help="snapshot interval in hours")
    p.add_argument("--no-anonymize", action="store_true")
    p.add_argument("--cluster", help="cluster name (needed if the archive holds several)")
    p.add_argument("--users", type=Path, help="user table (user<TAB>email) for the email drafts")
    p.add_argument("--out", type=Path, required=True)
    args = p.parse_args(argv)

    try:
        thresholds = Thresholds(args.low, args.high, args.interval)
    except ValueError as exc:
        p.error(str(exc))
    try:
        archive = SnapshotArchive(args.archive_root, _resolve_cluster(args.archive_root, args.cluster))
        start = week_start(args.week_of)
        report, text = build_weekly_report(archive, start, thresholds, anonymized=not args.no_anonymize)
        users = load_user_table(args.users.read_text()) if args.users else UserTable()
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.txt").write_text(text)
        rows = flatten(read_range(archive, *report.period))
        draft_emails(report, users, rows, args.out)
        if report.anonymized:
            mapping = args.out / "mapping.tsv"
            mapping.write_text(render_mapping(report))
            mapping.chmod(0o600)
    except (OSError, ValueError) as exc:
        print(f"hpcload-weekly: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
