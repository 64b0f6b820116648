"""Snapshot archive: one TSV file per interval under ``<root>/<cluster>/YYYY/MM/DD/HHMM.tsv``.

The directory tree is the index. Files are written through a temp file and
``os.replace`` so readers never see a partial snapshot.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import tempfile
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .collectors import AssemblyError, ClusterView, ParseError, format_ts, load_cluster_dir, parse_ts
from .model import HpcloadWarning
from .tsv import SnapshotRow, parse_tsv, render_tsv

log = logging.getLogger(__name__)

DEFAULT_INTERVAL_HOURS = 0.25
_FILE_RE = re.compile(r"^(\d{2})(\d{2})\.tsv$")


class ArchiveWarning(HpcloadWarning):
    pass


@dataclass(frozen=True)
class SnapshotArchive:
    root_dir: Path
    cluster_name: str

    def __post_init__(self):
        object.__setattr__(self, "root_dir", Path(self.root_dir))

    @property
    def cluster_dir(self) -> Path:
        return self.root_dir / self.cluster_name

    def path_for(self, ts: datetime) -> Path:
        ts = ts.astimezone(timezone.utc)
        return self.cluster_dir / f"{ts:%Y}" / f"{ts:%m}" / f"{ts:%d}" / f"{ts:%H%M}.tsv"


def align_to_grid(ts: datetime, interval_hours: float = DEFAULT_INTERVAL_HOURS) -> datetime:
    """Floor ``ts`` to the interval grid anchored at the Unix epoch (UTC)."""
    step = round(interval_hours * 3600)
    if step <= 0:
        raise ValueError("interval must be at least one second")
    secs = int(ts.timestamp())
    return datetime.fromtimestamp(secs - secs % step, tz=timezone.utc)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".tsv", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def take_snapshot(
    view: ClusterView,
    archive: SnapshotArchive,
    interval_hours: float = DEFAULT_INTERVAL_HOURS,
) -> Path:
    """Write the all-users GPU TSV for ``view`` at its grid-aligned time."""
    ts = align_to_grid(view.timestamp, interval_hours)
    if ts != view.timestamp:
        log.info("snapshot time %s aligned to %s", format_ts(view.timestamp), format_ts(ts))
    path = archive.path_for(ts)
    _atomic_write(path, render_tsv(view, user=None, gpu=True, ts=ts))
    return path


def _iter_files(archive: SnapshotArchive, start: datetime, end: datetime):
    day = start.astimezone(timezone.utc).date()
    last = (end.astimezone(timezone.utc) - timedelta(microseconds=1)).date()
    while day <= last:
        d = archive.cluster_dir / f"{day:%Y}" / f"{day:%m}" / f"{day:%d}"
        if d.is_dir():
            for p in sorted(d.iterdir()):
                m = _FILE_RE.match(p.name)
                if m is None:
                    continue
                ts = datetime(day.year, day.month, day.day, int(m[1]), int(m[2]), tzinfo=timezone.utc)
                yield ts, p
        day += timedelta(days=1)


def read_range(archive: SnapshotArchive, start: datetime, end: datetime) -> list[tuple[datetime, list[SnapshotRow]]]:
    """All snapshots with ``start <= ts < end``, oldest first.

    Unreadable files are skipped with an :class:`ArchiveWarning`; gaps in
    the grid are normal (collection outages) and produce nothing.
    """
    if start > end:
        raise ValueError("start must not be after end")
    if not archive.root_dir.is_dir():
        raise FileNotFoundError(f"archive root not found: {archive.root_dir}")
    out = []
    for ts, path in _iter_files(archive, start, end):
        if not start <= ts < end:
            continue
        try:
            rows = parse_tsv(path.read_text(encoding="utf-8"), source=str(path))
        except (OSError, UnicodeDecodeError, ParseError) as exc:
            warnings.warn(f"skipping unreadable snapshot {path}: {exc}", ArchiveWarning, stacklevel=2)
            continue
        out.append((ts, rows))
    return out


def list_clusters(root: str | Path) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"archive root not found: {root}")
    return sorted(p.name for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))


def _resolve_cluster(root: Path, name: str | None) -> str:
    if name:
        return name
    clusters = list_clusters(root)
    if len(clusters) != 1:
        raise ValueError(f"archive holds {len(clusters)} clusters; pick one with --cluster")
    return clusters[0]


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="hpcload-archive", description="Take or list utilization snapshots.")
    sub = p.add_subparsers(dest="cmd", required=True)
    take = sub.add_parser("take", help="archive one snapshot of a cluster dir")
    take.add_argument("--cluster-dir", type=Path, required=True)
    take.add_argument("--archive-root", type=Path, required=True)
    take.add_argument("--at", type=parse_ts, help="snapshot time (RFC 3339); default: now")
    take.add_argument("--cluster", help="cluster name (default: from meta.tsv)")
    take.add_argument("--interval", type=float, default=DEFAULT_INTERVAL_HOURS, help="grid spacing in hours")
    ls = sub.add_parser("ls", help="list snapshots in a time range")
    ls.add_argument("--archive-root", type=Path, required=True)
    ls.add_argument("--from", dest="start", type=parse_ts, required=True)
    ls.add_argument("--to", dest="end", type=parse_ts, required=True)
    ls.add_argument("--cluster")
    args = p.parse_args(argv)

    try:
        if args.cmd == "take":
            view = load_cluster_dir(args.cluster_dir, cluster_name=args.cluster)
            if args.at is not None:
                view.timestamp = args.at
            path = take_snapshot(view, SnapshotArchive(args.archive_root, view.cluster_name), args.interval)
            print(path)
            return 0
        archive = SnapshotArchive(args.archive_root, _resolve_cluster(args.archive_root, args.cluster))
        for ts, rows in read_range(archive, args.start, args.end):
            print(f"{format_ts(ts)}\t{archive.cluster_name}\t{len(rows)}\t{archive.path_for(ts)}")
        return 0
    except (OSError, ParseError, AssemblyError, ValueError) as exc:
        print(f"hpcload-archive: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
