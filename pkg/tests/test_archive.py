import os
import warnings
from datetime import datetime, timedelta, timezone

import pytest

from hpcload.archive import ArchiveWarning, SnapshotArchive, align_to_grid, main, read_range, take_snapshot
from hpcload.collectors import assemble_cluster_view
from hpcload.tsv import COLUMNS

from conftest import SMALL, node, usage, write_snapshot

MON = datetime(2024, 3, 4, tzinfo=timezone.utc)


@pytest.fixture
def archive(tmp_path):
    return SnapshotArchive(tmp_path, "test")


def test_path_layout_and_alignment(small_view, archive):
    path = take_snapshot(small_view, archive)
    assert path == archive.root_dir / "test" / "2024" / "03" / "04" / "1000.tsv"
    assert path.read_text().splitlines()[1].startswith("2024-03-04T10:00:00Z\ttest\t")


@pytest.mark.parametrize(
    "ts, interval, expected",
    [
        (datetime(2024, 3, 4, 10, 7), 0.25, datetime(2024, 3, 4, 10, 0)),
        (datetime(2024, 3, 4, 10, 15), 0.25, datetime(2024, 3, 4, 10, 15)),
        (datetime(2024, 3, 4, 10, 29, 59), 0.25, datetime(2024, 3, 4, 10, 15)),
        (datetime(2024, 3, 4, 10, 59), 1.0, datetime(2024, 3, 4, 10, 0)),
    ],
)
def test_align_to_grid(ts, interval, expected):
    assert align_to_grid(ts.replace(tzinfo=timezone.utc), interval) == expected.replace(tzinfo=timezone.utc)


def test_rewrite_is_idempotent(small_view, archive):
    p1 = take_snapshot(small_view, archive)
    first = p1.read_bytes()
    p2 = take_snapshot(small_view, archive)
    assert p1 == p2 and p2.read_bytes() == first
    assert [f.name for f in p1.parent.iterdir()] == ["1000.tsv"]  # no temp files left


def test_empty_cluster_writes_header_only(archive):
    view = assemble_cluster_view([node(alloc=0, gpus=0, gpus_alloc=0, state="idle")], [], {}, timestamp=MON, cluster_name="test")
    path = take_snapshot(view, archive)
    assert path.read_text() == "\t".join(COLUMNS) + "\n"
    ((ts, rows),) = read_range(archive, MON, MON + timedelta(hours=1))
    assert ts == MON and rows == []


def test_week_of_snapshots(archive):
    for i in range(7 * 96):
        write_snapshot(archive, MON + timedelta(minutes=15 * i), [usage()])
    snaps = read_range(archive, MON, MON + timedelta(days=7))
    assert len(snaps) == 672
    assert [ts for ts, _ in snaps] == sorted(ts for ts, _ in snaps)
    assert read_range(archive, MON + timedelta(days=7), MON + timedelta(days=8)) == []
    # half-open interval
    assert len(read_range(archive, MON, MON + timedelta(minutes=15))) == 1


def test_corrupt_file_is_skipped(archive):
    for i in range(10):
        write_snapshot(archive, MON + timedelta(minutes=15 * i), [usage()])
    bad = archive.path_for(MON + timedelta(minutes=45))
    bad.write_text("not a snapshot\n")
    with pytest.warns(ArchiveWarning, match="0045"):
        snaps = read_range(archive, MON, MON + timedelta(days=1))
    assert len(snaps) == 9


def test_stray_files_ignored(archive):
    write_snapshot(archive, MON, [usage()])
    (archive.path_for(MON).parent / "notes.txt").write_text("x")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert len(read_range(archive, MON, MON + timedelta(hours=1))) == 1


def test_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_range(SnapshotArchive(tmp_path / "nope", "c"), MON, MON + timedelta(days=1))
    with pytest.raises(ValueError):
        read_range(SnapshotArchive(tmp_path, "c"), MON + timedelta(days=1), MON)


def test_write_then_read_identity(small_view, archive):
    take_snapshot(small_view, archive)
    ((ts, rows),) = read_range(archive, MON, MON + timedelta(days=1))
    assert ts == datetime(2024, 3, 4, 10, 0, tzinfo=timezone.utc)
    assert [r.usage for r in rows] == [u.quantized() for u in small_view.usages()]


def test_cli_take_and_ls(tmp_path, capsys):
    root = tmp_path / "arch"
    assert main(["take", "--cluster-dir", str(SMALL), "--archive-root", str(root)]) == 0
    out = capsys.readouterr().out.strip()
    assert out.endswith(os.path.join("test", "2024", "03", "04", "1000.tsv"))
    assert main(["ls", "--archive-root", str(root), "--from", "2024-03-04T00:00:00Z", "--to", "2024-03-05T00:00:00Z"]) == 0
    line = capsys.readouterr().out.strip()
    assert line.split("\t")[:3] == ["2024-03-04T10:00:00Z", "test", "5"]
    assert main(["ls", "--archive-root", str(tmp_path / "none"), "--from", "2024-03-04T00:00:00Z", "--to", "2024-03-05T00:00:00Z"]) == 3
