"""Fill a snapshot archive from a simulated day and read part of it back."""

from __future__ import annotations

import tempfile
from datetime import timedelta
from pathlib import Path

from hpcload.archive import SnapshotArchive, read_range, take_snapshot
from hpcload.sim import ScenarioConfig, generate_timeline

cfg = ScenarioConfig(seed=3, nodes=8, users=3, duration_hours=24, preset="threadstorm")
root = Path(tempfile.mkdtemp(prefix="hpcload-demo-"))
archive = SnapshotArchive(root, cfg.cluster_name)

paths = [take_snapshot(fs.view(), archive, cfg.interval_hours) for fs in generate_timeline(cfg)]
print(f"wrote {len(paths)} snapshots under {archive.cluster_dir}")
print("first:", paths[0].relative_to(root))
print("last: ", paths[-1].relative_to(root))

# A two-hour window around midday.
start = cfg.start + timedelta(hours=12)
snaps = read_range(archive, start, start + timedelta(hours=2))
for ts, rows in snaps:
    worst = max(rows, key=lambda r: r.usage.load_norm)
    print(f"{ts:%H:%M}  {len(rows):2d} rows  max load {worst.usage.load_norm:5.2f} ({worst.usage.user} on {worst.usage.node_name})")
