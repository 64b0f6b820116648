"""A week of simulated activity turned into the anonymized report and email drafts."""

from __future__ import annotations

import tempfile
from pathlib import Path

from hpcload.archive import SnapshotArchive, take_snapshot
from hpcload.collectors import UserTable
from hpcload.model import Flag
from hpcload.sim import ScenarioConfig, generate_timeline
from hpcload.weekly import build_weekly_report, draft_emails

cfg = ScenarioConfig(seed=7, nodes=32, users=8, duration_hours=168, preset="mixed")
root = Path(tempfile.mkdtemp(prefix="hpcload-week-"))
archive = SnapshotArchive(root / "archive", cfg.cluster_name)
for fs in generate_timeline(cfg):
    take_snapshot(fs.view(), archive, cfg.interval_hours)

report, text = build_weekly_report(archive, cfg.start)
print(text)

# The mapping from labels back to names stays with the administrator.
for flag in Flag:
    print(flag.value, report.anonymization_maps.get(flag, {}))

users = UserTable({u: f"{u}@example.org" for u in cfg.user_list()})
drafts = draft_emails(report, users, archive, root / "out")
print(f"\n{len(drafts)} drafts written to {root / 'out' / 'emails'}")
lowgpu = next(d for d in drafts if d.category is Flag.LOW_GPU)
print("\n" + lowgpu.text)
