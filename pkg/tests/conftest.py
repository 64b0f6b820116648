from __future__ import annotations

import os
from pathlib import Path

import pytest

from hpcload.collectors import load_cluster_dir
from hpcload.model import GpuRecord, JobRecord, NodeRecord, NodeState

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
SMALL = DATA / "small"


def node(name="c-8-6-1", cores=40, alloc=20, load5=8.0, mem_total=393216, mem_used=64512, gpus=2, gpus_alloc=1, state="mixed"):
    return NodeRecord(name, cores, alloc, load5, mem_total, mem_used, gpus, gpus_alloc, NodeState(state))


def job(job_id="1234", user="alice", node_name="c-8-6-1", job_type="batch", cores=20, gpus=1, state="running", name="train"):
    return JobRecord(job_id, user, node_name, job_type, cores, gpus, state, name)


def gpu(index=0, util=30, used=2048, total=65536, node_name="c-8-6-1"):
    return GpuRecord(node_name, index, util, used, total)


@pytest.fixture
def small_view():
    return load_cluster_dir(SMALL)


def check_golden(name: str, text: str) -> None:
    """Compare against tests/golden/<name>; HPCLOAD_UPDATE_GOLDEN=1 rewrites it."""
    path = GOLDEN / name
    if os.environ.get("HPCLOAD_UPDATE_GOLDEN"):
        path.write_text(text)
    assert path.exists(), f"missing golden file {path}"
    assert text == path.read_text(), f"output differs from {path}"


def usage(user="alice", node_name="c-8-6-1", load=0.8, gpu_load=None, gpus=0, gpu_used=None, cores=40, used=None):
    """A UserNodeUsage with plausible defaults; GPU fields only when ``gpus > 0``."""
    from hpcload.model import UserNodeUsage

    used = cores if used is None else used
    kw = {}
    if gpus:
        gu = gpus if gpu_used is None else gpu_used
        kw = dict(gpu_total=gpus, gpu_used=gu, gpu_free=gpus - gu, gpu_load_norm=gpu_load,
                  gpu_mem_total_gb=64 * gpus, gpu_mem_used_gb=2 * gu, gpu_mem_free_gb=64 * gpus - 2 * gu)
    return UserNodeUsage(user, node_name, "batch", cores, used, cores - used, load, 384, 100, 284, **kw)


def write_snapshot(archive, ts, usages) -> None:
    """Write archive rows directly, bypassing cluster assembly."""
    from hpcload.archive import _atomic_write
    from hpcload.collectors import format_ts
    from hpcload.tsv import COLUMNS, format_row

    lines = ["\t".join(COLUMNS)] + [format_row(format_ts(ts), archive.cluster_name, u) for u in usages]
    _atomic_write(archive.path_for(ts), "\n".join(lines) + "\n")


# -- acceptance summary ----------------------------------------------------

_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or report.outcome == "failed":
        entry = _ACCEPTANCE.setdefault(crit[0], [crit[1], True])
        entry[1] = entry[1] and report.outcome == "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
