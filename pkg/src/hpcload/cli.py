"""``hpcload``: per-user CPU/GPU utilization snapshot of the cluster."""

from __future__ import annotations

import argparse
import getpass
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .collectors import PRIVILEGES_FILE, ClusterView, ParseError, AssemblyError, load_cluster_dir, load_privileges
from .tsv import render_tsv
from .views import (
    expand_nodelist,
    render_all_view,
    render_jupyter_block,
    render_nodes_view,
    render_top_view,
    render_user_view,
)

EXIT_OK = 0
EXIT_NOT_FOUND = 1
EXIT_USAGE = 2
EXIT_INPUT = 3

MODES = ("default", "all", "top", "nodes")


@dataclass(frozen=True)
class CliRequest:
    invoking_user: str
    mode: str = "default"
    gpu: bool = False
    tsv: bool = False
    top_n: int = 10
    nodelist: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "top" and self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.mode == "nodes" and not self.nodelist:
            raise ValueError("nodelist must not be empty")


@dataclass(frozen=True)
class PrivilegeConfig:
    privileged_users: frozenset[str] = field(default_factory=frozenset)

    def allows(self, user: str) -> bool:
        return user in self.privileged_users


def _own_view(view: ClusterView, user: str, gpu: bool) -> str:
    text = render_user_view(view, user, gpu)
    if any(j.user == user and j.job_type.value == "jupyter" for j in view.running_jobs()):
        text = render_jupyter_block(view, user) + "\n" + text
    return text


def run(request: CliRequest, view: ClusterView, privileges: PrivilegeConfig) -> tuple[str, int]:
    user = request.invoking_user
    privileged = privileges.allows(user)
    mode = request.mode
    if mode == "all" and not privileged:
        # regular users only ever see their own jobs
        mode = "default"

    if mode == "top":
        return render_top_view(view, request.top_n), EXIT_OK
    if mode == "nodes":
        text, found = render_nodes_view(view, request.nodelist, request.gpu, user, privileged)
        return text, EXIT_OK if found else EXIT_NOT_FOUND
    if mode == "all":
        if request.tsv:
            return render_tsv(view, None, request.gpu), EXIT_OK
        return render_all_view(view, request.gpu), EXIT_OK
    if request.tsv:
        return render_tsv(view, user, request.gpu), EXIT_OK
    return _own_view(view, user, request.gpu), EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hpcload", description="Per-user CPU/GPU utilization snapshot of the cluster.")
    p.add_argument("-g", "--gpu", action="store_true", help="add GPU utilization and GPU memory columns")
    p.add_argument("--all", action="store_true", help="all users' jobs (privileged users only)")
    p.add_argument("--tsv", action="store_true", help="tab-separated output")
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("-t", "--top", type=int, metavar="N", help="N nodes with the highest normalized CPU load")
    sel.add_argument("-n", "--nodes", metavar="NODELIST", help="jobs and inventory for the given nodes")
    p.add_argument("--cluster-dir", type=Path, default=Path("."), help="directory holding the scheduler tables")
    p.add_argument("--as-user", help="act as this user instead of the login user")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.top is not None and args.top < 1:
        parser.error("-t needs a positive count")
    if args.all and (args.top is not None or args.nodes):
        parser.error("--all cannot be combined with -t or -n")

    mode, nodelist = "default", ()
    if args.top is not None:
        mode = "top"
    elif args.nodes:
        mode = "nodes"
        try:
            nodelist = tuple(expand_nodelist(args.nodes))
        except ValueError as exc:
            parser.error(str(exc))
        if not nodelist:
            parser.error("empty NODELIST")
    elif args.all:
        mode = "all"

    user = args.as_user or getpass.getuser()
    try:
        view = load_cluster_dir(args.cluster_dir)
        priv_file = args.cluster_dir / PRIVILEGES_FILE
        privileged = load_privileges(priv_file.read_text()) if priv_file.exists() else frozenset()
    except (OSError, ParseError, AssemblyError) as exc:
        print(f"hpcload: {exc}", file=sys.stderr)
        return EXIT_INPUT

    request = CliRequest(user, mode, args.gpu, args.tsv, args.top or 10, nodelist)
    text, code = run(request, view, PrivilegeConfig(privileged))
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
