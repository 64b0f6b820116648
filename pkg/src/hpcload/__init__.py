"""Utilization monitoring for whole-node-scheduled HPC clusters.

Collect per-user CPU/GPU load from scheduler-format tables, print the
command-line views, archive periodic TSV snapshots and build weekly
low/high load reports with remediation drafts.
"""

from .collectors import ClusterView, UserTable, assemble_cluster_view, load_cluster_dir
from .model import (
    Flag,
    GpuRecord,
    JobRecord,
    NodeRecord,
    NppnAdvice,
    Thresholds,
    UserNodeUsage,
    aggregate_user_node,
    classify_load,
    normalize_cpu_load,
    normalize_gpu_load,
    recommend_nppn,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterView",
    "Flag",
    "GpuRecord",
    "JobRecord",
    "NodeRecord",
    "NppnAdvice",
    "Thresholds",
    "UserNodeUsage",
    "UserTable",
    "aggregate_user_node",
    "assemble_cluster_view",
    "classify_load",
    "load_cluster_dir",
    "normalize_cpu_load",
    "normalize_gpu_load",
    "recommend_nppn",
]
