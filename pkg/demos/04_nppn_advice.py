"""How many copies of a light GPU job fit on one node."""

from __future__ import annotations

from hpcload.model import UserNodeUsage, recommend_nppn

# One job on one of the node's two GPUs, using 2 of 64 GB GPU memory and
# little CPU. Sweep the GPU load it produces.
for gload in (0.9, 0.45, 0.3, 0.23, 0.1):
    u = UserNodeUsage(
        "alice", "c-1-1-1", "batch", 40, 20, 20, 0.05, 384, 30, 354,
        gpu_total=2, gpu_used=1, gpu_free=1, gpu_load_norm=gload,
        gpu_mem_total_gb=64, gpu_mem_used_gb=2, gpu_mem_free_gb=62,
    )
    advice = recommend_nppn(u, current_nppn=1)
    factors = ", ".join(f"{f.value}={n}" for f, n in advice.factors.items())
    print(f"gpu load {gload:.2f}: NPPN {advice.nppn:2d}  limited by {advice.limiting_factor.value:10s}  ({factors})")

# Host memory can bind before the GPUs do: a job holding 63 GB of RAM.
heavy = UserNodeUsage(
    "alice", "c-1-1-1", "batch", 40, 20, 20, 0.05, 384, 63, 321,
    gpu_total=2, gpu_used=1, gpu_free=1, gpu_load_norm=0.23,
    gpu_mem_total_gb=64, gpu_mem_used_gb=2, gpu_mem_free_gb=62,
)
advice = recommend_nppn(heavy, 1)
print(f"\nwith 63 GB host memory per job: NPPN {advice.nppn}, limited by {advice.limiting_factor.value}")
