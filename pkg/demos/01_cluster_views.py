"""Look at a simulated cluster the way a user and an administrator would."""

from __future__ import annotations

from hpcload.cli import CliRequest, PrivilegeConfig, run
from hpcload.sim import ScenarioConfig, generate_timeline

# One 15-minute slice of a 16-node cluster with a mix of behaviours:
# alice under-feeds her GPUs, bob oversubscribes his cores, carol leaves
# cores idle, and the last node is a shared notebook node.
cfg = ScenarioConfig(seed=1, nodes=16, users=6, duration_hours=0.25, preset="mixed")
view = next(iter(generate_timeline(cfg))).view()
privs = PrivilegeConfig(frozenset({"admin"}))

print("== alice, default view with GPU columns ==")
print(run(CliRequest("alice", gpu=True), view, privs)[0])

# Ordinary users asking for --all just get their own view back.
same = run(CliRequest("bob", "all"), view, privs) == run(CliRequest("bob"), view, privs)
print(f"bob --all identical to bob's default view: {same}\n")

print("== five most loaded nodes ==")
print(run(CliRequest("bob", "top", top_n=5), view, privs)[0])

# The busiest node usually belongs to bob; inspect it directly.
busiest = run(CliRequest("admin", "top", top_n=1), view, privs)[0].splitlines()[1].split()[0]
print(f"== node view of {busiest} as admin ==")
print(run(CliRequest("admin", "nodes", nodelist=(busiest,)), view, privs)[0])
