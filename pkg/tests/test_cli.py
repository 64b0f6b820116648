import random
from datetime import datetime, timezone

import pytest

from hpcload.cli import EXIT_INPUT, EXIT_NOT_FOUND, CliRequest, PrivilegeConfig, main, run
from hpcload.collectors import assemble_cluster_view
from hpcload.model import NodeRecord, NodeState, natural_key
from hpcload.tsv import ABSENT, COLUMNS, parse_tsv, render_tsv
from hpcload.views import (
    expand_nodelist,
    render_all_view,
    render_nodes_view,
    render_top_view,
    render_user_view,
    top_nodes,
    user_rows,
)

from conftest import SMALL, check_golden, job, node

ADMIN = PrivilegeConfig(frozenset({"admin"}))
TS = datetime(2024, 3, 4, 10, 7, tzinfo=timezone.utc)


GOLDEN_CASES = [
    ("default_alice.txt", CliRequest("alice")),
    ("default_alice_gpu.txt", CliRequest("alice", gpu=True)),
    ("all_gpu_admin.txt", CliRequest("admin", "all", gpu=True)),
    ("all_admin.txt", CliRequest("admin", "all")),
    ("top_3.txt", CliRequest("bob", "top", top_n=3)),
    ("nodes_alice_gpu.txt", CliRequest("alice", "nodes", gpu=True, nodelist=tuple(expand_nodelist("c-8-6-[1-3],c-9-1-[1-3]")))),
    ("tsv_all.tsv", CliRequest("admin", "all", gpu=True, tsv=True)),
    ("tsv_bob.tsv", CliRequest("bob", tsv=True, gpu=True)),
]


@pytest.mark.parametrize("golden, request_", GOLDEN_CASES)
def test_golden_outputs(small_view, golden, request_):
    text, code = run(request_, small_view, ADMIN)
    assert code == 0
    check_golden(golden, text)
    # renderers are pure
    assert run(request_, small_view, ADMIN)[0] == text


def test_user_view_single_row(small_view):
    lines = render_user_view(small_view, "alice").splitlines()
    assert lines[0].split() == ["NODE", "CPU(U/F/T)", "LOAD", "MEM_GB(U/F/T)"]
    assert lines[1].split()[:3] == ["c-8-6-1", "20/20/40", "0.20"]
    assert lines[-1].startswith("TOTAL")


def test_user_view_no_jobs(small_view):
    lines = render_user_view(small_view, "nobody", gpu=True).splitlines()
    assert len(lines) == 2 and lines[1] == "no active jobs"


def test_user_view_cpu_only_gpu_columns_dashed(small_view):
    row = [line for line in render_user_view(small_view, "bob", gpu=True).splitlines() if line.startswith("c-8-6-3")][0]
    assert row.split()[-3:] == ["-", "-", "-"]


def test_all_view_block_order(small_view):
    text = render_all_view(small_view, gpu=True)
    heads = [line for line in text.splitlines() if line.startswith(("JUPYTER", "USER "))]
    assert heads == ["JUPYTER NOTEBOOK JOBS", "USER alice alice@example.org", "USER bob (no email on file)"]
    jup = [line for line in text.splitlines() if line.startswith("c-9-1-1  carol")][0]
    assert jup.split()[-1] == "1"  # carol's notebook GPU request is shown


def test_all_view_empty_cluster():
    view = assemble_cluster_view([node(alloc=0, state="idle")], [], {"c-8-6-1": "0,0,0,100\n1,0,0,100\n"}, timestamp=TS)
    assert render_all_view(view) == "JUPYTER NOTEBOOK JOBS\nnone\n"


def test_unprivileged_all_equals_default(small_view):
    for user in ["alice", "bob", "carol", "nobody"]:
        for gpu in (False, True):
            for tsv in (False, True):
                a = run(CliRequest(user, "all", gpu=gpu, tsv=tsv), small_view, ADMIN)
                d = run(CliRequest(user, gpu=gpu, tsv=tsv), small_view, ADMIN)
                assert a == d


def test_privileged_all_contains_own_default_rows():
    view = assemble_cluster_view(
        [node(), node("c-8-6-2", alloc=40, gpus_alloc=2)],
        [job("1", "admin"), job("2", "bob", "c-8-6-2")],
        {"c-8-6-1": "0,30,2048,65536\n", "c-8-6-2": "0,30,2048,65536\n1,5,0,65536\n"},
        timestamp=TS,
    )
    own, _ = run(CliRequest("admin", gpu=True), view, ADMIN)
    everything, _ = run(CliRequest("admin", "all", gpu=True), view, ADMIN)
    assert own in everything
    assert "USER bob" in everything


def test_top_view_example():
    nodes = [
        NodeRecord("a", 10, 0, 5.0, 1, 0, 0, 0, NodeState.IDLE),
        NodeRecord("b", 10, 0, 21.0, 1, 0, 0, 0, NodeState.IDLE),
        NodeRecord("c", 10, 0, 17.0, 1, 0, 0, 0, NodeState.IDLE),
    ]
    view = assemble_cluster_view(nodes, [], {}, timestamp=TS)
    rows = render_top_view(view, 2).splitlines()[1:]
    assert [r.split()[1] for r in rows] == ["2.10", "1.70"]
    assert len(render_top_view(view, 50).splitlines()) == 4
    with pytest.raises(ValueError):
        top_nodes(view, 0)


def test_top_view_full_node_reads_one():
    view = assemble_cluster_view([NodeRecord("x", 48, 48, 48.0, 1, 0, 0, 0, NodeState.ALLOC)], [], {}, timestamp=TS)
    assert render_top_view(view, 1).splitlines()[1].split()[1] == "1.00"


def test_top_view_ties_by_name():
    nodes = [NodeRecord(f"n{i}", 10, 0, 10.0, 1, 0, 0, 0, NodeState.IDLE) for i in (3, 10, 1, 2)]
    view = assemble_cluster_view(nodes, [], {}, timestamp=TS)
    assert [n.node_name for n in top_nodes(view, 4)] == ["n1", "n2", "n3", "n10"]


@pytest.mark.parametrize(
    "pattern, expected",
    [
        ("c-1-1-[1-2]", ["c-1-1-1", "c-1-1-2"]),
        ("c-8-6-1,c-9-1-[1,3-4]", ["c-8-6-1", "c-9-1-1", "c-9-1-3", "c-9-1-4"]),
        ("n[08-10]", ["n08", "n09", "n10"]),
        ("c-[1-2]-[1-2]", ["c-1-1", "c-1-2", "c-2-1", "c-2-2"]),
        ("x", ["x"]),
    ],
)
def test_expand_nodelist(pattern, expected):
    assert expand_nodelist(pattern) == expected


@pytest.mark.parametrize("pattern", ["c-[1-2", "c-1]", "c-[3-1]", "c-[a-b]"])
def test_expand_nodelist_errors(pattern):
    with pytest.raises(ValueError):
        expand_nodelist(pattern)


def test_nodes_view_unknown(small_view):
    text, found = render_nodes_view(small_view, ["x"])
    assert text == "node x: not found\n" and found == 0
    _, code = run(CliRequest("alice", "nodes", nodelist=("x", "y")), small_view, ADMIN)
    assert code == EXIT_NOT_FOUND
    _, code = run(CliRequest("alice", "nodes", nodelist=("x", "c-8-6-1")), small_view, ADMIN)
    assert code == 0


def test_nodes_view_shows_same_user_on_overloaded_nodes():
    view = assemble_cluster_view(
        [node("c-1", alloc=40, load5=120.0, gpus=0, gpus_alloc=0), node("c-2", alloc=40, load5=100.0, gpus=0, gpus_alloc=0)],
        [job("1", "eve", "c-1", cores=40, gpus=0, name="pyjob"), job("2", "eve", "c-2", cores=40, gpus=0, name="pyjob")],
        {},
        timestamp=TS,
    )
    text, _ = render_nodes_view(view, ["c-1", "c-2"], privileged=True)
    blocks = text.split("\n\n")
    assert len(blocks) == 2 and all("eve" in b and "pyjob" in b for b in blocks)
    redacted, _ = render_nodes_view(view, ["c-1"], viewer="bob", privileged=False)
    assert "pyjob" not in redacted and "(hidden)" in redacted


def test_tsv_one_user_one_node(small_view):
    lines = render_tsv(small_view, "alice").splitlines()
    assert lines[0].split("\t") == COLUMNS
    assert len([line for line in lines if "\tc-8-6-1\t" in line]) == 1


def test_tsv_cpu_only_row_ends_with_six_absent(small_view):
    row = [line for line in render_tsv(small_view).splitlines() if "\tc-8-6-3\t" in line][0]
    assert row.split("\t")[-6:] == [ABSENT] * 6


def test_tsv_round_trip(small_view):
    parsed = parse_tsv(render_tsv(small_view))
    assert [r.usage for r in parsed] == [u.quantized() for u in small_view.usages()]
    assert all(r.ts == small_view.timestamp and r.cluster == "test" for r in parsed)


def test_tsv_without_gpu_columns(small_view):
    text = render_tsv(small_view, gpu=False)
    assert "gpu_total" not in text.splitlines()[0]
    rows = parse_tsv(text)
    assert all(r.usage.gpu_total == 0 for r in rows)


def test_cli_request_validation():
    with pytest.raises(ValueError):
        CliRequest("a", "top", top_n=0)
    with pytest.raises(ValueError):
        CliRequest("a", "nodes")


# -- main() --------------------------------------------------------------


def test_main_default(capsys):
    assert main(["--cluster-dir", str(SMALL), "--as-user", "alice"]) == 0
    assert capsys.readouterr().out == (run(CliRequest("alice"), _small(), ADMIN)[0])


def _small():
    from hpcload.collectors import load_cluster_dir

    return load_cluster_dir(SMALL)


def test_main_privileges_from_file(capsys):
    main(["--cluster-dir", str(SMALL), "--as-user", "admin", "--all"])
    assert "USER bob" in capsys.readouterr().out
    main(["--cluster-dir", str(SMALL), "--as-user", "alice", "--all"])
    assert "USER bob" not in capsys.readouterr().out


def test_main_argument_errors():
    for argv in (["-t", "0"], ["-t", "2", "-n", "x"], ["--all", "-t", "3"], ["-n", "c-[1-2"]):
        with pytest.raises(SystemExit) as exc:
            main(["--cluster-dir", str(SMALL), *argv])
        assert exc.value.code == 2


def test_main_input_errors(tmp_path, capsys):
    assert main(["--cluster-dir", str(tmp_path / "missing")]) == EXIT_INPUT
    (tmp_path / "nodes.txt").write_text("garbage\n")
    (tmp_path / "jobs.txt").write_text("")
    assert main(["--cluster-dir", str(tmp_path)]) == EXIT_INPUT
    assert "hpcload:" in capsys.readouterr().err


def test_main_nodes_all_unknown(capsys):
    assert main(["--cluster-dir", str(SMALL), "-n", "zz1,zz2", "--as-user", "a"]) == EXIT_NOT_FOUND


def random_view(rng):
    n = rng.randint(1, 30)
    nodes = []
    for i in range(n):
        cores = rng.choice([8, 40, 48, 96])
        # coarse loads make ties common
        load5 = round(rng.choice([0, 0.5, 1.0, 2.0, rng.uniform(0, 3)]) * cores, 2)
        nodes.append(NodeRecord(f"c-{rng.randint(1, 4)}-{i}", cores, 0, load5, 1, 0, 0, 0, NodeState.IDLE))
    return assemble_cluster_view(nodes, [], {}, timestamp=TS)


def test_top_view_sorted_and_deterministic():
    rng = random.Random(3)
    for _ in range(50):
        view = random_view(rng)
        k = rng.randint(1, 35)
        got = top_nodes(view, k)
        loads = [x.load_norm for x in got]
        assert loads == sorted(loads, reverse=True)
        for a, b in zip(got, got[1:]):
            if a.load_norm == b.load_norm:
                assert natural_key(a.node_name) < natural_key(b.node_name)
