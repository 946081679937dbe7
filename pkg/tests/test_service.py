import json
import threading
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from crowdcover import AttributeSchema, Group, ItemCollection, SimulatedCrowd, set_task
from crowdcover.harness import fig5_collection
from crowdcover.service import make_server

TRIANGLES = {f"i{i:02d}" for i in (4, 7, 12, 13, 15)}


class Client:
    def __init__(self, base):
        self.base = base

    def call(self, method, path, body=None):
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(
            self.base + path, method=method, data=data,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, json.loads(resp.read() or b"null")
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read() or b"null")

    def create(self, config):
        status, out = self.call("POST", "/sessions", config)
        assert status == 201, out
        return out["session_id"]

    def pending(self, sid):
        return self.call("GET", f"/sessions/{sid}/tasks?status=pending")[1]

    def snapshot(self, sid):
        return self.call("GET", f"/sessions/{sid}")[1]

    def submit(self, task_id, worker, answer):
        return self.call(
            "POST", f"/tasks/{task_id}/assignments",
            {"worker_id": worker, "answer": answer},
        )


@pytest.fixture
def server(tmp_path):
    srv = make_server(port=0, data_dir=tmp_path / "data")
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv, Client(f"http://127.0.0.1:{srv.server_address[1]}")
    srv.shutdown()


def fig5_config(k=1):
    return {
        "algorithm": "group",
        "manifest": fig5_collection().to_manifest(),
        "group": {"shape": "triangle"},
        "n": 16,
        "tau": 3,
        "k": k,
        "seed": 0,
    }


def answer_truthfully(task):
    items = {it["id"] for it in task["items"]}
    if task["negated"]:
        return "yes" if items - TRIANGLES else "no"
    return "yes" if items & TRIANGLES else "no"


def drive_to_completion(client, sid, worker="w1", k=1):
    for _ in range(500):
        tasks = client.pending(sid)
        if not tasks:
            snap = client.snapshot(sid)
            if snap["status"] != "running":
                return snap
            time.sleep(0.005)
            continue
        for task in tasks:
            answer = answer_truthfully(task)
            for j in range(k):
                client.submit(task["task_id"], f"{worker}{j}", answer)
    raise AssertionError("session did not converge")


def test_create_fig5_session_publishes_single_root(server):
    _, client = server
    sid = client.create(fig5_config())
    tasks = client.pending(sid)
    assert len(tasks) == 1
    assert len(tasks[0]["items"]) == 16
    assert tasks[0]["question_text"].startswith("Is there at least one triangle")


def test_empty_collection_session_resolves_immediately(server):
    _, client = server
    schema = AttributeSchema.of(("shape", ("square", "triangle")))
    empty = ItemCollection(schema, [])
    sid = client.create({
        "algorithm": "group", "manifest": empty.to_manifest(),
        "group": {"shape": "triangle"}, "n": 4, "tau": 2, "k": 1,
    })
    snap = client.snapshot(sid)
    assert snap["status"] == "done"
    assert snap["verdict"]["covered"] is False and snap["verdict"]["cnt"] == 0


def test_classifier_session_starts_with_probe_points(server):
    _, client = server
    schema = AttributeSchema.of(("gender", ("F", "M")))
    rng = np.random.default_rng(0)
    truth = np.full((40, 1), 1, dtype=np.int16)
    truth[rng.choice(40, 10, replace=False)] = 0
    col = ItemCollection(schema, [f"c{i}" for i in range(40)],
                         truth=truth, predicted=truth.copy())
    sid = client.create({
        "algorithm": "classifier", "manifest": col.to_manifest(),
        "group": {"gender": "F"}, "n": 8, "tau": 4, "k": 1, "seed": 1,
    })
    deadline = time.time() + 5
    tasks = []
    while not tasks and time.time() < deadline:
        tasks = client.pending(sid)
    assert tasks and all(t["kind"] == "point" for t in tasks)


def test_fig5_session_full_run(server):
    _, client = server
    sid = client.create(fig5_config())
    snap = drive_to_completion(client, sid)
    assert snap["verdict"]["covered"] is True
    assert snap["verdict"]["cnt"] == 3
    assert snap["tasks"]["resolved"] == 7
    assert snap["tasks"]["canceled"] >= 2  # two inferred siblings


def test_majority_vote_aggregation(server):
    _, client = server
    sid = client.create(fig5_config(k=3))
    task = client.pending(sid)[0]
    assert client.submit(task["task_id"], "a", "yes")[1]["remaining_assignments"] == 2
    assert client.submit(task["task_id"], "b", "yes")[1]["remaining_assignments"] == 1
    status, out = client.submit(task["task_id"], "c", "no")
    assert out["status"] == "resolved"
    # yes/yes/no aggregates to yes: the root split and published children
    assert len(client.pending(sid)) == 2


def test_sibling_cancellation_and_inferred_answer(server):
    _, client = server
    sid = client.create(fig5_config())
    # walk the run to the level-3 frontier
    client.submit(client.pending(sid)[0]["task_id"], "w", "yes")  # root
    tasks = client.pending(sid)
    for task in list(tasks):
        client.submit(task["task_id"], "w", "yes")  # both halves
    tasks = client.pending(sid)
    left = tasks[0]  # oldest pending: the all-squares quarter
    sibling = tasks[1]
    assert answer_truthfully(left) == "no"
    client.submit(left["task_id"], "w", "no")
    status, out = client.submit(sibling["task_id"], "w2", "yes")
    assert out["status"] == "canceled"
    snap = client.snapshot(sid)
    assert snap["tasks"]["canceled"] >= 1
    assert snap["tasks"]["canceled_answered"] >= 1
    # the cancellation is on the event log; the late answer is logged too
    with urllib.request.urlopen(client.base + f"/sessions/{sid}/log") as resp:
        events = [json.loads(line) for line in resp.read().decode().splitlines()]
    kinds = [e["type"] for e in events]
    assert "canceled" in kinds
    late = [e for e in events if e["type"] == "assigned"
            and e["payload"]["task_id"] == sibling["task_id"]]
    assert late  # audit trail keeps the ignored answer


def test_duplicate_worker_rejected(server):
    _, client = server
    sid = client.create(fig5_config(k=3))
    task = client.pending(sid)[0]
    client.submit(task["task_id"], "w", "yes")
    status, out = client.submit(task["task_id"], "w", "yes")
    assert status == 409
    snap = client.snapshot(sid)
    assert snap["assignments"] == 0  # nothing resolved yet


def test_submit_to_resolved_task_rejected(server):
    _, client = server
    sid = client.create(fig5_config())
    task = client.pending(sid)[0]
    client.submit(task["task_id"], "w", "yes")
    status, out = client.submit(task["task_id"], "late", "no")
    assert status == 409


def test_invalid_answers_rejected(server):
    _, client = server
    sid = client.create(fig5_config())
    task = client.pending(sid)[0]
    status, out = client.submit(task["task_id"], "w", "maybe")
    assert status == 400
    status, out = client.submit(task["task_id"], "", "yes")
    assert status == 400


def test_odd_k_enforced_for_set_sessions(server):
    _, client = server
    status, out = client.call("POST", "/sessions", fig5_config(k=2))
    assert status == 400


def test_unknown_session_and_task_404(server):
    _, client = server
    assert client.call("GET", "/sessions/nope")[0] == 404
    assert client.submit("nope.t123", "w", "yes")[0] == 404


def test_image_endpoint(server, tmp_path):
    srv, client = server
    img = tmp_path / "pic.png"
    img.write_bytes(b"\x89PNG fake")
    schema = AttributeSchema.of(("shape", ("square", "triangle")))
    col = ItemCollection(schema, ["z1"], truth=[(1,)], image_refs=[str(img)])
    sid = client.create({
        "algorithm": "group", "manifest": col.to_manifest(),
        "group": {"shape": "triangle"}, "n": 4, "tau": 1, "k": 1,
    })
    req = urllib.request.Request(client.base + "/items/z1/image")
    with urllib.request.urlopen(req) as resp:
        assert resp.read() == b"\x89PNG fake"
    assert client.call("GET", "/items/ghost/image")[0] == 404


def test_pending_tasks_never_overlap(server):
    _, client = server
    sid = client.create(fig5_config())
    for _ in range(30):
        tasks = client.pending(sid)
        seen = set()
        for task in tasks:
            ids = {it["id"] for it in task["items"]}
            assert not ids & seen
            seen |= ids
        if not tasks:
            break
        client.submit(tasks[0]["task_id"], "w", answer_truthfully(tasks[0]))


def test_event_log_replay_reconstructs_state(server, tmp_path):
    srv, client = server
    sid = client.create(fig5_config())
    final = drive_to_completion(client, sid)
    log_path = tmp_path / "data" / "sessions" / sid / "events.jsonl"
    lines = log_path.read_text().splitlines()
    assert len(lines) > 10

    # kill: drop memory, truncate the log mid-flight, reload, finish again
    for prefix in (5, 12, len(lines)):
        log_path.write_text("\n".join(lines[:prefix]) + "\n")
        srv.service.evict_all()
        snap = client.snapshot(sid)
        if snap["status"] == "running":
            snap = drive_to_completion(client, sid)
        assert snap["verdict"]["covered"] is True
        assert snap["verdict"]["cnt"] == 3
        assert snap["tasks"]["resolved"] == 7


def test_out_of_order_answers_reach_the_sequential_verdict(server):
    # workers may answer any published frontier task in any order; the
    # engine consumes aggregates head-first, so the verdict and count must
    # match the sequential run exactly
    import random as random_mod

    from crowdcover import group_coverage
    from conftest import planted_collection, zero_error_crowd

    _, client = server
    schema = AttributeSchema.of(("shape", ("square", "triangle")))
    rng = random_mod.Random(40)
    for case in range(6):
        N = rng.randint(24, 80)
        members = set(rng.sample(range(N), rng.randint(0, 10)))
        col = planted_collection(schema, N, members)
        tau = rng.randint(1, 5)
        n = rng.choice([8, 16])
        target = Group.single(schema, "shape", "triangle")
        reference = group_coverage(
            col, target, n=n, tau=tau, source=zero_error_crowd(col)
        )
        member_ids = {col.id_at(i) for i in members}
        sid = client.create({
            "algorithm": "group", "manifest": col.to_manifest(),
            "group": {"shape": "triangle"}, "n": n, "tau": tau, "k": 1,
        })
        for _ in range(300):
            tasks = client.pending(sid)
            if not tasks:
                snap = client.snapshot(sid)
                if snap["status"] != "running":
                    break
                continue
            rng.shuffle(tasks)  # adversarial arrival order over the frontier
            for task in tasks:
                items = {it["id"] for it in task["items"]}
                client.submit(
                    task["task_id"], "w", "yes" if items & member_ids else "no"
                )
        snap = client.snapshot(sid)
        assert snap["verdict"]["covered"] == reference.covered, case
        assert snap["verdict"]["cnt"] == reference.cnt, case


def test_bridge_session_replay_reconverges(server, tmp_path):
    # threaded algorithms replay through the same path as the machine-driven
    # ones: re-run the thread and refeed the logged assignments
    srv, client = server
    schema = AttributeSchema.of(("gender", ("F", "M")))
    rng = np.random.default_rng(3)
    truth = np.full((30, 1), 1, dtype=np.int16)
    truth[rng.choice(30, 9, replace=False)] = 0
    col = ItemCollection(schema, [f"b{i:02d}" for i in range(30)], truth=truth)
    females = {col.id_at(i) for i in range(30) if truth[i, 0] == 0}
    sid = client.create({
        "algorithm": "base", "manifest": col.to_manifest(),
        "group": {"gender": "F"}, "tau": 5, "k": 1,
    })

    def feed_until_done():
        for _ in range(300):
            tasks = client.pending(sid)
            if not tasks:
                snap = client.snapshot(sid)
                if snap["status"] != "running":
                    return snap
                time.sleep(0.01)
                continue
            for task in tasks:
                item = task["items"][0]["id"]
                value = "F" if item in females else "M"
                client.submit(task["task_id"], "w1", {"gender": value})
        raise AssertionError("bridge session did not converge")

    snap = feed_until_done()
    assert snap["verdict"]["covered"] is True and snap["verdict"]["cnt"] == 5

    log_path = tmp_path / "data" / "sessions" / sid / "events.jsonl"
    lines = log_path.read_text().splitlines()
    for prefix in (4, len(lines) // 2, len(lines)):
        log_path.write_text("\n".join(lines[:prefix]) + "\n")
        srv.service.evict_all()
        snap = client.snapshot(sid)
        if snap["status"] == "running":
            snap = feed_until_done()
        assert snap["verdict"]["covered"] is True and snap["verdict"]["cnt"] == 5


def test_loopback_verdict_matches_in_process_run(server):
    _, client = server
    from crowdcover import group_coverage

    schema = AttributeSchema.of(("gender", ("F", "M")))
    rng = np.random.default_rng(21)
    N, f = 90, 7
    truth = np.full((N, 1), 1, dtype=np.int16)
    truth[rng.choice(N, f, replace=False)] = 0
    col = ItemCollection(schema, [f"g{i:03d}" for i in range(N)], truth=truth)
    target = Group.single(schema, "gender", "F")

    reference = group_coverage(
        col, target, n=16, tau=5,
        source=SimulatedCrowd(col, error_rate=0.08, assignments_per_task=3, seed=77),
    )

    crowd = SimulatedCrowd(col, error_rate=0.08, assignments_per_task=3, seed=77)
    sid = client.create({
        "algorithm": "group", "manifest": col.to_manifest(),
        "group": {"gender": "F"}, "n": 16, "tau": 5, "k": 3,
    })
    for _ in range(500):
        tasks = client.pending(sid)
        if not tasks:
            snap = client.snapshot(sid)
            if snap["status"] != "running":
                break
            continue
        for task in tasks:
            query = set_task(
                [it["id"] for it in task["items"]], target, negated=task["negated"]
            )
            votes = crowd.worker_set_answers(query)
            for i, vote in enumerate(votes):
                client.submit(task["task_id"], f"w{i}", "yes" if vote else "no")
    snap = client.snapshot(sid)
    assert snap["verdict"]["covered"] == reference.covered
    assert snap["verdict"]["cnt"] == reference.cnt
