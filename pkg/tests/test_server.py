"""Tests for the session server: protocol, verification, events, persistence."""

import json
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from evoarena import simlog
from evoarena.animats import AnimatKind, genome_spec
from evoarena.evolution import (
    EvolutionParams,
    Genome,
    derive_eval_seed,
    evaluate,
    random_genome,
    rng_from_seed,
)
from evoarena.server import create_app
from evoarena.server.sessions import ProtocolError, Session, SessionManager
from evoarena.server.store import SessionStore, StoreError

SHORT_PARAMS = {"settle_duration": 0.25, "eval_duration": 0.5}


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "data")
    with TestClient(app) as test_client:
        yield test_client


def make_session(client, seed=7, verify_fraction=1.0, **overrides):
    body = {
        "kind": "quadruped",
        "seed": seed,
        "params": dict(SHORT_PARAMS),
        "verify_fraction": verify_fraction,
    }
    body.update(overrides)
    response = client.post("/api/sessions", json=body)
    assert response.status_code == 201, response.text
    return response.json()["session_id"]


def fetch_task(client, sid, worker):
    response = client.get(f"/api/sessions/{sid}/task", params={"worker": worker})
    assert response.status_code == 200, response.text
    return response.json()


def honest_submit(client, sid, worker, task=None):
    """Worker-side round trip: fetch (unless given), evaluate, submit."""
    if task is None:
        task = fetch_task(client, sid, worker)
    genome = Genome.from_dict(task["genome"])
    params = EvolutionParams.from_dict(task["params"])
    fitness, log = evaluate(genome, params)
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": worker,
            "fitness": fitness,
            "log_digest": log.digest(),
        },
    )
    assert response.status_code == 200, response.text
    return task, response.json()


def error_reason(response):
    return response.json()["detail"]["reason"]


# -- session creation ------------------------------------------------------


def test_create_session_reports_initial_state(client):
    sid = make_session(client, seed=3)
    info = client.get(f"/api/sessions/{sid}").json()
    assert info["session_id"] == sid
    assert info["kind"] == "quadruped"
    assert info["seed"] == 3
    assert info["eval_count"] == 0
    assert info["best"] is None
    assert info["parent_fitness"] is None
    assert info["parent_version"] == 0
    assert info["open_tasks"] == 0
    assert info["closed"] is False
    assert info["params"]["settle_duration"] == 0.25


def test_create_session_rejects_unknown_kind(client):
    response = client.post("/api/sessions", json={"kind": "hexapod"})
    assert response.status_code == 422
    assert error_reason(response) == "invalid-params"


def test_create_session_rejects_bad_params(client):
    response = client.post(
        "/api/sessions",
        json={"kind": "quadruped", "params": {"mutation_sigma_scale": -1.0}},
    )
    assert response.status_code == 422
    assert error_reason(response) == "invalid-params"


def test_create_session_rejects_unknown_param_key(client):
    response = client.post(
        "/api/sessions", json={"kind": "quadruped", "params": {"population": 10}}
    )
    assert response.status_code == 422
    assert error_reason(response) == "invalid-params"


def test_unknown_session_is_a_reason_coded_404(client):
    response = client.get("/api/sessions/nope")
    assert response.status_code == 404
    assert error_reason(response) == "unknown-session"


def test_sessions_are_listed(client):
    first = make_session(client, seed=1)
    second = make_session(client, seed=2)
    listed = {s["session_id"] for s in client.get("/api/sessions").json()}
    assert {first, second} <= listed


# -- task issue ------------------------------------------------------------


def test_first_task_is_the_seed_derived_initial_genome(client):
    sid = make_session(client, seed=42)
    task = fetch_task(client, sid, "w1")
    spec = genome_spec(AnimatKind.QUADRUPED)
    expected = random_genome(spec, rng_from_seed(derive_eval_seed(42, 0)))
    assert task["genome"]["kind"] == "quadruped"
    assert np.array_equal(np.array(task["genome"]["genes"]), expected.genes)


def test_task_message_has_the_documented_shape(client):
    sid = make_session(client)
    task = fetch_task(client, sid, "w1")
    assert sorted(task.keys()) == ["genome", "params", "session_id", "spec", "task_id"]
    assert task["session_id"] == sid
    assert task["spec"] == {"kind": "quadruped", "genome_length": 25, "n_joints": 8}
    assert sorted(task["params"].keys()) == [
        "eval_duration",
        "mutation_sigma_scale",
        "per_gene_mutation_prob",
        "settle_duration",
    ]


def test_task_fetch_requires_worker_id(client):
    sid = make_session(client)
    response = client.get(f"/api/sessions/{sid}/task")
    assert response.status_code == 422
    assert error_reason(response) == "invalid-params"


def test_two_sessions_with_the_same_seed_issue_the_same_initial_genome(client):
    first = make_session(client, seed=9)
    second = make_session(client, seed=9)
    task_a = fetch_task(client, first, "w")
    task_b = fetch_task(client, second, "w")
    assert task_a["genome"] == task_b["genome"]


def test_open_task_count_is_reported(client):
    sid = make_session(client)
    fetch_task(client, sid, "w1")
    fetch_task(client, sid, "w2")
    assert client.get(f"/api/sessions/{sid}").json()["open_tasks"] == 2


# -- result intake ---------------------------------------------------------


def test_honest_first_result_becomes_the_parent(client):
    sid = make_session(client, seed=5)
    task, result = honest_submit(client, sid, "w1")
    assert result["accepted"] is True
    assert result["verified"] is True
    assert result["rejected_reason"] is None
    assert result["eval_index"] == 0
    info = client.get(f"/api/sessions/{sid}").json()
    assert info["eval_count"] == 1
    assert info["parent_version"] == 1
    assert info["parent_fitness"] == pytest.approx(info["best"]["fitness"])


def test_acceptance_follows_the_elitist_rule(client):
    sid = make_session(client, seed=5)
    honest_submit(client, sid, "w1")
    parent_fitness = client.get(f"/api/sessions/{sid}").json()["parent_fitness"]
    for _ in range(3):
        task, result = honest_submit(client, sid, "w1")
        record = client.get(f"/api/sessions/{sid}/history").json()[-1]
        assert result["accepted"] == (record["fitness"] >= parent_fitness)
        if result["accepted"]:
            parent_fitness = record["fitness"]
    info = client.get(f"/api/sessions/{sid}").json()
    assert info["parent_fitness"] == parent_fitness


def test_duplicate_submission_is_idempotent(client):
    sid = make_session(client, seed=5)
    task, result = honest_submit(client, sid, "w1")
    record_count = len(client.get(f"/api/sessions/{sid}/history").json())
    replay = client.post(
        f"/api/sessions/{sid}/results",
        json={"task_id": task["task_id"], "worker_id": "w1", "fitness": 123.0},
    )
    assert replay.status_code == 200
    assert replay.json() == result
    assert len(client.get(f"/api/sessions/{sid}/history").json()) == record_count


def test_unknown_task_is_rejected(client):
    sid = make_session(client)
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={"task_id": "bogus", "worker_id": "w1", "fitness": 1.0},
    )
    assert response.status_code == 404
    assert error_reason(response) == "unknown-task"


def test_nonfinite_fitness_is_rejected_as_invalid(client):
    sid = make_session(client)
    task = fetch_task(client, sid, "w1")
    raw = f'{{"task_id": "{task["task_id"]}", "worker_id": "w1", "fitness": NaN}}'
    response = client.post(
        f"/api/sessions/{sid}/results",
        content=raw,
        headers={"content-type": "application/json"},
    )
    assert response.status_code == 422
    assert error_reason(response) == "invalid-params"


def test_result_message_rejects_unknown_fields(client):
    sid = make_session(client)
    task = fetch_task(client, sid, "w1")
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": "w1",
            "fitness": 1.0,
            "bribe": True,
        },
    )
    assert response.status_code == 422


# -- verification ----------------------------------------------------------


def test_falsified_fitness_is_rejected_on_first_contact(client):
    sid = make_session(client, seed=5, verify_fraction=0.0)
    task = fetch_task(client, sid, "liar")
    genome = Genome.from_dict(task["genome"])
    params = EvolutionParams.from_dict(task["params"])
    fitness, log = evaluate(genome, params)
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": "liar",
            "fitness": fitness * 10.0,
            "log_digest": log.digest(),
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["accepted"] is False
    assert body["verified"] is True
    assert body["rejected_reason"] == "verification-mismatch"
    assert body["eval_index"] is None
    assert client.get(f"/api/sessions/{sid}/history").json() == []


def test_wrong_log_digest_is_rejected_even_with_correct_fitness(client):
    sid = make_session(client, seed=5)
    task = fetch_task(client, sid, "w1")
    genome = Genome.from_dict(task["genome"])
    params = EvolutionParams.from_dict(task["params"])
    fitness, _ = evaluate(genome, params)
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": "w1",
            "fitness": fitness,
            "log_digest": "feedfacefeedface",
        },
    )
    assert response.json()["rejected_reason"] == "verification-mismatch"


def test_relaxed_digest_mode_accepts_fitness_within_tolerance(client):
    sid = make_session(client, seed=5, strict_digest=False)
    task = fetch_task(client, sid, "w1")
    genome = Genome.from_dict(task["genome"])
    params = EvolutionParams.from_dict(task["params"])
    fitness, _ = evaluate(genome, params)
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": "w1",
            "fitness": fitness + 1e-9,
            "log_digest": "some-other-build",
        },
    )
    body = response.json()
    assert body["rejected_reason"] is None
    assert body["accepted"] is True
    # the recorded fitness is the server's own, not the reported one
    record = client.get(f"/api/sessions/{sid}/history").json()[0]
    assert record["fitness"] == pytest.approx(fitness, abs=0.0)


def test_false_divergence_claim_is_rejected(client):
    sid = make_session(client, seed=5)
    task = fetch_task(client, sid, "w1")
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": "w1",
            "fitness": 0.0,
            "diverged": True,
        },
    )
    assert response.json()["rejected_reason"] == "verification-mismatch"


def test_unverified_divergence_claim_is_recorded_as_zero_and_not_accepted(client):
    sid = make_session(client, seed=5, verify_fraction=0.0)
    honest_submit(client, sid, "w1")
    task = fetch_task(client, sid, "w1")
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": "w1",
            "fitness": 7.5,
            "log_digest": "ignored",
            "diverged": True,
        },
    )
    body = response.json()
    assert body["accepted"] is False
    assert body["rejected_reason"] is None
    record = client.get(f"/api/sessions/{sid}/history").json()[-1]
    assert record["diverged"] is True
    assert record["fitness"] == 0.0
    assert record["log_digest"] == ""


def test_champion_claims_are_always_verified(client):
    # verify_fraction 0 and the worker already trusted: only the champion
    # guard can catch this lie, and it must.
    sid = make_session(client, seed=5, verify_fraction=0.0)
    honest_submit(client, sid, "w1")
    best = client.get(f"/api/sessions/{sid}/best").json()
    task = fetch_task(client, sid, "w1")
    response = client.post(
        f"/api/sessions/{sid}/results",
        json={
            "task_id": task["task_id"],
            "worker_id": "w1",
            "fitness": best["fitness"] + 5.0,
            "log_digest": "whatever",
        },
    )
    assert response.json()["rejected_reason"] == "verification-mismatch"


def test_below_champion_submissions_can_skip_verification(client):
    sid = make_session(client, seed=5, verify_fraction=0.0)
    honest_submit(client, sid, "w1")
    task, result = honest_submit(client, sid, "w1")
    record = client.get(f"/api/sessions/{sid}/history").json()[-1]
    if not record["accepted"]:
        assert record["verified"] is False


def test_verified_records_carry_the_server_log(client):
    sid = make_session(client, seed=5, verify_fraction=1.0)
    honest_submit(client, sid, "w1")
    record = client.get(f"/api/sessions/{sid}/history").json()[0]
    assert record["verified"] is True
    response = client.get(f"/api/sessions/{sid}/logs/0")
    assert response.status_code == 200
    header, frames = simlog.read(response.text.splitlines())
    assert simlog.SimLog(header, frames).digest() == record["log_digest"]


def test_unverified_records_have_no_stored_log(client):
    sid = make_session(client, seed=5, verify_fraction=0.0)
    honest_submit(client, sid, "w1")
    # ensure at least one unverified record exists
    for _ in range(4):
        _, result = honest_submit(client, sid, "w1")
    history = client.get(f"/api/sessions/{sid}/history").json()
    unverified = [r for r in history if not r["verified"]]
    assert unverified, "expected at least one unverified record"
    index = unverified[0]["eval_index"]
    response = client.get(f"/api/sessions/{sid}/logs/{index}")
    assert response.status_code == 404
    assert error_reason(response) == "log-unavailable"


def test_log_index_out_of_range_is_log_unavailable(client):
    sid = make_session(client)
    response = client.get(f"/api/sessions/{sid}/logs/99")
    assert response.status_code == 404
    assert error_reason(response) == "log-unavailable"


# -- staleness and leases --------------------------------------------------


def test_stale_results_are_recorded_but_never_accepted(client):
    sid = make_session(client, seed=5, verify_fraction=1.0)
    honest_submit(client, sid, "w1")
    version = client.get(f"/api/sessions/{sid}").json()["parent_version"]
    stale_task = fetch_task(client, sid, "w2")
    # w1 advances the parent until a child is accepted
    for _ in range(20):
        _, result = honest_submit(client, sid, "w1")
        if result["accepted"]:
            break
    assert client.get(f"/api/sessions/{sid}").json()["parent_version"] > version
    _, stale_result = honest_submit(client, sid, "w2", task=stale_task)
    assert stale_result["rejected_reason"] is None
    assert stale_result["accepted"] is False
    record = client.get(f"/api/sessions/{sid}/history").json()[-1]
    assert record["accepted"] is False


def test_expired_lease_reissues_the_same_genome_under_a_new_task_id(client):
    sid = make_session(client, seed=5, lease_seconds=0.2)
    stalled = fetch_task(client, sid, "slow")
    time.sleep(0.3)
    reissued = fetch_task(client, sid, "fast")
    assert reissued["task_id"] != stalled["task_id"]
    assert reissued["genome"] == stalled["genome"]
    late = client.post(
        f"/api/sessions/{sid}/results",
        json={"task_id": stalled["task_id"], "worker_id": "slow", "fitness": 1.0},
    )
    assert late.status_code == 404
    assert error_reason(late) == "unknown-task"
    _, result = honest_submit(client, sid, "fast", task=reissued)
    assert result["rejected_reason"] is None


def test_expired_but_not_reissued_task_is_still_submittable(client):
    sid = make_session(client, seed=5, lease_seconds=0.2)
    task = fetch_task(client, sid, "slow")
    time.sleep(0.3)
    _, result = honest_submit(client, sid, "slow", task=task)
    assert result["rejected_reason"] is None
    assert result["eval_index"] == 0


def test_reissued_task_keeps_the_original_rng_seed(tmp_path):
    manager = SessionManager(tmp_path / "data")
    session = manager.create_session(
        "quadruped", params=SHORT_PARAMS, seed=5, lease_seconds=0.05
    )
    first = session.next_task("slow")
    seed_before = session._open_tasks[first["task_id"]].rng_seed
    time.sleep(0.1)
    second = session.next_task("fast")
    assert session._open_tasks[second["task_id"]].rng_seed == seed_before


# -- parameter steering ----------------------------------------------------


def test_params_patch_is_echoed_and_applied_to_the_next_task(client):
    sid = make_session(client)
    response = client.patch(
        f"/api/sessions/{sid}/params", json={"mutation_sigma_scale": 0.25}
    )
    assert response.status_code == 200
    assert response.json()["mutation_sigma_scale"] == 0.25
    assert response.json()["settle_duration"] == 0.25
    honest_submit(client, sid, "w1")
    task = fetch_task(client, sid, "w1")
    assert task["params"]["mutation_sigma_scale"] == 0.25


def test_invalid_params_patch_changes_nothing(client):
    sid = make_session(client)
    before = client.get(f"/api/sessions/{sid}").json()["params"]
    response = client.patch(
        f"/api/sessions/{sid}/params", json={"per_gene_mutation_prob": 2.0}
    )
    assert response.status_code == 422
    assert error_reason(response) == "invalid-params"
    assert client.get(f"/api/sessions/{sid}").json()["params"] == before


def test_unknown_params_key_is_rejected(client):
    sid = make_session(client)
    response = client.patch(f"/api/sessions/{sid}/params", json={"sigma": 0.5})
    assert response.status_code == 422


def test_empty_params_patch_is_a_noop_echo(client):
    sid = make_session(client)
    before = client.get(f"/api/sessions/{sid}").json()["params"]
    response = client.patch(f"/api/sessions/{sid}/params", json={})
    assert response.status_code == 200
    assert response.json() == before


# -- history and best ------------------------------------------------------


def test_history_returns_records_in_arrival_order_with_since(client):
    sid = make_session(client, seed=5, verify_fraction=0.0)
    for _ in range(3):
        honest_submit(client, sid, "w1")
    history = client.get(f"/api/sessions/{sid}/history").json()
    assert [r["eval_index"] for r in history] == [0, 1, 2]
    tail = client.get(f"/api/sessions/{sid}/history", params={"since": 2}).json()
    assert [r["eval_index"] for r in tail] == [2]


def test_best_is_null_before_any_evaluation(client):
    sid = make_session(client)
    response = client.get(f"/api/sessions/{sid}/best")
    assert response.status_code == 200
    assert response.json() is None


def test_best_tracks_the_maximum_fitness_record(client):
    sid = make_session(client, seed=5, verify_fraction=0.0)
    for _ in range(4):
        honest_submit(client, sid, "w1")
    history = client.get(f"/api/sessions/{sid}/history").json()
    best = client.get(f"/api/sessions/{sid}/best").json()
    assert best["fitness"] == max(r["fitness"] for r in history)


def test_record_fields_match_the_local_record_schema_plus_provenance(client):
    sid = make_session(client, seed=5)
    honest_submit(client, sid, "w1")
    record = client.get(f"/api/sessions/{sid}/history").json()[0]
    assert sorted(record.keys()) == [
        "accepted",
        "diverged",
        "eval_index",
        "fitness",
        "genes",
        "kind",
        "log_digest",
        "rng_seed",
        "verified",
        "worker_id",
    ]
    assert record["worker_id"] == "w1"


# -- close -----------------------------------------------------------------


def test_closed_session_refuses_tasks_and_results(client):
    sid = make_session(client, seed=5)
    task = fetch_task(client, sid, "w1")
    assert client.post(f"/api/sessions/{sid}/close").json()["closed"] is True
    refused = client.get(f"/api/sessions/{sid}/task", params={"worker": "w1"})
    assert refused.status_code == 409
    assert error_reason(refused) == "session-closed"
    submit = client.post(
        f"/api/sessions/{sid}/results",
        json={"task_id": task["task_id"], "worker_id": "w1", "fitness": 1.0},
    )
    assert submit.status_code == 409
    assert error_reason(submit) == "session-closed"


def test_close_is_idempotent(client):
    sid = make_session(client)
    client.post(f"/api/sessions/{sid}/close")
    again = client.post(f"/api/sessions/{sid}/close")
    assert again.status_code == 200
    assert again.json()["closed"] is True


# -- events ----------------------------------------------------------------


@pytest.fixture()
def session(tmp_path):
    manager = SessionManager(tmp_path / "data")
    return manager.create_session(
        "quadruped", params=SHORT_PARAMS, seed=5, verify_fraction=0.0
    )


def run_one_eval(session, worker="w1"):
    task = session.next_task(worker)
    genome = Genome.from_dict(task["genome"])
    params = EvolutionParams.from_dict(task["params"])
    fitness, log = evaluate(genome, params)
    return session.submit_result(
        task_id=task["task_id"],
        worker_id=worker,
        fitness=fitness,
        log_digest=log.digest(),
    )


def drain(sub):
    events = []
    while not sub.queue.empty():
        events.append(sub.queue.get_nowait())
    return events


def test_subscriber_receives_snapshot_first(session):
    run_one_eval(session)
    sub = session.subscribe()
    events = drain(sub)
    assert events[0]["event"] == "snapshot"
    assert events[0]["eval_count"] == 1
    assert events[0]["best"]["eval_index"] == 0
    session.unsubscribe(sub)


def test_events_arrive_in_protocol_order(session):
    sub = session.subscribe()
    result = run_one_eval(session)
    assert result["accepted"] is True
    session.update_params({"mutation_sigma_scale": 0.2})
    session.close()
    names = [e["event"] for e in drain(sub)]
    assert names == [
        "snapshot",
        "eval-recorded",
        "parent-replaced",
        "params-changed",
        "session-closed",
    ]


def test_late_subscriber_sees_no_duplicate_or_missing_eval_index(session):
    for _ in range(3):
        run_one_eval(session)
    sub = session.subscribe()
    for _ in range(2):
        run_one_eval(session)
    events = drain(sub)
    assert events[0]["event"] == "snapshot"
    seen = [e["record"]["eval_index"] for e in events if e["event"] == "eval-recorded"]
    assert seen == [3, 4]
    session.unsubscribe(sub)


def test_eval_recorded_carries_the_full_record(session):
    sub = session.subscribe()
    run_one_eval(session)
    events = drain(sub)
    record = next(e["record"] for e in events if e["event"] == "eval-recorded")
    assert record["eval_index"] == 0
    assert record["worker_id"] == "w1"
    assert "fitness" in record and "genes" in record


def test_stream_events_ends_after_session_closed(session):
    sub = session.subscribe()
    session.close()
    events = list(session.stream_events(sub, poll_seconds=0.05))
    names = [e["event"] for e in events if e is not None]
    assert names[-1] == "session-closed"
    assert sub not in session._subscribers


def test_stream_events_yields_idle_ticks_while_quiet(session):
    sub = session.subscribe()
    stream = session.stream_events(sub, poll_seconds=0.01)
    assert next(stream)["event"] == "snapshot"
    assert next(stream) is None
    stream.close()


def test_slow_subscriber_gets_a_lagged_marker_not_a_stall(session, monkeypatch):
    monkeypatch.setattr("evoarena.server.sessions.SUBSCRIBER_QUEUE_SIZE", 3)
    sub = session.subscribe()
    for _ in range(4):
        run_one_eval(session)
    assert sub.lagged is True
    events = list(session.stream_events(sub, poll_seconds=0.01))
    names = [e["event"] for e in events if e is not None]
    assert names[-1] == "lagged"


def test_websocket_upgrade_serves_the_event_stream(tmp_path):
    app = create_app(tmp_path / "data")
    with TestClient(app) as client:
        sid = make_session(client, seed=5, verify_fraction=0.0)
        session = app.state.manager.get(sid)
        with client.websocket_connect(f"/api/sessions/{sid}/events") as ws:
            snapshot = json.loads(ws.receive_text())
            assert snapshot["event"] == "snapshot"
            assert snapshot["eval_count"] == 0
            # mutate through the manager directly; the socket must see it
            session.update_params({"mutation_sigma_scale": 0.3})
            changed = json.loads(ws.receive_text())
            assert changed["event"] == "params-changed"
            assert changed["params"]["mutation_sigma_scale"] == 0.3
            session.close()
            closed = json.loads(ws.receive_text())
            assert closed["event"] == "session-closed"


def test_websocket_unknown_session_closes_with_an_error_code(tmp_path):
    from starlette.websockets import WebSocketDisconnect

    app = create_app(tmp_path / "data")
    with TestClient(app) as client:
        with pytest.raises(WebSocketDisconnect) as excinfo:
            with client.websocket_connect("/api/sessions/nope/events"):
                pass
        assert excinfo.value.code == 4404


# -- concurrency -----------------------------------------------------------


def test_concurrent_duplicate_submissions_resolve_to_one_record(session):
    task = session.next_task("w1")
    genome = Genome.from_dict(task["genome"])
    params = EvolutionParams.from_dict(task["params"])
    fitness, log = evaluate(genome, params)
    payload = {
        "task_id": task["task_id"],
        "worker_id": "w1",
        "fitness": fitness,
        "log_digest": log.digest(),
    }
    outcomes = []
    barrier = threading.Barrier(2)

    def submit():
        barrier.wait()
        outcomes.append(session.submit_result(**payload))

    threads = [threading.Thread(target=submit) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(outcomes) == 2
    assert outcomes[0] == outcomes[1]
    assert len(session.history()) == 1


def test_many_workers_preserve_the_elitist_invariant(session):
    def work(name):
        for _ in range(3):
            try:
                run_one_eval(session, worker=name)
            except ProtocolError:
                return

    threads = [threading.Thread(target=work, args=(f"w{i}",)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    history = session.history()
    assert len(history) == 12
    # parent fitness never decreases along the accepted subsequence
    accepted = [r["fitness"] for r in history if r["accepted"]]
    assert accepted == sorted(accepted)


# -- persistence -----------------------------------------------------------


def test_restart_preserves_history_params_and_champion(client, tmp_path):
    sid = make_session(client, seed=5, verify_fraction=1.0)
    for _ in range(3):
        honest_submit(client, sid, "w1")
    client.patch(f"/api/sessions/{sid}/params", json={"eval_duration": 0.75})
    before_history = client.get(f"/api/sessions/{sid}/history").json()
    before_info = client.get(f"/api/sessions/{sid}").json()

    with TestClient(create_app(tmp_path / "data")) as reborn:
        after_history = reborn.get(f"/api/sessions/{sid}/history").json()
        after_info = reborn.get(f"/api/sessions/{sid}").json()
        assert after_history == before_history
        drop = lambda d: {k: v for k, v in d.items() if k != "open_tasks"}
        assert drop(after_info) == drop(before_info)
        best = reborn.get(f"/api/sessions/{sid}/best").json()
        log = reborn.get(f"/api/sessions/{sid}/logs/{best['eval_index']}")
        assert log.status_code == 200


def test_restart_keeps_pre_crash_submissions_idempotent(client, tmp_path):
    sid = make_session(client, seed=5)
    task, result = honest_submit(client, sid, "w1")
    with TestClient(create_app(tmp_path / "data")) as reborn:
        replay = reborn.post(
            f"/api/sessions/{sid}/results",
            json={"task_id": task["task_id"], "worker_id": "w1", "fitness": 99.0},
        )
        assert replay.status_code == 200
        assert replay.json() == result
        assert len(reborn.get(f"/api/sessions/{sid}/history").json()) == 1


def test_restart_never_reuses_task_ids(client, tmp_path):
    sid = make_session(client, seed=5)
    seen = {fetch_task(client, sid, "w1")["task_id"] for _ in range(3)}
    with TestClient(create_app(tmp_path / "data")) as reborn:
        fresh = reborn.get(f"/api/sessions/{sid}/task", params={"worker": "w2"}).json()
        assert fresh["task_id"] not in seen


def test_restart_reissues_an_unevaluated_initial_genome(client, tmp_path):
    sid = make_session(client, seed=21)
    first = fetch_task(client, sid, "w1")
    # crash before the result arrives; the initial genome must come back
    with TestClient(create_app(tmp_path / "data")) as reborn:
        again = reborn.get(f"/api/sessions/{sid}/task", params={"worker": "w2"}).json()
        assert again["genome"] == first["genome"]
        assert again["task_id"] != first["task_id"]


def test_restart_preserves_closed_state(client, tmp_path):
    sid = make_session(client)
    client.post(f"/api/sessions/{sid}/close")
    with TestClient(create_app(tmp_path / "data")) as reborn:
        assert reborn.get(f"/api/sessions/{sid}").json()["closed"] is True
        refused = reborn.get(f"/api/sessions/{sid}/task", params={"worker": "w"})
        assert refused.status_code == 409


def test_journal_is_write_ahead_ordered(client, tmp_path):
    sid = make_session(client, seed=5)
    honest_submit(client, sid, "w1")
    journal = (tmp_path / "data" / sid / "journal.jsonl").read_text().splitlines()
    kinds = [json.loads(line)["kind"] for line in journal]
    assert kinds[0] == "session"
    assert "issue" in kinds
    assert kinds.index("issue") < kinds.index("record")


def test_corrupt_journal_is_reported(tmp_path):
    store = SessionStore(tmp_path, "broken")
    store.create()
    store.append({"kind": "session", "x": 1})
    with open(store.journal_path, "a", encoding="utf-8") as fh:
        fh.write("not json\n")
    with pytest.raises(StoreError, match="journal.jsonl:2"):
        store.read_journal()


# -- static assets ---------------------------------------------------------


def test_static_dir_is_served_alongside_the_api(tmp_path):
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<html><body>arena</body></html>")
    app = create_app(tmp_path / "data", static_dir=static)
    with TestClient(app) as client:
        page = client.get("/")
        assert page.status_code == 200
        assert "arena" in page.text
        assert client.get("/api/health").status_code == 200
