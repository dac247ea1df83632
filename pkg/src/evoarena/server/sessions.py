"""Session state machine for distributed 1+1 evolution.

A session owns one elitist (1+1) run: a current parent genome, a history of
evaluation records in arrival order, and a champion (the highest-fitness
record seen so far).  Workers pull speculative children of the current
parent, evaluate them locally, and push results back.  The session applies
the acceptance rule, spot-checks submissions by re-simulating them, and
journals every state change before applying it so a restart reproduces the
session exactly.

Everything in this module is framework-free; the HTTP layer in `app` is a
thin adapter over `Session` and `SessionManager`.
"""

from __future__ import annotations

import math
import queue
import secrets
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..animats import AnimatKind, genome_spec
from ..evolution import (
    EvolutionParams,
    Genome,
    derive_eval_seed,
    evaluate,
    mutate,
    random_genome,
    rng_from_seed,
)
from ..physics import SimulationDivergedError
from .store import SessionStore

LEASE_SECONDS_DEFAULT = 60.0
VERIFY_FRACTION_DEFAULT = 0.1
FITNESS_MATCH_RTOL = 1e-6
SUBSCRIBER_QUEUE_SIZE = 1024

_REASON_STATUS = {
    "invalid-params": 422,
    "unknown-session": 404,
    "unknown-task": 404,
    "session-closed": 409,
    "log-unavailable": 404,
    "verification-mismatch": 409,
}


class ProtocolError(Exception):
    """A request the server refuses, with a machine-readable reason code."""

    def __init__(self, reason: str, message: str = ""):
        self.reason = reason
        self.status = _REASON_STATUS.get(reason, 400)
        self.message = message or reason
        super().__init__(self.message)


@dataclass
class OpenTask:
    """A leased evaluation: one genome handed to one worker."""

    task_id: str
    genome: Genome
    rng_seed: int
    parent_version: int
    params: EvolutionParams
    worker_id: str
    issued_at: float


class _Subscriber:
    """One event listener with a bounded buffer.

    If the listener falls so far behind that the buffer overflows, it is
    marked lagged; the stream then ends with an explicit ``lagged`` marker
    instead of silently dropping events.
    """

    __slots__ = ("queue", "lagged")

    def __init__(self, maxsize: int):
        self.queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self.lagged = False


def fitness_matches(reported: float, recomputed: float) -> bool:
    """Tolerance for honest cross-build drift when comparing fitnesses."""
    return abs(reported - recomputed) <= FITNESS_MATCH_RTOL * max(1.0, abs(recomputed))


class Session:
    """One distributed 1+1 evolution run.

    All public methods are thread-safe.  Construct via `Session.create`
    (fresh, journals its creation entry) or `Session.restore` (rebuilds
    state by replaying an existing journal).
    """

    def __init__(
        self,
        store: SessionStore,
        session_id: str,
        kind: AnimatKind,
        params: EvolutionParams,
        seed: int,
        lease_seconds: float,
        verify_fraction: float,
        strict_digest: bool,
    ):
        self.session_id = session_id
        self.kind = kind
        self.seed = seed
        self.lease_seconds = lease_seconds
        self.verify_fraction = verify_fraction
        self.strict_digest = strict_digest
        self.params = params
        self.closed = False

        self._store = store
        self._lock = threading.RLock()
        self._spec = genome_spec(kind)
        self._initial_genome = random_genome(self._spec, rng_from_seed(derive_eval_seed(seed, 0)))
        self._initial_pending = True
        self._issue_counter = 1
        self._parent_genome = self._initial_genome
        self._parent_fitness: float | None = None
        self._parent_version = 0
        self._history: list[dict] = []
        self._champion: dict | None = None
        self._open_tasks: dict[str, OpenTask] = {}
        self._completed: dict[str, dict] = {}
        self._inflight: dict[str, threading.Event] = {}
        self._workers_seen: set[str] = set()
        self._verify_rng = np.random.default_rng(derive_eval_seed(seed, 2**63))
        self._subscribers: list[_Subscriber] = []

    # -- construction ---------------------------------------------------

    @classmethod
    def create(
        cls,
        store: SessionStore,
        kind: AnimatKind,
        params: EvolutionParams,
        seed: int | None = None,
        lease_seconds: float = LEASE_SECONDS_DEFAULT,
        verify_fraction: float = VERIFY_FRACTION_DEFAULT,
        strict_digest: bool = True,
        session_id: str | None = None,
    ) -> "Session":
        params.validate()
        if not lease_seconds > 0.0:
            raise ProtocolError("invalid-params", "lease_seconds must be positive")
        if not 0.0 <= verify_fraction <= 1.0:
            raise ProtocolError("invalid-params", "verify_fraction must be in [0, 1]")
        if seed is None:
            seed = secrets.randbits(32)
        if seed < 0:
            raise ProtocolError("invalid-params", "seed must be non-negative")
        if session_id is None:
            session_id = secrets.token_hex(8)
        session = cls(
            store,
            session_id,
            kind,
            params.copy(),
            seed,
            lease_seconds,
            verify_fraction,
            strict_digest,
        )
        store.create()
        store.append(
            {
                "kind": "session",
                "session_id": session_id,
                "animat": kind.value,
                "seed": seed,
                "lease_seconds": lease_seconds,
                "verify_fraction": verify_fraction,
                "strict_digest": strict_digest,
                "params": params.to_dict(),
            }
        )
        return session

    @classmethod
    def restore(cls, store: SessionStore) -> "Session":
        """Rebuild a session by replaying its journal in write order.

        Open leases are not persisted: tasks that were in flight at crash
        time become unknown task_ids, and their genomes are simply
        re-derived as fresh speculative children of the surviving parent.
        """
        entries = store.read_journal()
        if not entries or entries[0]["kind"] != "session":
            raise ProtocolError(
                "unknown-session",
                f"journal for {store.session_id} does not start with a session entry",
            )
        head = entries[0]
        session = cls(
            store,
            head["session_id"],
            AnimatKind(head["animat"]),
            EvolutionParams.from_dict(head["params"]),
            head["seed"],
            head["lease_seconds"],
            head["verify_fraction"],
            head.get("strict_digest", True),
        )
        for entry in entries[1:]:
            kind = entry["kind"]
            if kind == "issue":
                session._issue_counter = max(session._issue_counter, entry["counter"] + 1)
            elif kind == "record":
                session._apply_record(entry["record"], entry["task_id"])
            elif kind == "rejected":
                session._completed[entry["task_id"]] = {
                    "task_id": entry["task_id"],
                    "accepted": False,
                    "verified": True,
                    "rejected_reason": "verification-mismatch",
                    "eval_index": None,
                }
            elif kind == "params":
                session.params = EvolutionParams.from_dict(entry["params"])
            elif kind == "closed":
                session.closed = True
            else:
                raise ProtocolError(
                    "unknown-session",
                    f"journal for {store.session_id} has unknown entry kind {kind!r}",
                )
        session._initial_pending = session._parent_fitness is None and not session._history
        return session

    def _apply_record(self, record: dict, task_id: str) -> None:
        """Mutate parent/champion state for one history record (no journaling)."""
        self._history.append(record)
        if record["accepted"]:
            self._parent_genome = Genome(self.kind, np.asarray(record["genes"], dtype=np.float64))
            self._parent_fitness = record["fitness"]
            self._parent_version += 1
        if not record["diverged"]:
            if self._champion is None or record["fitness"] > self._champion["fitness"]:
                self._champion = record
        self._completed[task_id] = {
            "task_id": task_id,
            "accepted": record["accepted"],
            "verified": record["verified"],
            "rejected_reason": None,
            "eval_index": record["eval_index"],
        }

    # -- task issue -----------------------------------------------------

    def next_task(self, worker_id: str) -> dict:
        """Lease one evaluation to ``worker_id`` and return the task message.

        Order of preference: the initial genome if it has never been
        issued, then the oldest expired lease (same genome and rng seed
        under a fresh task_id), then a new speculative child of the
        current parent.
        """
        if not worker_id:
            raise ProtocolError("invalid-params", "worker id must be non-empty")
        with self._lock:
            if self.closed:
                raise ProtocolError("session-closed", f"session {self.session_id} is closed")
            now = time.monotonic()
            if self._initial_pending:
                self._initial_pending = False
                task = self._register_task(
                    self._initial_genome, derive_eval_seed(self.seed, 0), worker_id, now
                )
            else:
                expired = [
                    t
                    for t in self._open_tasks.values()
                    if now - t.issued_at > self.lease_seconds
                ]
                if expired:
                    stale = min(expired, key=lambda t: t.issued_at)
                    del self._open_tasks[stale.task_id]
                    task = self._register_task(
                        stale.genome,
                        stale.rng_seed,
                        worker_id,
                        now,
                        parent_version=stale.parent_version,
                        params=stale.params,
                    )
                else:
                    child_seed = derive_eval_seed(self.seed, self._issue_counter)
                    child = mutate(self._parent_genome, self.params, rng_from_seed(child_seed))
                    task = self._register_task(child, child_seed, worker_id, now)
            return self._task_message(task)

    def _register_task(
        self,
        genome: Genome,
        rng_seed: int,
        worker_id: str,
        now: float,
        parent_version: int | None = None,
        params: EvolutionParams | None = None,
    ) -> OpenTask:
        counter = self._issue_counter
        self._issue_counter += 1
        self._store.append({"kind": "issue", "counter": counter})
        task = OpenTask(
            task_id=f"{self.session_id}:{counter}",
            genome=genome,
            rng_seed=rng_seed,
            parent_version=self._parent_version if parent_version is None else parent_version,
            params=self.params.copy() if params is None else params,
            worker_id=worker_id,
            issued_at=now,
        )
        self._open_tasks[task.task_id] = task
        return task

    def _task_message(self, task: OpenTask) -> dict:
        return {
            "task_id": task.task_id,
            "session_id": self.session_id,
            "genome": task.genome.to_dict(),
            "spec": {
                "kind": self.kind.value,
                "genome_length": self._spec.length,
                "n_joints": self._spec.n_joints,
            },
            "params": task.params.to_dict(),
        }

    # -- result intake --------------------------------------------------

    def submit_result(
        self,
        *,
        task_id: str,
        worker_id: str,
        fitness: float,
        log_digest: str = "",
        diverged: bool = False,
    ) -> dict:
        """Record one evaluation result.  Idempotent per task_id.

        A submission is re-simulated server-side when it is the worker's
        first contact, when it falls in the spot-check fraction, or when
        it claims a new champion.  A verified mismatch is answered with
        ``rejected_reason = "verification-mismatch"`` and leaves the
        history untouched; a stale result (its parent was replaced while
        it ran) is recorded but not accepted.
        """
        if not math.isfinite(fitness):
            raise ProtocolError("invalid-params", "fitness must be finite")
        if diverged:
            fitness = 0.0
            log_digest = ""
        with self._lock:
            done = self._completed.get(task_id)
            if done is not None:
                return dict(done)
            waiter = self._inflight.get(task_id)
            owner = waiter is None
            if owner:
                if self.closed:
                    raise ProtocolError(
                        "session-closed", f"session {self.session_id} is closed"
                    )
                task = self._open_tasks.pop(task_id, None)
                if task is None:
                    raise ProtocolError("unknown-task", f"no open task {task_id!r}")
                first_contact = worker_id not in self._workers_seen
                self._workers_seen.add(worker_id)
                spot_check = float(self._verify_rng.random()) < self.verify_fraction
                champion_claim = not diverged and (
                    self._champion is None or fitness > self._champion["fitness"]
                )
                need_verify = first_contact or spot_check or champion_claim
                waiter = threading.Event()
                self._inflight[task_id] = waiter
        if not owner:
            # A concurrent duplicate of an in-flight submission: wait for
            # the owning thread's outcome and echo it.
            waiter.wait(timeout=300.0)
            with self._lock:
                done = self._completed.get(task_id)
            if done is not None:
                return dict(done)
            raise ProtocolError("unknown-task", f"no open task {task_id!r}")

        server_fitness = 0.0
        server_digest = ""
        server_diverged = False
        server_log = None
        if need_verify:
            try:
                server_fitness, server_log = evaluate(task.genome, task.params)
                server_digest = server_log.digest()
            except SimulationDivergedError:
                server_diverged = True

        with self._lock:
            try:
                if need_verify:
                    if server_diverged != diverged:
                        return self._reject(task_id, worker_id)
                    if not server_diverged:
                        digest_ok = (not self.strict_digest) or log_digest == server_digest
                        if not digest_ok or not fitness_matches(fitness, server_fitness):
                            return self._reject(task_id, worker_id)
                        fitness = server_fitness
                        log_digest = server_digest
                eval_index = len(self._history)
                fresh = task.parent_version == self._parent_version
                accepted = (
                    fresh
                    and not diverged
                    and (self._parent_fitness is None or fitness >= self._parent_fitness)
                )
                record = {
                    "eval_index": eval_index,
                    "kind": self.kind.value,
                    "genes": [float(g) for g in task.genome.genes],
                    "fitness": float(fitness),
                    "accepted": accepted,
                    "rng_seed": int(task.rng_seed),
                    "diverged": bool(diverged),
                    "log_digest": log_digest,
                    "verified": need_verify,
                    "worker_id": worker_id,
                }
                if server_log is not None:
                    self._store.write_log(eval_index, server_log.dumps())
                self._store.append({"kind": "record", "task_id": task_id, "record": record})
                self._apply_record(record, task_id)
                self._publish({"event": "eval-recorded", "record": record})
                if accepted:
                    self._publish(
                        {
                            "event": "parent-replaced",
                            "eval_index": eval_index,
                            "fitness": record["fitness"],
                            "parent_version": self._parent_version,
                        }
                    )
                return dict(self._completed[task_id])
            finally:
                self._inflight.pop(task_id, None)
                waiter.set()

    def _reject(self, task_id: str, worker_id: str) -> dict:
        self._store.append({"kind": "rejected", "task_id": task_id, "worker_id": worker_id})
        response = {
            "task_id": task_id,
            "accepted": False,
            "verified": True,
            "rejected_reason": "verification-mismatch",
            "eval_index": None,
        }
        self._completed[task_id] = response
        return dict(response)

    # -- parameters and lifecycle ---------------------------------------

    def update_params(self, patch: dict) -> EvolutionParams:
        """Apply a partial parameter update; invalid values change nothing."""
        with self._lock:
            if self.closed:
                raise ProtocolError("session-closed", f"session {self.session_id} is closed")
            merged = self.params.to_dict()
            for key, value in patch.items():
                if key not in merged:
                    raise ProtocolError("invalid-params", f"unknown parameter {key!r}")
                merged[key] = value
            try:
                candidate = EvolutionParams.from_dict(merged)
                candidate.validate()
            except (TypeError, ValueError) as exc:
                raise ProtocolError("invalid-params", str(exc)) from exc
            self._store.append({"kind": "params", "params": candidate.to_dict()})
            self.params = candidate
            self._publish({"event": "params-changed", "params": candidate.to_dict()})
            return candidate

    def close(self) -> None:
        with self._lock:
            if self.closed:
                return
            self._store.append({"kind": "closed"})
            self.closed = True
            self._open_tasks.clear()
            self._publish({"event": "session-closed"})

    # -- queries --------------------------------------------------------

    def info(self) -> dict:
        with self._lock:
            return {
                "session_id": self.session_id,
                "kind": self.kind.value,
                "seed": self.seed,
                "params": self.params.to_dict(),
                "eval_count": len(self._history),
                "best": dict(self._champion) if self._champion is not None else None,
                "parent_fitness": self._parent_fitness,
                "parent_version": self._parent_version,
                "open_tasks": len(self._open_tasks),
                "lease_seconds": self.lease_seconds,
                "verify_fraction": self.verify_fraction,
                "closed": self.closed,
            }

    def history(self, since: int = 0) -> list[dict]:
        with self._lock:
            return [dict(r) for r in self._history[since:]]

    def best(self) -> dict | None:
        with self._lock:
            return dict(self._champion) if self._champion is not None else None

    def get_log(self, eval_index: int) -> str:
        with self._lock:
            in_range = 0 <= eval_index < len(self._history)
        if not in_range:
            raise ProtocolError(
                "log-unavailable", f"no evaluation with index {eval_index}"
            )
        text = self._store.read_log(eval_index)
        if text is None:
            raise ProtocolError(
                "log-unavailable",
                f"evaluation {eval_index} was not verified server-side; no log stored",
            )
        return text

    # -- events ---------------------------------------------------------

    def subscribe(self) -> _Subscriber:
        """Register an event listener.

        The first queued event is a snapshot of current state; every event
        after it is strictly newer, so a late subscriber never sees a
        record duplicated or skipped.
        """
        with self._lock:
            sub = _Subscriber(SUBSCRIBER_QUEUE_SIZE)
            sub.queue.put(
                {
                    "event": "snapshot",
                    "session_id": self.session_id,
                    "eval_count": len(self._history),
                    "params": self.params.to_dict(),
                    "best": dict(self._champion) if self._champion is not None else None,
                    "parent_version": self._parent_version,
                    "closed": self.closed,
                }
            )
            self._subscribers.append(sub)
            return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def _publish(self, event: dict) -> None:
        for sub in self._subscribers:
            try:
                sub.queue.put_nowait(event)
            except queue.Full:
                sub.lagged = True

    def stream_events(self, sub: _Subscriber, poll_seconds: float = 2.0):
        """Yield events for one subscriber; ``None`` marks an idle poll tick.

        Ends after ``session-closed`` or after emitting a ``lagged`` marker
        for a listener whose buffer overflowed.
        """
        try:
            while True:
                try:
                    event = sub.queue.get(timeout=poll_seconds)
                except queue.Empty:
                    if sub.lagged:
                        yield {"event": "lagged"}
                        return
                    yield None
                    continue
                yield event
                if event.get("event") == "session-closed":
                    return
                if sub.lagged and sub.queue.empty():
                    yield {"event": "lagged"}
                    return
        finally:
            self.unsubscribe(sub)


class SessionManager:
    """All sessions under one data directory, restored on construction."""

    def __init__(self, data_dir):
        from pathlib import Path

        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        for session_id in SessionStore.discover(self.data_dir):
            store = SessionStore(self.data_dir, session_id)
            session = Session.restore(store)
            self._sessions[session.session_id] = session

    def create_session(
        self,
        kind: str,
        params: dict | None = None,
        seed: int | None = None,
        lease_seconds: float = LEASE_SECONDS_DEFAULT,
        verify_fraction: float = VERIFY_FRACTION_DEFAULT,
        strict_digest: bool = True,
    ) -> Session:
        try:
            animat = AnimatKind(kind)
        except ValueError as exc:
            raise ProtocolError("invalid-params", str(exc)) from exc
        merged = EvolutionParams().to_dict()
        for key, value in (params or {}).items():
            if key not in merged:
                raise ProtocolError("invalid-params", f"unknown parameter {key!r}")
            merged[key] = value
        try:
            resolved = EvolutionParams.from_dict(merged)
            resolved.validate()
        except (TypeError, ValueError) as exc:
            raise ProtocolError("invalid-params", str(exc)) from exc
        with self._lock:
            while True:
                session_id = secrets.token_hex(8)
                if session_id not in self._sessions:
                    break
            store = SessionStore(self.data_dir, session_id)
            session = Session.create(
                store,
                animat,
                resolved,
                seed=seed,
                lease_seconds=lease_seconds,
                verify_fraction=verify_fraction,
                strict_digest=strict_digest,
                session_id=session_id,
            )
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise ProtocolError("unknown-session", f"no session {session_id!r}")
        return session

    def list_sessions(self) -> list[Session]:
        with self._lock:
            return list(self._sessions.values())

    def shutdown(self) -> None:
        with self._lock:
            for session in self._sessions.values():
                session._store.close()
