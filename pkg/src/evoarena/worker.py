"""Pull-evaluate-push worker for a remote evolution session.

The worker is deliberately thin: it fetches a task, runs the evaluation
with the exact genome and parameter snapshot from the task message, and
reports fitness plus the log digest.  All evolutionary decisions stay on
the server.
"""

from __future__ import annotations

import secrets
import socket
import time
from dataclasses import dataclass, field

import requests

from .evolution import EvolutionParams, Genome, evaluate
from .physics import SimulationDivergedError


class WorkerError(RuntimeError):
    """Base class for worker failures."""


class VerificationRejectedError(WorkerError):
    """The server repeatedly rejected this worker's results as mismatched.

    Either the worker build disagrees with the server build or the local
    install is corrupted; continuing would only waste compute.
    """


class ProtocolFailure(WorkerError):
    """The server is unreachable or answered outside the protocol."""


@dataclass
class WorkerStats:
    worker_id: str = ""
    tasks_completed: int = 0
    accepted: int = 0
    rejected: int = 0
    diverged: int = 0
    stopped_reason: str = ""
    fitness_best: float = 0.0
    task_ids: list = field(default_factory=list)


def default_worker_id() -> str:
    return f"{socket.gethostname()}-{secrets.token_hex(4)}"


def run_worker(
    server_url: str,
    session_id: str,
    worker_id: str | None = None,
    max_tasks: int | None = None,
    poll_seconds: float = 0.5,
    max_consecutive_rejections: int = 3,
    request_timeout: float = 60.0,
    max_retries: int = 5,
    on_task=None,
) -> WorkerStats:
    """Evaluate tasks for ``session_id`` until the session closes.

    ``on_task`` is an optional callback ``(task_dict, result_dict) -> None``
    invoked after each round-trip.  Raises `VerificationRejectedError`
    after ``max_consecutive_rejections`` verification rejections in a row,
    and `ProtocolFailure` when the server stays unreachable past
    ``max_retries`` attempts.
    """
    if worker_id is None:
        worker_id = default_worker_id()
    base = server_url.rstrip("/")
    task_url = f"{base}/api/sessions/{session_id}/task"
    result_url = f"{base}/api/sessions/{session_id}/results"
    stats = WorkerStats(worker_id=worker_id)
    http = requests.Session()
    consecutive_rejections = 0

    def request(method: str, url: str, **kwargs):
        last_error = None
        for attempt in range(max_retries):
            try:
                response = http.request(method, url, timeout=request_timeout, **kwargs)
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(min(poll_seconds * (attempt + 1), 5.0))
                continue
            if response.status_code >= 500:
                last_error = ProtocolFailure(f"server error {response.status_code}")
                time.sleep(min(poll_seconds * (attempt + 1), 5.0))
                continue
            return response
        raise ProtocolFailure(f"{method} {url} failed after {max_retries} attempts: {last_error}")

    def reason_of(response) -> str:
        try:
            detail = response.json().get("detail", {})
        except ValueError:
            return ""
        if isinstance(detail, dict):
            return detail.get("reason", "")
        return ""

    while True:
        if max_tasks is not None and stats.tasks_completed >= max_tasks:
            stats.stopped_reason = "max-tasks"
            break

        response = request("GET", task_url, params={"worker": worker_id})
        if response.status_code == 409 and reason_of(response) == "session-closed":
            stats.stopped_reason = "session-closed"
            break
        if response.status_code != 200:
            raise ProtocolFailure(
                f"task fetch returned {response.status_code}: {response.text[:200]}"
            )
        task = response.json()

        genome = Genome.from_dict(task["genome"])
        params = EvolutionParams.from_dict(task["params"])
        try:
            fitness, log = evaluate(genome, params)
            payload = {
                "task_id": task["task_id"],
                "worker_id": worker_id,
                "fitness": fitness,
                "log_digest": log.digest(),
                "diverged": False,
            }
        except SimulationDivergedError:
            stats.diverged += 1
            payload = {
                "task_id": task["task_id"],
                "worker_id": worker_id,
                "fitness": 0.0,
                "log_digest": "",
                "diverged": True,
            }

        response = request("POST", result_url, json=payload)
        if response.status_code == 409 and reason_of(response) == "session-closed":
            stats.stopped_reason = "session-closed"
            break
        if response.status_code == 404 and reason_of(response) == "unknown-task":
            # Our lease expired and the task was re-issued elsewhere; the
            # work is simply discarded.
            continue
        if response.status_code != 200:
            raise ProtocolFailure(
                f"result submit returned {response.status_code}: {response.text[:200]}"
            )
        result = response.json()

        stats.tasks_completed += 1
        stats.task_ids.append(task["task_id"])
        if result.get("rejected_reason") == "verification-mismatch":
            stats.rejected += 1
            consecutive_rejections += 1
            if consecutive_rejections >= max_consecutive_rejections:
                raise VerificationRejectedError(
                    f"{consecutive_rejections} results in a row failed server "
                    "verification; worker build likely disagrees with the server"
                )
        else:
            consecutive_rejections = 0
            if result.get("accepted"):
                stats.accepted += 1
            if not payload["diverged"]:
                stats.fitness_best = max(stats.fitness_best, payload["fitness"])
        if on_task is not None:
            on_task(task, result)

    return stats
