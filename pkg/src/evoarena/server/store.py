"""Append-only on-disk journal for evolution sessions.

Each session owns one directory under the store root:

    <root>/<session_id>/journal.jsonl     write-ahead journal, one JSON object per line
    <root>/<session_id>/logs/<index>.simlog   verified evaluation logs

Journal entries are written *before* the corresponding in-memory state
change, so a restart can rebuild every session exactly by replaying the
journal top to bottom.  Entry kinds:

    {"kind": "session", ...}   creation parameters (first line, exactly once)
    {"kind": "issue", "counter": n}   a task-id counter value was consumed
    {"kind": "record", ...}    an evaluation entered the history
    {"kind": "rejected", "task_id": ...}  a result failed verification
    {"kind": "params", "params": {...}}   the evolution parameters changed
    {"kind": "closed"}         the session stopped accepting work
"""

from __future__ import annotations

import json
import os
from pathlib import Path


class StoreError(RuntimeError):
    """Raised when the on-disk journal is missing or unreadable."""


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


class SessionStore:
    """Filesystem persistence for a single session."""

    def __init__(self, root: Path, session_id: str):
        self.session_id = session_id
        self.directory = Path(root) / session_id
        self.journal_path = self.directory / "journal.jsonl"
        self.logs_directory = self.directory / "logs"
        self._journal_file = None

    def create(self) -> None:
        """Prepare the directory tree for a brand-new session."""
        if self.journal_path.exists():
            raise StoreError(f"session directory already exists: {self.directory}")
        self.logs_directory.mkdir(parents=True, exist_ok=True)

    def exists(self) -> bool:
        return self.journal_path.exists()

    def append(self, entry: dict) -> None:
        """Write one journal entry and flush it to disk before returning."""
        if self._journal_file is None:
            self.logs_directory.mkdir(parents=True, exist_ok=True)
            self._journal_file = open(self.journal_path, "a", encoding="utf-8")
        self._journal_file.write(_dumps(entry) + "\n")
        self._journal_file.flush()
        os.fsync(self._journal_file.fileno())

    def read_journal(self) -> list[dict]:
        """Return every journal entry in write order."""
        if not self.journal_path.exists():
            raise StoreError(f"no journal at {self.journal_path}")
        entries = []
        with open(self.journal_path, encoding="utf-8") as fh:
            for line_number, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreError(
                        f"{self.journal_path}:{line_number}: not valid JSON: {exc}"
                    ) from exc
                if not isinstance(entry, dict) or "kind" not in entry:
                    raise StoreError(
                        f"{self.journal_path}:{line_number}: journal entries must be "
                        "objects with a 'kind' field"
                    )
                entries.append(entry)
        return entries

    def log_path(self, eval_index: int) -> Path:
        return self.logs_directory / f"{eval_index:06d}.simlog"

    def write_log(self, eval_index: int, text: str) -> None:
        self.logs_directory.mkdir(parents=True, exist_ok=True)
        self.log_path(eval_index).write_text(text, encoding="utf-8")

    def read_log(self, eval_index: int) -> str | None:
        path = self.log_path(eval_index)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def close(self) -> None:
        if self._journal_file is not None:
            self._journal_file.close()
            self._journal_file = None

    @staticmethod
    def discover(root: Path) -> list[str]:
        """Session ids that have a journal under ``root``."""
        root = Path(root)
        if not root.exists():
            return []
        found = []
        for child in sorted(root.iterdir()):
            if child.is_dir() and (child / "journal.jsonl").exists():
                found.append(child.name)
        return found
