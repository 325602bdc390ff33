"""Event-sourced persistence: append-only run log, body store, replay, report.

Each run owns one archive: a line-delimited JSON event log (with a version
header record), a full-text body store keyed by unit id, and a config
snapshot. Events are durably appended before the corresponding state change
is acknowledged; replaying the log through the same state transitions
reconstructs a byte-identical run state.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .model import (
    InformationUnit,
    ResearchAction,
    RunState,
    RunStatus,
    UnitKind,
)

ARCHIVE_FORMAT = "run-archive"
ARCHIVE_VERSION = 1
SNAPSHOT_INTERVAL = 100

ACTION_APPENDED = "action_appended"
UNIT_RECORDED = "unit_recorded"
MINIMIZATION_APPLIED = "minimization_applied"
SESSION_CLOSED = "session_closed"
SESSION_OPENED = "session_opened"
STATUS_CHANGED = "status_changed"
TRACE_COMPLETED = "trace_completed"

EVENT_KINDS = {
    ACTION_APPENDED,
    UNIT_RECORDED,
    MINIMIZATION_APPLIED,
    SESSION_CLOSED,
    SESSION_OPENED,
    STATUS_CHANGED,
    TRACE_COMPLETED,
}

CITATION_MARKER = re.compile(r"\[\^I(\d+)\]")


class StorageError(Exception):
    pass


class SequenceGap(StorageError):
    pass


class CorruptEvent(StorageError):
    pass


class StorageFailure(StorageError):
    pass


class NotFinished(StorageError):
    pass


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class RunEvent:
    seq: int
    kind: str
    at: float
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"seq": self.seq, "kind": self.kind, "at": self.at, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunEvent":
        return cls(seq=d["seq"], kind=d["kind"], at=d["at"], payload=d["payload"])


class RunArchive:
    """Append-only storage for one run; in-memory unless bound to a directory."""

    def __init__(self, run_id: str, config: Optional[dict[str, Any]] = None,
                 directory: Optional[str | Path] = None) -> None:
        self.run_id = run_id
        self.config: dict[str, Any] = config or {}
        self.events: list[RunEvent] = []
        self.bodies: dict[int, str] = {}
        self.directory = Path(directory) if directory else None
        self._snapshot: Optional[dict[str, Any]] = None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._events_path = self.directory / "events.jsonl"
            self._bodies_path = self.directory / "bodies.jsonl"
            if not self._events_path.exists():
                header = {"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION, "run_id": run_id}
                self._append_line(self._events_path, canonical_json(header))
                (self.directory / "config.json").write_text(
                    canonical_json(self.config), encoding="utf-8"
                )

    @staticmethod
    def _append_line(path: Path, line: str) -> None:
        try:
            with open(path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            raise StorageFailure(f"cannot append to {path}: {exc}") from exc

    def record_body(self, unit_id: int, body: str) -> None:
        """Store a unit's full text. Bodies are written once, never modified."""
        if unit_id in self.bodies:
            raise StorageFailure(f"body for unit {unit_id} already recorded")
        self.bodies[unit_id] = body
        if self.directory:
            self._append_line(self._bodies_path, canonical_json({"unit_id": unit_id, "body": body}))

    def append_event(self, event: RunEvent) -> None:
        if event.seq != len(self.events):
            raise SequenceGap(f"event seq {event.seq} != log length {len(self.events)}")
        if event.kind not in EVENT_KINDS:
            raise CorruptEvent(f"unknown event kind {event.kind!r}")
        if self.directory:
            self._append_line(self._events_path, canonical_json(event.to_dict()))
        self.events.append(event)

    def maybe_snapshot(self, state: RunState) -> None:
        """Persist a state snapshot every SNAPSHOT_INTERVAL events to bound replay."""
        if len(self.events) and len(self.events) % SNAPSHOT_INTERVAL == 0:
            snap = {"seq": len(self.events), "state": state.to_canonical_dict()}
            self._snapshot = snap
            if self.directory:
                (self.directory / "snapshot.json").write_text(canonical_json(snap), encoding="utf-8")

    def event_log_text(self) -> str:
        """The canonical event-log serialization (header + one line per event)."""
        header = {"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION, "run_id": self.run_id}
        lines = [canonical_json(header)]
        lines.extend(canonical_json(e.to_dict()) for e in self.events)
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, directory: str | Path) -> "RunArchive":
        """Load an archive from disk, tolerating a truncated final line."""
        directory = Path(directory)
        events_path = directory / "events.jsonl"
        raw_lines = events_path.read_text(encoding="utf-8").split("\n")
        if raw_lines and raw_lines[-1] == "":
            raw_lines.pop()
        if not raw_lines:
            raise CorruptEvent("empty event log")
        header = json.loads(raw_lines[0])
        if header.get("format") != ARCHIVE_FORMAT or header.get("version") != ARCHIVE_VERSION:
            raise CorruptEvent(f"unsupported archive header: {header}")
        config: dict[str, Any] = {}
        config_path = directory / "config.json"
        if config_path.exists():
            config = json.loads(config_path.read_text(encoding="utf-8"))
        archive = cls(run_id=header.get("run_id", directory.name), config=config)
        archive.directory = directory
        archive._events_path = events_path
        archive._bodies_path = directory / "bodies.jsonl"
        for i, line in enumerate(raw_lines[1:]):
            try:
                event = RunEvent.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError) as exc:
                if i == len(raw_lines) - 2:  # partial trailing write: recover to last complete event
                    break
                raise CorruptEvent(f"bad event at line {i + 2}: {exc}") from exc
            if event.seq != len(archive.events):
                raise CorruptEvent(f"sequence gap at line {i + 2}")
            archive.events.append(event)
        if archive._bodies_path.exists():
            body_lines = archive._bodies_path.read_text(encoding="utf-8").split("\n")
            for i, line in enumerate(body_lines):
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    if i >= len(body_lines) - 2:
                        break
                    raise CorruptEvent(f"bad body record at line {i + 1}")
                archive.bodies[rec["unit_id"]] = rec["body"]
        snap_path = directory / "snapshot.json"
        if snap_path.exists():
            try:
                archive._snapshot = json.loads(snap_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                archive._snapshot = None
        return archive


def apply_event(state: RunState, event: RunEvent, archive: RunArchive) -> None:
    """Apply one logged event through the shared low-level state transitions."""
    payload = event.payload
    if event.kind == ACTION_APPENDED:
        action = ResearchAction.from_dict(payload["action"])
        state.insert_action(action, narration_for_previous=payload.get("narration_for_previous", ""))
    elif event.kind == UNIT_RECORDED:
        meta = payload["unit"]
        if meta["id"] not in archive.bodies:
            raise CorruptEvent(f"missing body for unit {meta['id']}")
        unit = InformationUnit(
            id=meta["id"],
            kind=UnitKind(meta["kind"]),
            title=meta["title"],
            body=archive.bodies[meta["id"]],
            producer_action_id=meta["producer_action_id"],
            source_locator=meta.get("source_locator"),
        )
        state.insert_unit(unit)
    elif event.kind == MINIMIZATION_APPLIED:
        state.set_minimized(payload["unit_ids"])
    elif event.kind == SESSION_CLOSED:
        state.close_session(payload["session_id"], payload["end_action_id"])
    elif event.kind == SESSION_OPENED:
        state.open_new_session(payload["session_id"], payload["start_action_id"])
    elif event.kind == STATUS_CHANGED:
        state.set_status(RunStatus(payload["status"]))
    elif event.kind == TRACE_COMPLETED:
        pass  # traces are read-only; the event records provenance activity
    else:
        raise CorruptEvent(f"unknown event kind {event.kind!r}")


def replay(archive: RunArchive, use_snapshot: bool = True) -> RunState:
    """Reconstruct the run state from the archive. No tools or gateway involved."""
    state = RunState()
    start_seq = 0
    snap = archive._snapshot if use_snapshot else None
    if snap and snap.get("seq", 0) <= len(archive.events):
        state = RunState.from_canonical_dict(snap["state"])
        start_seq = snap["seq"]
    for event in archive.events[start_seq:]:
        apply_event(state, event, archive)
    return state


def terminal_summary_note(state: RunState) -> Optional[InformationUnit]:
    """The run's final report note: last progress-summary note, else last note."""
    last_note: Optional[InformationUnit] = None
    for unit in reversed(state.units):
        if unit.kind is not UnitKind.PROCESSED:
            continue
        if last_note is None:
            last_note = unit
        producer = state.actions[unit.producer_action_id]
        if producer.parameters.get("progress_summary", False):
            return unit
    return last_note


def export_report(archive: RunArchive, state: Optional[RunState] = None) -> str:
    """Render the finished run's report: terminal summary plus a citation appendix."""
    if state is None:
        state = replay(archive)
    if state.status is not RunStatus.FINISHED:
        raise NotFinished(f"run {archive.run_id} is {state.status.value}, not finished")
    note = terminal_summary_note(state)
    lines = [f"# research report: {archive.run_id}", ""]
    if note is None:
        lines.append("(no summary note was produced)")
        cited: list[int] = []
    else:
        lines.append(note.body)
        cited = []
        for match in CITATION_MARKER.finditer(note.body):
            unit_id = int(match.group(1))
            if unit_id not in cited:
                cited.append(unit_id)
    lines.append("")
    lines.append("## cited information")
    if not cited:
        lines.append("(none)")
    for unit_id in cited:
        unit = state.unit(unit_id)
        entry = f"- [^I{unit_id}] #{unit_id} ({unit.kind.value}) \"{unit.title}\""
        if unit.source_locator:
            entry += f" locator: {unit.source_locator}"
        lines.append(entry)
    return "\n".join(lines) + "\n"
