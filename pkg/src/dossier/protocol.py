"""The published session protocol: message envelopes, kinds, schema validation.

Every message (client->server commands, server->client stream events, and
direct query replies) is a JSON envelope::

    {"v": 1, "run_id": "...", "seq": <int or null>, "kind": "...", "payload": {...}}

Stream events carry the per-run sequence number; direct replies to queries
carry ``seq: null``. The JSON Schema shipped in assets/protocol.schema.json is
the wire contract the web UI and headless clients validate against.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Any, Optional

import jsonschema

from .model import RunState, dependency_predecessors, dependency_successors

PROTOCOL_VERSION = 1

CLIENT_KINDS = {
    "StartRun",
    "UserMessage",
    "Interrupt",
    "TraceRequest",
    "FocusQuery",
    "InfoQuery",
    "Export",
}

SERVER_STREAM_KINDS = {
    "ActionStarted",
    "NarrationDelta",
    "ActionCompleted",
    "UnitCreated",
    "MinimizationApplied",
    "SessionBoundary",
    "StatusChanged",
    "TraceProgress",
    "TraceResult",
    "Error",
}

REPLY_KINDS = {"FocusBundle", "InfoBody", "ReportDocument", "Ack"}


def envelope(run_id: str, kind: str, payload: dict[str, Any], seq: Optional[int] = None) -> dict[str, Any]:
    return {"v": PROTOCOL_VERSION, "run_id": run_id, "seq": seq, "kind": kind, "payload": payload}


@lru_cache(maxsize=1)
def message_schema() -> dict[str, Any]:
    raw = resources.files("dossier").joinpath("assets/protocol.schema.json").read_text(encoding="utf-8")
    return json.loads(raw)


@lru_cache(maxsize=1)
def _validator() -> jsonschema.Validator:
    schema = message_schema()
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    return cls(schema)


def validate_message(message: dict[str, Any]) -> None:
    """Raise jsonschema.ValidationError if the message violates the contract."""
    _validator().validate(message)


def focus_bundle(state: RunState, action_id: int) -> dict[str, Any]:
    """Everything the three views need to link on one action, in one response."""
    action = state.action(action_id)
    unit = state.unit_for_action(action_id)
    last_action_id = len(state.actions) - 1
    session_ids = [
        s.id for s in state.sessions if action_id in s.action_ids(last_action_id)
    ]
    return {
        "action": action.to_dict(),
        "unit": unit.to_dict() if unit is not None else None,
        "predecessors": dependency_predecessors(state.graph, action_id),
        "successors": dependency_successors(state.graph, action_id),
        "session_ids": session_ids,
        "session_id": session_ids[-1] if session_ids else None,
        "sequence_prev": action_id - 1 if action_id > 0 else None,
        "sequence_next": action_id + 1 if action_id < last_action_id else None,
    }
