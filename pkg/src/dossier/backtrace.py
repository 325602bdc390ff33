"""Recursive evidence backtrace.

Given a selected text span, walk the dependency predecessors of the unit that
contains it, asking a pluggable judge whether each predecessor's full body
supports the claim. Positive findings inside processed units are traced
further; search/source/user units are raw and terminate a branch. Ordinals
strictly decrease along every branch, so traces always terminate.

The backtrace reads the store directly: minimized flags are ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .model import ModelError, RunState, UnitKind

DEFAULT_DEPTH_LIMIT = 10

RAW_REACHED = "raw_reached"
NO_EVIDENCE_FOUND = "no_evidence_found"
DEPTH_LIMIT = "depth_limit"

# judge: (claim_text, candidate_body) -> (start, end) span in the body, or None
EvidenceJudge = Callable[[str, str], Optional[tuple[int, int]]]


class InvalidSpan(ModelError):
    pass


@dataclass
class TraceRequest:
    unit_id: int
    start: int
    end: int
    claim_text: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "unit_id": self.unit_id,
            "start": self.start,
            "end": self.end,
            "claim_text": self.claim_text,
        }


@dataclass
class EvidenceFinding:
    """One piece of verbatim supporting evidence found in a predecessor unit."""

    supporting_unit_id: int
    start: int
    end: int
    evidence_quote: str
    children: list["EvidenceFinding"] = field(default_factory=list)
    terminal: Optional[str] = None  # set on leaves only


@dataclass
class TraceResult:
    root: TraceRequest
    findings: list[EvidenceFinding] = field(default_factory=list)
    root_terminal: Optional[str] = None
    judged_count: int = 0
    errors: list[str] = field(default_factory=list)

    def leaves(self) -> list[EvidenceFinding]:
        out: list[EvidenceFinding] = []

        def walk(f: EvidenceFinding) -> None:
            if not f.children:
                out.append(f)
            for c in f.children:
                walk(c)

        for f in self.findings:
            walk(f)
        return out

    def to_parent_pointer_list(self) -> list[dict[str, Any]]:
        """Flatten the tree as a parent-pointer list; the root claim is index 0."""
        nodes: list[dict[str, Any]] = [
            {
                "index": 0,
                "parent": -1,
                "unit_id": self.root.unit_id,
                "start": self.root.start,
                "end": self.root.end,
                "quote": self.root.claim_text,
                "terminal": self.root_terminal,
            }
        ]

        def walk(finding: EvidenceFinding, parent_index: int) -> None:
            index = len(nodes)
            nodes.append(
                {
                    "index": index,
                    "parent": parent_index,
                    "unit_id": finding.supporting_unit_id,
                    "start": finding.start,
                    "end": finding.end,
                    "quote": finding.evidence_quote,
                    "terminal": finding.terminal,
                }
            )
            for child in finding.children:
                walk(child, index)

        for finding in self.findings:
            walk(finding, 0)
        return nodes

    def to_dict(self) -> dict[str, Any]:
        return {
            "root": self.root.to_dict(),
            "nodes": self.to_parent_pointer_list(),
            "judged_count": self.judged_count,
            "errors": list(self.errors),
        }


def split_sentences(text: str) -> list[str]:
    """Sentence split on ., !, ? boundaries; whole text when none match."""
    parts = [p.strip() for p in re.split(r"(?<=[.!?])\s+", text.strip()) if p.strip()]
    return parts if parts else ([text.strip()] if text.strip() else [])


def substring_judge(claim_text: str, body: str) -> Optional[tuple[int, int]]:
    """Deterministic test judge: longest claim sentence found verbatim in body.

    Ties between equally long sentences go to the one appearing first in the
    claim; multiple occurrences in the body resolve to the first by offset.
    """
    sentences = split_sentences(claim_text)
    for sentence in sorted(sentences, key=lambda s: -len(s)):
        at = body.find(sentence)
        if at != -1:
            return (at, at + len(sentence))
    return None


class MalformedVerdict(ModelError):
    pass


JUDGE_PROMPT = (
    "You are verifying evidence. Given a claim and a candidate text, reply with JSON: "
    '{"verdict": "evidence", "quote": "<verbatim quote from the candidate that supports the claim>"} '
    'or {"verdict": "none"} if the candidate contains no supporting evidence. '
    "The quote must be copied exactly from the candidate text."
)


class ModelJudge:
    """Gateway-backed judge with an anti-hallucination guard.

    The gateway must return a verbatim quote; anything not found by exact
    substring search in the candidate body counts as no evidence. A malformed
    verdict is retried once, then treated as no evidence. Gateway
    unavailability propagates (the trace records it and moves on).
    """

    def __init__(self, gateway: Any, max_body_chars: int = 60_000) -> None:
        self.gateway = gateway
        self.max_body_chars = max_body_chars

    def _verdict(self, claim_text: str, body: str) -> Optional[str]:
        request = {
            "messages": [
                {"role": "system", "content": JUDGE_PROMPT},
                {"role": "user", "content": f"claim:\n{claim_text}\n\ncandidate:\n{body[: self.max_body_chars]}"},
            ]
        }
        response = self.gateway.complete(request)
        verdict = response.get("verdict") if isinstance(response, dict) else None
        if verdict == "none":
            return None
        if verdict == "evidence" and isinstance(response.get("quote"), str):
            return response["quote"]
        raise MalformedVerdict(f"unusable judge response: {response!r}")

    def __call__(self, claim_text: str, body: str) -> Optional[tuple[int, int]]:
        for attempt in (0, 1):
            try:
                quote = self._verdict(claim_text, body)
            except MalformedVerdict:
                if attempt == 1:
                    return None
                continue
            if quote is None:
                return None
            at = body.find(quote)
            if at == -1:
                return None  # fabricated quote: reject
            return (at, at + len(quote))
        return None


def _predecessor_units(state: RunState, unit_id: int) -> list[int]:
    producer = state.actions[state.unit(unit_id).producer_action_id]
    return sorted(set(producer.depends_on))


def trace(
    state: RunState,
    request: TraceRequest,
    judge: EvidenceJudge,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    on_judged: Optional[Callable[[int], None]] = None,
) -> TraceResult:
    """Trace a claim down to raw information, depth-first.

    Predecessors are judged in ascending ordinal order against their full
    stored bodies. Judge errors are recorded and the trace continues on
    siblings. ``on_judged`` is invoked once per judged candidate unit.
    """
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    unit = state.unit(request.unit_id)
    if not (0 <= request.start < request.end <= len(unit.body)):
        raise InvalidSpan(f"span {request.start}..{request.end} out of bounds for unit {request.unit_id}")
    if unit.body[request.start : request.end] != request.claim_text:
        raise InvalidSpan("claim_text does not match the unit body at the given span")

    result = TraceResult(root=request)

    def expand(unit_id: int, claim: str, depth: int) -> tuple[list[EvidenceFinding], Optional[str]]:
        """Children findings for a claim located in unit_id, or a terminal flag."""
        if state.unit(unit_id).kind is not UnitKind.PROCESSED:
            return [], RAW_REACHED
        if depth >= depth_limit:
            return [], DEPTH_LIMIT
        findings: list[EvidenceFinding] = []
        for pred_id in _predecessor_units(state, unit_id):
            body = state.unit(pred_id).body  # full body: backtrace ignores minimization
            try:
                span = judge(claim, body)
            except Exception as exc:  # judge failure: note it, keep siblings going
                result.errors.append(f"judge failed on unit {pred_id}: {exc}")
                continue
            finally:
                result.judged_count += 1
                if on_judged is not None:
                    on_judged(pred_id)
            if span is None:
                continue
            start, end = span
            quote = body[start:end]
            finding = EvidenceFinding(
                supporting_unit_id=pred_id, start=start, end=end, evidence_quote=quote
            )
            finding.children, finding.terminal = expand(pred_id, quote, depth + 1)
            findings.append(finding)
        if findings:
            return findings, None
        return [], NO_EVIDENCE_FOUND

    result.findings, result.root_terminal = expand(request.unit_id, request.claim_text, 0)
    return result


def make_trace_request(state: RunState, unit_id: int, start: int, end: int) -> TraceRequest:
    """Build a request from a selected span, validating bounds."""
    unit = state.unit(unit_id)
    if not (0 <= start < end <= len(unit.body)):
        raise InvalidSpan(f"span {start}..{end} out of bounds for unit {unit_id}")
    return TraceRequest(unit_id=unit_id, start=start, end=end, claim_text=unit.body[start:end])
