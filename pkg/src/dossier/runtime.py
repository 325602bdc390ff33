"""The decision loop: render context, ask for the next action, execute, record.

One engine drives one run. Every mutation is appended to the run's archive
before it becomes observable, and listeners receive protocol-level
notifications (ActionStarted, ActionCompleted, UnitCreated, ...) that the
service layer fans out to subscribers.

The decision function is pluggable: a scripted list for tests and benchmarks,
or a model gateway in live mode. Either way it sees exactly the rendered
context and the tool schema — nothing else.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Optional

from . import model
from .backtrace import EvidenceJudge, TraceRequest, TraceResult, trace
from .model import (
    ActionKind,
    Actor,
    InformationUnit,
    ModelError,
    ResearchAction,
    RunState,
    RunStatus,
    UnitKind,
)
from .reduction import (
    ContextBlock,
    RenderedContext,
    apply_post_process_reduction,
    apply_session_boundary_reduction,
    read_information,
    render_context,
)
from .storage import (
    ACTION_APPENDED,
    MINIMIZATION_APPLIED,
    SESSION_CLOSED,
    SESSION_OPENED,
    STATUS_CHANGED,
    TRACE_COMPLETED,
    UNIT_RECORDED,
    RunArchive,
    RunEvent,
)
from .tools import GatewayError, GatewayUnavailable, ToolError, ToolSet

PROMPTS_VERSION = "1"
READ_INFORMATION = "read_information"
CITATION_MARKER = re.compile(r"\[\^I(\d+)\]")

AGENT_DECISION_KINDS = {
    ActionKind.WEB_SEARCH.value,
    ActionKind.SCRAPE_WEBPAGE.value,
    ActionKind.CREATE_NOTE.value,
    ActionKind.FINISH.value,
    READ_INFORMATION,
}


class EngineError(ModelError):
    pass


class DecisionInvalid(EngineError):
    pass


class NotRunning(EngineError):
    pass


class NotAwaitingUser(EngineError):
    pass


class InvalidRef(EngineError):
    pass


class UncitedMarker(EngineError):
    pass


def load_system_prompt() -> str:
    return resources.files("dossier").joinpath("assets/system_prompt.md").read_text(encoding="utf-8")


def load_tool_schema() -> dict[str, Any]:
    raw = resources.files("dossier").joinpath("assets/tool_schema.json").read_text(encoding="utf-8")
    return json.loads(raw)


class LogicalClock:
    """Deterministic clock for fixture runs: every reading ticks by one."""

    def __init__(self) -> None:
        self.ticks = 0

    def __call__(self) -> float:
        self.ticks += 1
        return float(self.ticks)


@dataclass
class RunConfig:
    milestone_round_threshold: int = 8  # N: rounds before a summary is demanded
    context_budget: int = 32768
    depth_limit: int = 10
    max_reads_per_step: int = 8
    clock_mode: str = "wall"  # "wall" | "logical"
    prompts_version: str = PROMPTS_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "milestone_round_threshold": self.milestone_round_threshold,
            "context_budget": self.context_budget,
            "depth_limit": self.depth_limit,
            "max_reads_per_step": self.max_reads_per_step,
            "clock_mode": self.clock_mode,
            "prompts_version": self.prompts_version,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class AgentDecision:
    """One structured decision: the next action plus its narrations."""

    kind: str
    parameters: dict[str, Any] = field(default_factory=dict)
    narration_before: str = ""
    narration_for_previous: str = ""


def parse_decision(obj: Any) -> AgentDecision:
    """Validate a raw decision object (a structured tool call) into a decision."""
    if isinstance(obj, AgentDecision):
        obj = {
            "kind": obj.kind,
            "parameters": obj.parameters,
            "narration_before": obj.narration_before,
            "narration_for_previous": obj.narration_for_previous,
        }
    if not isinstance(obj, dict):
        raise DecisionInvalid(f"decision must be an object, got {type(obj).__name__}")
    kind = obj.get("kind")
    if kind not in AGENT_DECISION_KINDS:
        raise DecisionInvalid(f"unknown decision kind {kind!r}")
    params = obj.get("parameters", {})
    if not isinstance(params, dict):
        raise DecisionInvalid("decision parameters must be an object")
    if kind == ActionKind.WEB_SEARCH.value:
        if not isinstance(params.get("query"), str) or not params["query"].strip():
            raise DecisionInvalid("web_search requires a non-empty query")
    elif kind == ActionKind.SCRAPE_WEBPAGE.value:
        if not isinstance(params.get("url"), str) or not params["url"].strip():
            raise DecisionInvalid("scrape_webpage requires a url")
    elif kind == ActionKind.CREATE_NOTE.value:
        ids = params.get("input_unit_ids")
        if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
            raise DecisionInvalid("create_note requires input_unit_ids: list of ints")
        if not isinstance(params.get("body"), str) or not params["body"].strip():
            raise DecisionInvalid("create_note requires a non-empty body")
        params.setdefault("progress_summary", False)
        if not isinstance(params["progress_summary"], bool):
            raise DecisionInvalid("progress_summary must be a boolean")
        params.setdefault("requirement", "")
    elif kind == READ_INFORMATION:
        if not isinstance(params.get("unit_id"), int):
            raise DecisionInvalid("read_information requires unit_id: int")
    return AgentDecision(
        kind=kind,
        parameters=params,
        narration_before=str(obj.get("narration_before", "")),
        narration_for_previous=str(obj.get("narration_for_previous", "")),
    )


def render_citation_superscripts(note_body: str, cited_ids: list[int]) -> tuple[str, list[str]]:
    """Validate superscript citation markers ([^I<id>]) against the cited ids.

    A marker outside the cited set is an error; a cited id with no marker is
    downgraded to a warning recorded on the action.
    """
    cited = set(cited_ids)
    used: set[int] = set()
    for m in CITATION_MARKER.finditer(note_body):
        marker_id = int(m.group(1))
        if marker_id not in cited:
            raise UncitedMarker(f"citation marker [^I{marker_id}] is not among the cited inputs")
        used.add(marker_id)
    warnings = [f"cited unit {u} has no citation marker in the note body" for u in sorted(cited - used)]
    return note_body, warnings


def clip_title(text: str) -> str:
    title = text.strip().split("\n", 1)[0]
    return title[: model.MAX_TITLE_LEN]


def format_quoted_refs(state: RunState, refs: list[tuple[int, int, int]]) -> str:
    """Quote-block rendering of (unit_id, start, end) references (documented format)."""
    blocks = []
    for unit_id, start, end in refs:
        unit = state.unit(unit_id)
        quoted = unit.body[start:end]
        quoted_lines = "\n".join("> " + line for line in quoted.split("\n"))
        blocks.append(f'> ref information #{unit_id} "{unit.title}" chars {start}-{end}:\n{quoted_lines}')
    return "\n\n".join(blocks)


class ScriptedDecisions:
    """Decision function driven by a fixed list; for tests and fixture benches."""

    def __init__(self, decisions: list[Any]) -> None:
        self.decisions = decisions
        self.cursor = 0

    def __call__(self, rendered: RenderedContext, tool_schema: dict[str, Any]) -> Any:
        if self.cursor >= len(self.decisions):
            raise GatewayUnavailable(f"decision script exhausted after {self.cursor} decisions")
        decision = self.decisions[self.cursor]
        self.cursor += 1
        return decision


class GatewayDecisionFunction:
    """Decision function backed by a model gateway (live or scripted).

    The full rendered context and tool schema form the request; the gateway's
    capture log therefore witnesses exactly what the decision saw.
    """

    def __init__(self, gateway: Any, system_prompt: Optional[str] = None) -> None:
        self.gateway = gateway
        self.system_prompt = system_prompt if system_prompt is not None else load_system_prompt()

    def __call__(self, rendered: RenderedContext, tool_schema: dict[str, Any]) -> Any:
        request = {
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": rendered.to_text()},
            ],
            "tool_schema": tool_schema,
        }
        try:
            return self.gateway.complete(request)
        except GatewayUnavailable:
            raise
        except GatewayError as exc:  # malformed response: one retry at the gateway layer
            try:
                return self.gateway.complete(request)
            except GatewayUnavailable:
                raise
            except GatewayError:
                raise DecisionInvalid(f"gateway response malformed twice: {exc}") from exc


@dataclass
class EngineStats:
    steps: int = 0
    peak_context_estimate: int = 0
    coerced_summaries: int = 0
    decision_retries: int = 0


class RunEngine:
    """Single-writer driver for one run. External callers must serialize
    mutating calls; interrupt() only sets a flag and is safe from any thread."""

    def __init__(
        self,
        run_id: str,
        decision_fn: Callable[[RenderedContext, dict[str, Any]], Any],
        tools: ToolSet,
        archive: Optional[RunArchive] = None,
        config: Optional[RunConfig] = None,
        state: Optional[RunState] = None,
        listeners: Optional[list[Callable[[str, dict[str, Any]], None]]] = None,
    ) -> None:
        self.run_id = run_id
        self.config = config or RunConfig()
        self.decision_fn = decision_fn
        self.tools = tools
        self.clock = LogicalClock() if self.config.clock_mode == "logical" else time.time
        self.archive = archive or RunArchive(run_id, config=self.config.to_dict())
        self.state = state or RunState()
        self.listeners = list(listeners or [])
        self.tool_schema = load_tool_schema()
        self.stats = EngineStats()
        self.interrupt_requested = False

    # -- plumbing ------------------------------------------------------------

    def emit(self, kind: str, payload: dict[str, Any]) -> None:
        for listener in self.listeners:
            listener(kind, payload)

    def _event(self, kind: str, payload: dict[str, Any]) -> None:
        event = RunEvent(seq=len(self.archive.events), kind=kind, at=self.clock(), payload=payload)
        self.archive.append_event(event)
        self.archive.maybe_snapshot(self.state)

    def _set_status(self, status: RunStatus) -> None:
        if self.state.status is status:
            return
        self.state.set_status(status)
        self._event(STATUS_CHANGED, {"status": status.value})
        self.emit("StatusChanged", {"status": status.value})

    def _append(
        self,
        action: ResearchAction,
        unit: Optional[InformationUnit],
        narration_for_previous: str = "",
    ) -> model.AppendOutcome:
        if narration_for_previous and self.state.actions:
            previous = self.state.actions[-1]
            previous.narration_after = narration_for_previous
            self.emit(
                "NarrationDelta",
                {"action_id": previous.id, "field": "narration_after", "text": narration_for_previous},
            )
        if unit is not None:
            self.archive.record_body(unit.id, unit.body)
        outcome = model.append_action(self.state, action, unit)
        self._event(
            ACTION_APPENDED,
            {"action": action.to_dict(), "narration_for_previous": narration_for_previous},
        )
        if unit is not None:
            self._event(
                UNIT_RECORDED,
                {
                    "unit": {
                        "id": unit.id,
                        "kind": unit.kind.value,
                        "title": unit.title,
                        "producer_action_id": unit.producer_action_id,
                        "source_locator": unit.source_locator,
                    }
                },
            )
        transition = outcome.transition
        if transition is not None:
            if transition.closed_session_id is not None:
                self._event(
                    SESSION_CLOSED,
                    {
                        "session_id": transition.closed_session_id,
                        "end_action_id": transition.closed_end_action_id,
                    },
                )
            if transition.opened_session_id is not None:
                self._event(
                    SESSION_OPENED,
                    {
                        "session_id": transition.opened_session_id,
                        "start_action_id": transition.opened_start_action_id,
                    },
                )
        self.emit("ActionCompleted", {"action": action.to_dict()})
        if unit is not None:
            self.emit("UnitCreated", {"unit": unit.to_dict()})
        if transition is not None and (
            transition.closed_session_id is not None or transition.opened_session_id is not None
        ):
            self.emit(
                "SessionBoundary",
                {
                    "closed_session_id": transition.closed_session_id,
                    "closed_end_action_id": transition.closed_end_action_id,
                    "opened_session_id": transition.opened_session_id,
                    "opened_start_action_id": transition.opened_start_action_id,
                },
            )
        return outcome

    def _reduce(self, trigger: str, apply_fn: Callable[[RunState], list[int]]) -> None:
        ids = apply_fn(self.state)
        if not ids:
            return
        self._event(MINIMIZATION_APPLIED, {"unit_ids": ids, "trigger": trigger})
        self.emit("MinimizationApplied", {"unit_ids": ids, "trigger": trigger})

    # -- user-facing commands --------------------------------------------------

    def user_message(self, text: str, refs: Optional[list[tuple[int, int, int]]] = None) -> RunState:
        """Append a user message (milestone), optionally quoting prior units."""
        if self.state.status is RunStatus.FINISHED:
            raise model.RunFinished("run already finished")
        if self.state.status is RunStatus.RUNNING:
            raise NotAwaitingUser("cannot send a message while the agent is running")
        if not text.strip():
            raise InvalidRef("message text must be non-empty")
        refs = [tuple(r) for r in (refs or [])]
        for unit_id, start, end in refs:
            if not 0 <= unit_id < len(self.state.units):
                raise InvalidRef(f"quoted reference to unknown unit {unit_id}")
            body = self.state.units[unit_id].body
            if not (0 <= start < end <= len(body)):
                raise InvalidRef(f"quoted span {start}..{end} out of bounds for unit {unit_id}")
        body = text
        if refs:
            body = format_quoted_refs(self.state, refs) + "\n\n" + text
        action_id = len(self.state.actions)
        action = ResearchAction(
            id=action_id,
            kind=ActionKind.USER_MESSAGE,
            actor=Actor.USER,
            parameters={"text": text, "quoted_refs": [list(r) for r in refs]},
            depends_on=[r[0] for r in refs],
            recorded_at=self.clock(),
        )
        unit = InformationUnit(
            id=len(self.state.units),
            kind=UnitKind.USER,
            title=clip_title(text),
            body=body,
            producer_action_id=action_id,
        )
        self.emit(
            "ActionStarted",
            {"action_id": action_id, "kind": action.kind.value, "actor": "user",
             "parameters": action.parameters, "narration_before": ""},
        )
        outcome = self._append(action, unit)
        if outcome.transition and outcome.transition.opened_session_id is not None:
            self._reduce("session_boundary", apply_session_boundary_reduction)
        self._set_status(RunStatus.RUNNING)
        return self.state

    def interrupt(self) -> None:
        """Request an interrupt; takes effect at the next loop boundary."""
        if self.state.status is RunStatus.RUNNING:
            self.interrupt_requested = True
            self.state.interrupt_flag = True
        elif self.state.status is RunStatus.AWAITING_USER:
            return  # idempotent no-op
        else:
            raise NotRunning(f"cannot interrupt a {self.state.status.value} run")

    def materialize_interrupt(self) -> None:
        """Append the pending user-interrupt milestone and hand control back."""
        if not self.interrupt_requested:
            return
        self.interrupt_requested = False
        self.state.interrupt_flag = False
        action_id = len(self.state.actions)
        action = ResearchAction(
            id=action_id,
            kind=ActionKind.USER_INTERRUPT,
            actor=Actor.USER,
            parameters={},
            recorded_at=self.clock(),
        )
        unit = InformationUnit(
            id=len(self.state.units),
            kind=UnitKind.USER,
            title="user interrupt",
            body="",
            producer_action_id=action_id,
        )
        self.emit(
            "ActionStarted",
            {"action_id": action_id, "kind": action.kind.value, "actor": "user",
             "parameters": {}, "narration_before": ""},
        )
        outcome = self._append(action, unit)
        if outcome.transition and outcome.transition.opened_session_id is not None:
            self._reduce("session_boundary", apply_session_boundary_reduction)
        self._set_status(RunStatus.AWAITING_USER)

    # -- the loop ---------------------------------------------------------------

    def run(self, max_steps: Optional[int] = None) -> RunState:
        """Step until finish, interrupt, or max_steps."""
        if self.state.status is RunStatus.FINISHED:
            raise model.RunFinished("run already finished")
        self._set_status(RunStatus.RUNNING)
        steps = 0
        while self.state.status is RunStatus.RUNNING:
            if self.interrupt_requested:
                self.materialize_interrupt()
                break
            if max_steps is not None and steps >= max_steps:
                self._set_status(RunStatus.AWAITING_USER)
                break
            self.step()
            steps += 1
        if self.state.status is RunStatus.FINISHED:
            self.interrupt_requested = False
            self.state.interrupt_flag = False
        return self.state

    def step(self) -> None:
        """Execute one decision: render, decide, run the tool, record everything."""
        if self.state.status is not RunStatus.RUNNING:
            raise NotRunning(f"cannot step a {self.state.status.value} run")
        rounds = self.state.rounds_since_milestone
        if rounds >= self.config.milestone_round_threshold + 1:
            decision = self._coerced_summary_decision()
            self.stats.coerced_summaries += 1
        else:
            decision = self._obtain_decision(rounds)
            if decision is None:
                return  # escalated to awaiting_user
        self._execute(decision)
        self.stats.steps += 1

    def _render(self, extra_blocks: list[ContextBlock]) -> RenderedContext:
        rendered = render_context(self.state, self.config.context_budget, extra_blocks=extra_blocks)
        if rendered.token_estimate > self.stats.peak_context_estimate:
            self.stats.peak_context_estimate = rendered.token_estimate
        return rendered

    def _obtain_decision(self, rounds: int) -> Optional[AgentDecision]:
        extra: list[ContextBlock] = []
        if rounds >= self.config.milestone_round_threshold:
            extra.append(
                ContextBlock(
                    kind="directive",
                    ref_id=-1,
                    text=(
                        "(directive) Milestone round threshold reached: your next action "
                        "must be create_note with progress_summary=true, summarizing "
                        "research progress since the last milestone."
                    ),
                )
            )
        failures = 0
        reads = 0
        while True:
            rendered = self._render(extra)
            try:
                raw = self.decision_fn(rendered, self.tool_schema)
                decision = parse_decision(raw)
                self._validate_against_state(decision)
            except (DecisionInvalid, UncitedMarker) as exc:
                failures += 1
                self.stats.decision_retries += 1
                if failures > 1:
                    self.emit("Error", {"code": "DecisionInvalid", "message": str(exc)})
                    self._set_status(RunStatus.AWAITING_USER)
                    return None
                extra.append(
                    ContextBlock(
                        kind="error",
                        ref_id=-1,
                        text=f"(error) previous decision was invalid: {exc}. Reply with a valid tool call.",
                    )
                )
                continue
            if decision.kind == READ_INFORMATION:
                reads += 1
                unit_id = decision.parameters["unit_id"]
                if reads > self.config.max_reads_per_step or not 0 <= unit_id < len(self.state.units):
                    failures += 1
                    self.stats.decision_retries += 1
                    if failures > 1:
                        self.emit("Error", {"code": "DecisionInvalid", "message": "read_information misuse"})
                        self._set_status(RunStatus.AWAITING_USER)
                        return None
                    extra.append(
                        ContextBlock(
                            kind="error",
                            ref_id=-1,
                            text="(error) read_information rejected: unknown unit or read cap reached.",
                        )
                    )
                    continue
                body = read_information(self.state, unit_id)
                unit = self.state.unit(unit_id)
                extra.append(
                    ContextBlock(
                        kind="transient",
                        ref_id=unit_id,
                        text=f'[read_information({unit_id}) "{unit.title}"]\n{body}',
                    )
                )
                continue
            return decision

    def _validate_against_state(self, decision: AgentDecision) -> None:
        if decision.kind == ActionKind.CREATE_NOTE.value:
            ids = decision.parameters["input_unit_ids"]
            for unit_id in ids:
                if not 0 <= unit_id < len(self.state.units):
                    raise DecisionInvalid(f"create_note cites unknown unit {unit_id}")
            render_citation_superscripts(decision.parameters["body"], ids)

    def _coerced_summary_decision(self) -> AgentDecision:
        """Runtime-made progress summary once the trigger grace is exhausted."""
        last_milestone = 0
        for action in reversed(self.state.actions):
            if action.is_milestone:
                last_milestone = action.id
                break
        inputs = [u for u in self.state.units if u.producer_action_id > last_milestone]
        lines = ["Progress checkpoint: summary coerced after the milestone round threshold.", ""]
        lines += [f"- {u.title} [^I{u.id}]" for u in inputs]
        return AgentDecision(
            kind=ActionKind.CREATE_NOTE.value,
            parameters={
                "title": "progress checkpoint",
                "body": "\n".join(lines),
                "input_unit_ids": [u.id for u in inputs],
                "requirement": "summarize research progress since the last milestone",
                "progress_summary": True,
            },
            narration_before="Recording a progress checkpoint before continuing.",
        )

    def _execute(self, decision: AgentDecision) -> None:
        action_id = len(self.state.actions)
        kind = ActionKind(decision.kind)
        self.emit(
            "ActionStarted",
            {"action_id": action_id, "kind": kind.value, "actor": "agent",
             "parameters": decision.parameters, "narration_before": decision.narration_before},
        )
        if decision.narration_before:
            self.emit(
                "NarrationDelta",
                {"action_id": action_id, "field": "narration_before", "text": decision.narration_before},
            )

        unit: Optional[InformationUnit] = None
        depends_on: list[int] = []
        warnings: list[str] = []
        parameters = dict(decision.parameters)

        if kind is ActionKind.WEB_SEARCH:
            query = parameters["query"]
            try:
                result = self.tools.search.search(query)
                body = result.to_body()
            except Exception as exc:  # tool failures surface as observable results
                body = f"search failed: {exc}"
            unit = InformationUnit(
                id=len(self.state.units),
                kind=UnitKind.SEARCH,
                title=clip_title(f"search: {query}"),
                body=body,
                producer_action_id=action_id,
                source_locator=query,
            )
        elif kind is ActionKind.SCRAPE_WEBPAGE:
            url = parameters["url"]
            try:
                page = self.tools.scrape.scrape(url)
                body = page.to_body()
            except Exception as exc:
                body = f"scrape failed: {exc}"
            unit = InformationUnit(
                id=len(self.state.units),
                kind=UnitKind.SOURCE,
                title=clip_title(f"page: {url}"),
                body=body,
                producer_action_id=action_id,
                source_locator=url,
            )
        elif kind is ActionKind.CREATE_NOTE:
            body, warnings = render_citation_superscripts(
                parameters["body"], parameters["input_unit_ids"]
            )
            depends_on = list(parameters["input_unit_ids"])
            title = parameters.get("title") or clip_title(body)
            unit = InformationUnit(
                id=len(self.state.units),
                kind=UnitKind.PROCESSED,
                title=clip_title(title),
                body=body,
                producer_action_id=action_id,
            )
            parameters = {
                "input_unit_ids": depends_on,
                "requirement": parameters.get("requirement", ""),
                "progress_summary": parameters.get("progress_summary", False),
                "title": clip_title(title),
            }
        elif kind is ActionKind.FINISH:
            parameters = {}

        action = ResearchAction(
            id=action_id,
            kind=kind,
            actor=Actor.AGENT,
            parameters=parameters,
            narration_before=decision.narration_before,
            depends_on=depends_on,
            warnings=warnings,
            recorded_at=self.clock(),
        )
        outcome = self._append(action, unit, narration_for_previous=decision.narration_for_previous)

        if kind is ActionKind.CREATE_NOTE:
            self._reduce("post_process", apply_post_process_reduction)
        if outcome.transition and outcome.transition.opened_session_id is not None:
            self._reduce("session_boundary", apply_session_boundary_reduction)
        if kind is ActionKind.FINISH:
            self._set_status(RunStatus.FINISHED)

    # -- navigation / provenance -------------------------------------------------

    def request_trace(
        self,
        request: TraceRequest,
        judge: EvidenceJudge,
        depth_limit: Optional[int] = None,
        emit_progress: bool = True,
    ) -> TraceResult:
        """Run a backtrace over the current state and record the result."""

        def on_judged(unit_id: int) -> None:
            if emit_progress:
                self.emit("TraceProgress", {"judged_unit_id": unit_id})

        result = trace(
            self.state,
            request,
            judge,
            depth_limit=depth_limit or self.config.depth_limit,
            on_judged=on_judged,
        )
        self._event(TRACE_COMPLETED, {"trace": result.to_dict()})
        self.emit("TraceResult", {"trace": result.to_dict()})
        return result
