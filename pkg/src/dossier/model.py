"""Core state machine for a research run.

Holds the canonical in-memory representation: information units, research
actions, sessions, and the action dependency graph. All growth is append-only;
every non-administrative action produces exactly one information unit, and
milestone actions tile the action sequence into sessions that share their
boundary milestones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

MAX_TITLE_LEN = 120


class ActionKind(str, Enum):
    USER_MESSAGE = "user_message"
    USER_INTERRUPT = "user_interrupt"
    WEB_SEARCH = "web_search"
    SCRAPE_WEBPAGE = "scrape_webpage"
    CREATE_NOTE = "create_note"
    FINISH = "finish"


class ActionCategory(str, Enum):
    USER = "user_information"
    SEARCH = "search_information"
    SOURCE = "source_information"
    PROCESSED = "processed_information"
    ADMINISTRATIVE = "administrative"


class UnitKind(str, Enum):
    USER = "user"
    SEARCH = "search"
    SOURCE = "source"
    PROCESSED = "processed"


class Actor(str, Enum):
    AGENT = "agent"
    USER = "user"


class RunStatus(str, Enum):
    IDLE = "idle"
    RUNNING = "running"
    AWAITING_USER = "awaiting_user"
    FINISHED = "finished"


CATEGORY_BY_KIND: dict[ActionKind, ActionCategory] = {
    ActionKind.USER_MESSAGE: ActionCategory.USER,
    ActionKind.USER_INTERRUPT: ActionCategory.USER,
    ActionKind.WEB_SEARCH: ActionCategory.SEARCH,
    ActionKind.SCRAPE_WEBPAGE: ActionCategory.SOURCE,
    ActionKind.CREATE_NOTE: ActionCategory.PROCESSED,
    ActionKind.FINISH: ActionCategory.ADMINISTRATIVE,
}

UNIT_KIND_BY_CATEGORY: dict[ActionCategory, UnitKind] = {
    ActionCategory.USER: UnitKind.USER,
    ActionCategory.SEARCH: UnitKind.SEARCH,
    ActionCategory.SOURCE: UnitKind.SOURCE,
    ActionCategory.PROCESSED: UnitKind.PROCESSED,
}


class ModelError(Exception):
    """Base class for state-machine violations."""


class OrdinalMismatch(ModelError):
    pass


class DanglingDependency(ModelError):
    pass


class MissingProduct(ModelError):
    pass


class UnexpectedProduct(ModelError):
    pass


class ProductKindMismatch(ModelError):
    pass


class NotAMilestone(ModelError):
    pass


class UnknownAction(ModelError):
    pass


class UnknownUnit(ModelError):
    pass


class RunFinished(ModelError):
    pass


@dataclass
class InformationUnit:
    """One atomic piece of accumulated research information.

    The full body is retained for the lifetime of the run; ``minimized`` only
    controls whether the body is elided from the rendered agent context.
    """

    id: int
    kind: UnitKind
    title: str
    body: str
    producer_action_id: int
    minimized: bool = False
    source_locator: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "title": self.title,
            "body": self.body,
            "producer_action_id": self.producer_action_id,
            "minimized": self.minimized,
            "source_locator": self.source_locator,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InformationUnit":
        return cls(
            id=d["id"],
            kind=UnitKind(d["kind"]),
            title=d["title"],
            body=d["body"],
            producer_action_id=d["producer_action_id"],
            minimized=d.get("minimized", False),
            source_locator=d.get("source_locator"),
        )


@dataclass
class ResearchAction:
    """A typed operation by the agent or the user.

    ``id`` is the ordinal position in the run's action sequence and doubles as
    the action's logical timestamp; ``recorded_at`` is informational only.
    """

    id: int
    kind: ActionKind
    actor: Actor
    parameters: dict[str, Any] = field(default_factory=dict)
    narration_before: str = ""
    narration_after: str = ""
    depends_on: list[int] = field(default_factory=list)
    is_milestone: bool = False
    warnings: list[str] = field(default_factory=list)
    recorded_at: float = 0.0

    @property
    def category(self) -> ActionCategory:
        return CATEGORY_BY_KIND[self.kind]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "actor": self.actor.value,
            "parameters": self.parameters,
            "narration_before": self.narration_before,
            "narration_after": self.narration_after,
            "depends_on": list(self.depends_on),
            "is_milestone": self.is_milestone,
            "warnings": list(self.warnings),
            "recorded_at": self.recorded_at,
            "category": self.category.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ResearchAction":
        return cls(
            id=d["id"],
            kind=ActionKind(d["kind"]),
            actor=Actor(d["actor"]),
            parameters=d.get("parameters", {}),
            narration_before=d.get("narration_before", ""),
            narration_after=d.get("narration_after", ""),
            depends_on=list(d.get("depends_on", [])),
            is_milestone=d.get("is_milestone", False),
            warnings=list(d.get("warnings", [])),
            recorded_at=d.get("recorded_at", 0.0),
        )


def derive_milestone(action: ResearchAction) -> bool:
    """Milestone rule: user actions, administrative actions, and progress-summary notes."""
    category = action.category
    if category in (ActionCategory.USER, ActionCategory.ADMINISTRATIVE):
        return True
    if action.kind is ActionKind.CREATE_NOTE:
        return bool(action.parameters.get("progress_summary", False))
    return False


@dataclass
class ResearchSession:
    """A contiguous milestone-bounded range of actions.

    ``end_action_id`` is None while the session is open. Adjacent sessions
    share their boundary milestone.
    """

    id: int
    start_action_id: int
    end_action_id: Optional[int] = None

    @property
    def open(self) -> bool:
        return self.end_action_id is None

    def action_ids(self, last_action_id: int) -> list[int]:
        """Inclusive action range; open sessions run through the latest action."""
        end = self.end_action_id if self.end_action_id is not None else last_action_id
        return list(range(self.start_action_id, end + 1))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "start_action_id": self.start_action_id,
            "end_action_id": self.end_action_id,
        }


@dataclass
class ActionDependencyGraph:
    """DAG over actions: a chronological path plus information-dependency edges."""

    nodes: list[int] = field(default_factory=list)
    sequence_edges: list[tuple[int, int]] = field(default_factory=list)
    dependency_edges: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": list(self.nodes),
            "sequence_edges": [list(e) for e in self.sequence_edges],
            "dependency_edges": [list(e) for e in self.dependency_edges],
        }


def dependency_predecessors(graph: ActionDependencyGraph, action_id: int) -> list[int]:
    """Producer actions of everything this action consumed, ascending ordinal."""
    if action_id not in graph.nodes:
        raise UnknownAction(f"action {action_id} not in graph")
    return sorted({p for (p, c) in graph.dependency_edges if c == action_id})


def dependency_successors(graph: ActionDependencyGraph, action_id: int) -> list[int]:
    """Actions that consumed this action's product, ascending ordinal."""
    if action_id not in graph.nodes:
        raise UnknownAction(f"action {action_id} not in graph")
    return sorted({c for (p, c) in graph.dependency_edges if p == action_id})


@dataclass
class SessionTransition:
    """Session bookkeeping triggered by one milestone append."""

    closed_session_id: Optional[int] = None
    closed_end_action_id: Optional[int] = None
    opened_session_id: Optional[int] = None
    opened_start_action_id: Optional[int] = None


@dataclass
class AppendOutcome:
    action: ResearchAction
    unit: Optional[InformationUnit]
    transition: Optional[SessionTransition]


@dataclass
class RunState:
    """Mutable run state. Mutations are single-writer; reads may snapshot freely."""

    actions: list[ResearchAction] = field(default_factory=list)
    units: list[InformationUnit] = field(default_factory=list)
    sessions: list[ResearchSession] = field(default_factory=list)
    graph: ActionDependencyGraph = field(default_factory=ActionDependencyGraph)
    status: RunStatus = RunStatus.IDLE
    interrupt_flag: bool = False

    @property
    def rounds_since_milestone(self) -> int:
        """Actions executed since the most recent milestone (0 if none yet)."""
        for action in reversed(self.actions):
            if action.is_milestone:
                return len(self.actions) - 1 - action.id
        return len(self.actions)

    @property
    def open_session(self) -> Optional[ResearchSession]:
        if self.sessions and self.sessions[-1].open:
            return self.sessions[-1]
        return None

    def action(self, action_id: int) -> ResearchAction:
        if not 0 <= action_id < len(self.actions):
            raise UnknownAction(f"no action {action_id}")
        return self.actions[action_id]

    def unit(self, unit_id: int) -> InformationUnit:
        if not 0 <= unit_id < len(self.units):
            raise UnknownUnit(f"no information unit {unit_id}")
        return self.units[unit_id]

    def unit_for_action(self, action_id: int) -> Optional[InformationUnit]:
        for u in self.units:
            if u.producer_action_id == action_id:
                return u
        return None

    # -- low-level transitions (shared by live ops and event replay) --------

    def insert_action(self, action: ResearchAction, narration_for_previous: str = "") -> None:
        if action.id != len(self.actions):
            raise OrdinalMismatch(
                f"action id {action.id} != next ordinal {len(self.actions)}"
            )
        if narration_for_previous and self.actions:
            self.actions[-1].narration_after = narration_for_previous
        self.actions.append(action)
        self.graph.nodes.append(action.id)
        if action.id > 0:
            self.graph.sequence_edges.append((action.id - 1, action.id))
        for unit_id in action.depends_on:
            producer = self.units[unit_id].producer_action_id
            self.graph.dependency_edges.append((producer, action.id))

    def insert_unit(self, unit: InformationUnit) -> None:
        if unit.id != len(self.units):
            raise OrdinalMismatch(f"unit id {unit.id} != next ordinal {len(self.units)}")
        if len(unit.title) > MAX_TITLE_LEN:
            raise ValueError(f"unit title longer than {MAX_TITLE_LEN} characters")
        self.units.append(unit)

    def close_session(self, session_id: int, end_action_id: int) -> None:
        session = self.sessions[session_id]
        if not session.open:
            raise ModelError(f"session {session_id} already closed")
        session.end_action_id = end_action_id

    def open_new_session(self, session_id: int, start_action_id: int) -> None:
        if session_id != len(self.sessions):
            raise OrdinalMismatch(f"session id {session_id} != next index {len(self.sessions)}")
        self.sessions.append(ResearchSession(id=session_id, start_action_id=start_action_id))

    def set_minimized(self, unit_ids: list[int]) -> None:
        for unit_id in unit_ids:
            self.unit(unit_id).minimized = True

    def set_status(self, status: RunStatus) -> None:
        self.status = status

    # -- canonical serialization --------------------------------------------

    def to_canonical_dict(self) -> dict[str, Any]:
        return {
            "actions": [a.to_dict() for a in self.actions],
            "units": [u.to_dict() for u in self.units],
            "sessions": [s.to_dict() for s in self.sessions],
            "graph": self.graph.to_dict(),
            "status": self.status.value,
        }

    @classmethod
    def from_canonical_dict(cls, d: dict[str, Any]) -> "RunState":
        state = cls()
        state.actions = [ResearchAction.from_dict(a) for a in d["actions"]]
        state.units = [InformationUnit.from_dict(u) for u in d["units"]]
        state.sessions = [
            ResearchSession(id=s["id"], start_action_id=s["start_action_id"], end_action_id=s["end_action_id"])
            for s in d["sessions"]
        ]
        g = d["graph"]
        state.graph = ActionDependencyGraph(
            nodes=list(g["nodes"]),
            sequence_edges=[tuple(e) for e in g["sequence_edges"]],
            dependency_edges=[tuple(e) for e in g["dependency_edges"]],
        )
        state.status = RunStatus(d["status"])
        return state


def plan_session_transition(state: RunState, action: ResearchAction) -> Optional[SessionTransition]:
    """Compute the session bookkeeping a milestone append will cause (pure)."""
    if not state.actions and action.id == 0:
        # Very first action opens session 0 whether or not it is a milestone,
        # so sessions always tile the sequence from action 0.
        return SessionTransition(opened_session_id=0, opened_start_action_id=0)
    if not action.is_milestone:
        return None
    transition = SessionTransition()
    open_session = state.open_session
    if open_session is not None:
        transition.closed_session_id = open_session.id
        transition.closed_end_action_id = action.id
    if action.kind is not ActionKind.FINISH:
        transition.opened_session_id = len(state.sessions)
        transition.opened_start_action_id = action.id
    return transition


def append_action(
    state: RunState,
    action: ResearchAction,
    produced: Optional[InformationUnit] = None,
) -> AppendOutcome:
    """Append one action (and its product) to the run, updating graph and sessions.

    Raises OrdinalMismatch, DanglingDependency, MissingProduct,
    UnexpectedProduct, ProductKindMismatch, or RunFinished on contract
    violations; the state is untouched when an error is raised.
    """
    # Finish is terminal, so it can only ever be the last action.
    if state.actions and state.actions[-1].kind is ActionKind.FINISH:
        raise RunFinished("cannot append actions after finish")
    if action.id != len(state.actions):
        raise OrdinalMismatch(f"action id {action.id} != next ordinal {len(state.actions)}")
    seen: set[int] = set()
    deduped: list[int] = []
    for unit_id in action.depends_on:
        if not 0 <= unit_id < len(state.units):
            raise DanglingDependency(f"depends_on references unknown unit {unit_id}")
        if unit_id not in seen:
            seen.add(unit_id)
            deduped.append(unit_id)
    action.depends_on = deduped
    action.is_milestone = derive_milestone(action)

    category = action.category
    user_actor = action.actor is Actor.USER
    if user_actor != (category is ActionCategory.USER):
        raise ModelError(
            f"actor {action.actor.value} is inconsistent with category {category.value}"
        )
    if category is ActionCategory.ADMINISTRATIVE:
        if produced is not None:
            raise UnexpectedProduct("administrative actions produce no information")
    else:
        if produced is None:
            raise MissingProduct(f"{action.kind.value} must produce an information unit")
        expected = UNIT_KIND_BY_CATEGORY[category]
        if produced.kind is not expected:
            raise ProductKindMismatch(
                f"{action.kind.value} must produce a {expected.value} unit, got {produced.kind.value}"
            )
        if produced.id != len(state.units):
            raise OrdinalMismatch(f"unit id {produced.id} != next ordinal {len(state.units)}")
        if produced.producer_action_id != action.id:
            raise ModelError("produced unit must reference its producer action")

    transition = plan_session_transition(state, action)

    state.insert_action(action)
    if produced is not None:
        state.insert_unit(produced)
    if transition is not None:
        if transition.closed_session_id is not None:
            state.close_session(transition.closed_session_id, transition.closed_end_action_id)
        if transition.opened_session_id is not None:
            state.open_new_session(transition.opened_session_id, transition.opened_start_action_id)
    return AppendOutcome(action=action, unit=produced, transition=transition)


def close_and_open_session(state: RunState, milestone_action_id: int) -> SessionTransition:
    """Close the open session at a milestone and open the successor session.

    Adjacent sessions share the boundary milestone; after a finish action no
    new session is opened.
    """
    action = state.action(milestone_action_id)
    if not action.is_milestone:
        raise NotAMilestone(f"action {milestone_action_id} is not a milestone")
    transition = SessionTransition()
    open_session = state.open_session
    if open_session is not None:
        transition.closed_session_id = open_session.id
        transition.closed_end_action_id = milestone_action_id
        state.close_session(open_session.id, milestone_action_id)
    if action.kind is not ActionKind.FINISH:
        new_id = len(state.sessions)
        transition.opened_session_id = new_id
        transition.opened_start_action_id = milestone_action_id
        state.open_new_session(new_id, milestone_action_id)
    return transition
