"""dossier: a steerable deep-research engine.

Research runs are modeled as an append-only sequence of typed actions that
accumulate typed information units, grouped into milestone-bounded sessions.
Context reduction keeps the agent's rendered context bounded without losing
any stored text, and the backtrace engine traces any selected claim down to
the raw information that supports it.
"""

from .backtrace import (
    EvidenceFinding,
    TraceRequest,
    TraceResult,
    make_trace_request,
    substring_judge,
    trace,
)
from .model import (
    ActionDependencyGraph,
    ActionKind,
    Actor,
    ActionCategory,
    InformationUnit,
    ResearchAction,
    ResearchSession,
    RunState,
    RunStatus,
    UnitKind,
    append_action,
    close_and_open_session,
    dependency_predecessors,
    derive_milestone,
)
from .reduction import (
    PointerStub,
    RenderedContext,
    apply_post_process_reduction,
    apply_session_boundary_reduction,
    read_information,
    render_context,
)
from .runtime import AgentDecision, RunConfig, RunEngine, ScriptedDecisions
from .storage import RunArchive, RunEvent, canonical_json, export_report, replay
from .tools import FixtureCorpus, ScrapedPage, SearchResultList, ToolSet

__version__ = "0.1.0"

__all__ = [
    "ActionDependencyGraph",
    "ActionCategory",
    "ActionKind",
    "Actor",
    "AgentDecision",
    "EvidenceFinding",
    "FixtureCorpus",
    "InformationUnit",
    "PointerStub",
    "RenderedContext",
    "ResearchAction",
    "ResearchSession",
    "RunArchive",
    "RunConfig",
    "RunEngine",
    "RunEvent",
    "RunState",
    "RunStatus",
    "ScrapedPage",
    "ScriptedDecisions",
    "SearchResultList",
    "ToolSet",
    "TraceRequest",
    "TraceResult",
    "UnitKind",
    "append_action",
    "apply_post_process_reduction",
    "apply_session_boundary_reduction",
    "canonical_json",
    "close_and_open_session",
    "dependency_predecessors",
    "derive_milestone",
    "export_report",
    "make_trace_request",
    "read_information",
    "render_context",
    "replay",
    "substring_judge",
    "trace",
]
