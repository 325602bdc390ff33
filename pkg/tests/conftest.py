"""Shared fixtures: independent oracles, randomized run generators, golden runs.

The oracles here deliberately re-derive expected results from raw records
(action kinds, parameters, producer ids) without calling the code under test:
brute-force dependency edges, milestone/session partitions, a from-scratch
replay of both reduction rules, and a recursive ancestor-enumeration trace.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import pytest

from dossier import model
from dossier.model import (
    ActionKind,
    Actor,
    InformationUnit,
    ResearchAction,
    RunState,
    UnitKind,
    append_action,
)
from dossier.reduction import (
    apply_post_process_reduction,
    apply_session_boundary_reduction,
)
from dossier.runtime import RunConfig, RunEngine, ScriptedDecisions
from dossier.tools import FixtureCorpus, ToolSet

USER_KINDS = {ActionKind.USER_MESSAGE, ActionKind.USER_INTERRUPT}
UNIT_KIND_FOR = {
    ActionKind.USER_MESSAGE: UnitKind.USER,
    ActionKind.USER_INTERRUPT: UnitKind.USER,
    ActionKind.WEB_SEARCH: UnitKind.SEARCH,
    ActionKind.SCRAPE_WEBPAGE: UnitKind.SOURCE,
    ActionKind.CREATE_NOTE: UnitKind.PROCESSED,
}


# --------------------------------------------------------------------------
# independent oracles
# --------------------------------------------------------------------------

def oracle_milestone(kind: ActionKind, parameters: dict[str, Any]) -> bool:
    """Milestone rule re-derived from the taxonomy table, not from model code."""
    if kind in (ActionKind.USER_MESSAGE, ActionKind.USER_INTERRUPT, ActionKind.FINISH):
        return True
    if kind is ActionKind.CREATE_NOTE:
        return bool(parameters.get("progress_summary", False))
    return False


def oracle_dependency_edges(actions: list[dict[str, Any]], producer_of_unit: dict[int, int]) -> list[tuple[int, int]]:
    """Brute-force edge reconstruction from every recorded depends_on list."""
    edges = []
    for action in actions:
        for unit_id in action["depends_on"]:
            edges.append((producer_of_unit[unit_id], action["id"]))
    return edges


def oracle_session_partition(actions: list[dict[str, Any]]) -> list[tuple[int, Optional[int]]]:
    """Expected (start, end) session ranges from milestone enumeration alone."""
    if not actions:
        return []
    milestones = [a["id"] for a in actions if oracle_milestone(ActionKind(a["kind"]), a["parameters"])]
    sessions: list[tuple[int, Optional[int]]] = []
    start = 0  # the first session starts at the first action
    for m in milestones:
        if m == start:
            continue
        sessions.append((start, m))
        start = m
    if actions[-1]["kind"] == ActionKind.FINISH.value:
        return sessions  # finish closes the last session and opens nothing
    return sessions + [(start, None)]


def oracle_minimized_set(run_log: list[dict[str, Any]]) -> set[int]:
    """From-scratch replay of both reduction rules over the full event log.

    run_log records, in order, one entry per action:
    {"kind", "parameters", "unit_id" (or None), "unit_kind", "milestone"}.
    """
    minimized: set[int] = set()
    units_so_far: list[dict[str, Any]] = []  # {"id", "kind", "milestone_producer"}
    for entry in run_log:
        kind = ActionKind(entry["kind"])
        is_milestone = oracle_milestone(kind, entry["parameters"])
        if entry["unit_id"] is not None:
            units_so_far.append(
                {"id": entry["unit_id"], "kind": entry["unit_kind"], "milestone_producer": is_milestone}
            )
        if kind is ActionKind.CREATE_NOTE:
            note_id = entry["unit_id"]
            for u in units_so_far:
                if u["id"] < note_id and u["kind"] in (UnitKind.SEARCH.value, UnitKind.SOURCE.value):
                    minimized.add(u["id"])
        opens_session = is_milestone and kind is not ActionKind.FINISH
        if opens_session:
            for u in units_so_far:
                if not u["milestone_producer"]:
                    minimized.add(u["id"])
    return minimized


def oracle_trace_tree(
    units: dict[int, dict[str, Any]],
    root_unit_id: int,
    claim: str,
    judge: Callable[[str, str], Optional[tuple[int, int]]],
    depth_limit: int,
) -> tuple[list[dict[str, Any]], int]:
    """Recursive ancestor enumeration over raw unit records.

    units: {id: {"kind": str, "body": str, "depends_on": [unit ids of producer]}}.
    Returns (parent-pointer node list in the shared serialization, judged count).
    """
    nodes: list[dict[str, Any]] = []
    judged = 0

    def expand(unit_id: int, claim_text: str, depth: int, my_index: int) -> Optional[str]:
        nonlocal judged
        if units[unit_id]["kind"] != UnitKind.PROCESSED.value:
            return "raw_reached"
        if depth >= depth_limit:
            return "depth_limit"
        found = False
        for pred in sorted(set(units[unit_id]["depends_on"])):
            judged += 1
            span = judge(claim_text, units[pred]["body"])
            if span is None:
                continue
            found = True
            start, end = span
            quote = units[pred]["body"][start:end]
            index = len(nodes)
            node = {
                "index": index, "parent": my_index, "unit_id": pred,
                "start": start, "end": end, "quote": quote, "terminal": None,
            }
            nodes.append(node)
            node["terminal"] = expand(pred, quote, depth + 1, index)
        return None if found else "no_evidence_found"

    root_body = units[root_unit_id]["body"]
    at = root_body.find(claim)
    root = {
        "index": 0, "parent": -1, "unit_id": root_unit_id,
        "start": at, "end": at + len(claim), "quote": claim, "terminal": None,
    }
    nodes.append(root)
    root["terminal"] = expand(root_unit_id, claim, 0, 0)
    return nodes, judged


# --------------------------------------------------------------------------
# scripted model-level driver (mirrors the engine's documented rule order)
# --------------------------------------------------------------------------

@dataclass
class DriverResult:
    state: RunState
    run_log: list[dict[str, Any]] = field(default_factory=list)
    minimized_after_each: list[set[int]] = field(default_factory=list)


def drive_script(script: list[dict[str, Any]], body_for: Optional[Callable[[int, ActionKind], str]] = None) -> DriverResult:
    """Apply a raw action script through model + reduction ops.

    Script entries: {"kind": ActionKind, "parameters": {...}, "depends_on": [...]}.
    Order per action: append, post-process rule after notes, boundary rule when
    a session opened.
    """
    state = RunState()
    result = DriverResult(state=state)
    for entry in script:
        kind = entry["kind"]
        params = entry.get("parameters", {})
        depends = list(entry.get("depends_on", []))
        action = ResearchAction(
            id=len(state.actions),
            kind=kind,
            actor=Actor.USER if kind in USER_KINDS else Actor.AGENT,
            parameters=params,
            depends_on=depends,
        )
        unit = None
        if kind is not ActionKind.FINISH:
            unit_kind = UNIT_KIND_FOR[kind]
            body = body_for(len(state.units), kind) if body_for else f"body of unit {len(state.units)}"
            unit = InformationUnit(
                id=len(state.units),
                kind=unit_kind,
                title=f"unit {len(state.units)}",
                body=body,
                producer_action_id=action.id,
            )
        outcome = append_action(state, action, unit)
        result.run_log.append(
            {
                "kind": kind.value,
                "parameters": params,
                "unit_id": unit.id if unit else None,
                "unit_kind": unit.kind.value if unit else None,
                "milestone": action.is_milestone,
                "id": action.id,
                "depends_on": action.depends_on,
            }
        )
        if kind is ActionKind.CREATE_NOTE:
            apply_post_process_reduction(state)
        if outcome.transition and outcome.transition.opened_session_id is not None:
            apply_session_boundary_reduction(state)
        result.minimized_after_each.append({u.id for u in state.units if u.minimized})
    return result


def random_script(rng: random.Random, max_actions: int = 200) -> list[dict[str, Any]]:
    """A plausible random run: starts with a user message, may end with finish."""
    length = rng.randint(2, max_actions)
    script = [{"kind": ActionKind.USER_MESSAGE, "parameters": {"text": "start"}}]
    unit_count = 1
    while len(script) < length:
        if len(script) >= 3 and rng.random() < 0.02:
            script.append({"kind": ActionKind.FINISH, "parameters": {}})
            return script
        roll = rng.random()
        if roll < 0.32:
            script.append({"kind": ActionKind.WEB_SEARCH, "parameters": {"query": f"q{len(script)}"}})
        elif roll < 0.60:
            script.append({"kind": ActionKind.SCRAPE_WEBPAGE, "parameters": {"url": f"http://x.example/{len(script)}"}})
        elif roll < 0.82:
            cites = sorted(rng.sample(range(unit_count), k=min(unit_count, rng.randint(1, 3))))
            script.append(
                {
                    "kind": ActionKind.CREATE_NOTE,
                    "parameters": {"progress_summary": rng.random() < 0.3},
                    "depends_on": cites,
                }
            )
        elif roll < 0.93:
            script.append({"kind": ActionKind.USER_MESSAGE, "parameters": {"text": f"steer {len(script)}"}})
        else:
            script.append({"kind": ActionKind.USER_INTERRUPT, "parameters": {}})
        unit_count += 1
    return script


# --------------------------------------------------------------------------
# engine-level fixtures
# --------------------------------------------------------------------------

SKY_SENTENCE = "The western ridge trail closes after the first heavy snowfall."


def basic_corpus() -> FixtureCorpus:
    return FixtureCorpus(
        {
            "searches": {
                "ridge trail season": [
                    {"title": "Trail conditions", "url": "http://trails.example/ridge", "snippet": "seasonal closures"},
                    {"title": "Park bulletin", "url": "http://park.example/bulletin", "snippet": "2026 notices"},
                ],
            },
            "pages": {
                "http://trails.example/ridge": {
                    "text": f"Ridge trail guide. {SKY_SENTENCE} Carry microspikes in shoulder season."
                },
                "http://park.example/bulletin": {"error": "404 file not found"},
            },
        }
    )


def basic_script() -> list[dict[str, Any]]:
    return [
        {"kind": "web_search", "parameters": {"query": "ridge trail season"},
         "narration_before": "Searching for trail seasonality."},
        {"kind": "scrape_webpage", "parameters": {"url": "http://trails.example/ridge"},
         "narration_before": "Reading the trail guide.", "narration_for_previous": "Found two candidate pages."},
        {"kind": "create_note",
         "parameters": {"title": "closure summary", "body": f"{SKY_SENTENCE}[^I2]", "input_unit_ids": [2],
                        "progress_summary": True},
         "narration_before": "Summarizing the closure rule.", "narration_for_previous": "The guide has the closure rule."},
        {"kind": "finish", "parameters": {}, "narration_before": "Research complete.",
         "narration_for_previous": "Summary recorded."},
    ]


def make_engine(
    script: list[dict[str, Any]],
    corpus: Optional[FixtureCorpus] = None,
    run_id: str = "test-run",
    config: Optional[RunConfig] = None,
    archive_dir=None,
    decision_wrapper: Optional[Callable] = None,
) -> RunEngine:
    from dossier.storage import RunArchive

    corpus = corpus or basic_corpus()
    config = config or RunConfig(clock_mode="logical")
    decision_fn: Any = ScriptedDecisions(script)
    if decision_wrapper is not None:
        decision_fn = decision_wrapper(decision_fn)
    archive = RunArchive(run_id, config=config.to_dict(), directory=archive_dir)
    return RunEngine(
        run_id=run_id,
        decision_fn=decision_fn,
        tools=ToolSet.fixture(corpus),
        archive=archive,
        config=config,
    )


@pytest.fixture
def finished_engine() -> RunEngine:
    engine = make_engine(basic_script())
    engine.user_message("When does the ridge trail close?")
    engine.run()
    return engine
