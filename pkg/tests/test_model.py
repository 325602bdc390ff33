"""Context-model state machine: appends, milestones, sessions, graph."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    drive_script,
    oracle_dependency_edges,
    oracle_milestone,
    oracle_session_partition,
    random_script,
)
from dossier.model import (
    ActionKind,
    Actor,
    DanglingDependency,
    InformationUnit,
    MissingProduct,
    OrdinalMismatch,
    ProductKindMismatch,
    ResearchAction,
    RunFinished,
    RunState,
    UnexpectedProduct,
    UnitKind,
    UnknownAction,
    append_action,
    close_and_open_session,
    dependency_predecessors,
    derive_milestone,
)


def mk_action(state: RunState, kind: ActionKind, depends_on=None, params=None) -> ResearchAction:
    return ResearchAction(
        id=len(state.actions),
        kind=kind,
        actor=Actor.USER if kind in (ActionKind.USER_MESSAGE, ActionKind.USER_INTERRUPT) else Actor.AGENT,
        parameters=params or {},
        depends_on=list(depends_on or []),
    )


def mk_unit(state: RunState, kind: UnitKind, body="body") -> InformationUnit:
    return InformationUnit(
        id=len(state.units),
        kind=kind,
        title=f"unit {len(state.units)}",
        body=body,
        producer_action_id=len(state.actions),
    )


def seed_user_message(state: RunState) -> None:
    append_action(state, mk_action(state, ActionKind.USER_MESSAGE, params={"text": "go"}),
                  mk_unit(state, UnitKind.USER))


class TestAppendAction:
    def test_first_user_message_opens_session(self):
        state = RunState()
        seed_user_message(state)
        assert len(state.actions) == 1
        assert len(state.units) == 1
        assert len(state.sessions) == 1
        assert state.sessions[0].start_action_id == 0
        assert state.sessions[0].open

    def test_web_search_adds_sequence_edge_only(self):
        state = RunState()
        seed_user_message(state)
        append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "a"}),
                      mk_unit(state, UnitKind.SEARCH))
        append_action(state, mk_action(state, ActionKind.SCRAPE_WEBPAGE, params={"url": "u"}),
                      mk_unit(state, UnitKind.SOURCE))
        append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "yc w26 list"}),
                      mk_unit(state, UnitKind.SEARCH))
        assert len(state.actions) == 4
        assert (2, 3) in state.graph.sequence_edges
        assert all(c != 3 for (_, c) in state.graph.dependency_edges)

    def test_note_dependency_edges_match_bruteforce(self):
        state = RunState()
        seed_user_message(state)
        for _ in range(3):
            append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"}),
                          mk_unit(state, UnitKind.SEARCH))
        append_action(state, mk_action(state, ActionKind.CREATE_NOTE, depends_on=[1, 3]),
                      mk_unit(state, UnitKind.PROCESSED))
        expected = oracle_dependency_edges(
            [a.to_dict() for a in state.actions],
            {u.id: u.producer_action_id for u in state.units},
        )
        assert sorted(state.graph.dependency_edges) == sorted(expected)

    def test_ordinal_gap_rejected(self):
        state = RunState()
        seed_user_message(state)
        action = mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"})
        action.id = 5
        with pytest.raises(OrdinalMismatch):
            append_action(state, action, mk_unit(state, UnitKind.SEARCH))

    def test_dangling_dependency_rejected(self):
        state = RunState()
        seed_user_message(state)
        with pytest.raises(DanglingDependency):
            append_action(state, mk_action(state, ActionKind.CREATE_NOTE, depends_on=[9]),
                          mk_unit(state, UnitKind.PROCESSED))

    def test_product_presence_rules(self):
        state = RunState()
        seed_user_message(state)
        with pytest.raises(MissingProduct):
            append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"}), None)
        with pytest.raises(UnexpectedProduct):
            append_action(state, mk_action(state, ActionKind.FINISH), mk_unit(state, UnitKind.USER))

    def test_product_kind_must_match_category(self):
        state = RunState()
        seed_user_message(state)
        with pytest.raises(ProductKindMismatch):
            append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"}),
                          mk_unit(state, UnitKind.SOURCE))

    def test_nothing_appends_after_finish(self):
        state = RunState()
        seed_user_message(state)
        append_action(state, mk_action(state, ActionKind.FINISH), None)
        with pytest.raises(RunFinished):
            append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"}),
                          mk_unit(state, UnitKind.SEARCH))

    def test_actor_must_match_category(self):
        from dossier.model import ModelError

        state = RunState()
        seed_user_message(state)
        bad = mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"})
        bad.actor = Actor.USER
        with pytest.raises(ModelError):
            append_action(state, bad, mk_unit(state, UnitKind.SEARCH))
        bad2 = mk_action(state, ActionKind.USER_MESSAGE, params={"text": "t"})
        bad2.actor = Actor.AGENT
        with pytest.raises(ModelError):
            append_action(state, bad2, mk_unit(state, UnitKind.USER))

    def test_duplicate_depends_on_deduped(self):
        state = RunState()
        seed_user_message(state)
        outcome = append_action(
            state, mk_action(state, ActionKind.CREATE_NOTE, depends_on=[0, 0]),
            mk_unit(state, UnitKind.PROCESSED),
        )
        assert outcome.action.depends_on == [0]
        assert state.graph.dependency_edges.count((0, 1)) == 1


class TestMilestoneRule:
    # the full 6-kind x flag table
    @pytest.mark.parametrize(
        "kind,params,expected",
        [
            (ActionKind.USER_MESSAGE, {}, True),
            (ActionKind.USER_INTERRUPT, {}, True),
            (ActionKind.WEB_SEARCH, {}, False),
            (ActionKind.SCRAPE_WEBPAGE, {}, False),
            (ActionKind.CREATE_NOTE, {"progress_summary": False}, False),
            (ActionKind.CREATE_NOTE, {"progress_summary": True}, True),
            (ActionKind.FINISH, {}, True),
        ],
    )
    def test_milestone_table(self, kind, params, expected):
        action = ResearchAction(id=0, kind=kind, actor=Actor.AGENT, parameters=params)
        assert derive_milestone(action) is expected
        assert oracle_milestone(kind, params) is expected


class TestSessions:
    def test_summary_note_closes_and_opens(self):
        # [user_message, web_search, scrape, create_note(summary)]
        script = [
            {"kind": ActionKind.USER_MESSAGE, "parameters": {"text": "go"}},
            {"kind": ActionKind.WEB_SEARCH, "parameters": {"query": "q"}},
            {"kind": ActionKind.SCRAPE_WEBPAGE, "parameters": {"url": "u"}},
            {"kind": ActionKind.CREATE_NOTE, "parameters": {"progress_summary": True}, "depends_on": [1, 2]},
        ]
        state = drive_script(script).state
        assert [(s.start_action_id, s.end_action_id) for s in state.sessions] == [(0, 3), (3, None)]

    def test_single_message_single_open_session(self):
        state = drive_script([{"kind": ActionKind.USER_MESSAGE, "parameters": {"text": "go"}}]).state
        assert [(s.start_action_id, s.end_action_id) for s in state.sessions] == [(0, None)]

    def test_finish_closes_without_opening(self):
        script = [
            {"kind": ActionKind.USER_MESSAGE, "parameters": {"text": "go"}},
            {"kind": ActionKind.WEB_SEARCH, "parameters": {"query": "q"}},
            {"kind": ActionKind.FINISH, "parameters": {}},
        ]
        state = drive_script(script).state
        assert [(s.start_action_id, s.end_action_id) for s in state.sessions] == [(0, 2)]
        assert state.open_session is None

    def test_close_and_open_rejects_non_milestone(self):
        state = RunState()
        seed_user_message(state)
        append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"}),
                      mk_unit(state, UnitKind.SEARCH))
        from dossier.model import NotAMilestone

        with pytest.raises(NotAMilestone):
            close_and_open_session(state, 1)

    def test_partition_matches_oracle_on_random_runs(self):
        rng = random.Random(7)
        for _ in range(50):
            result = drive_script(random_script(rng, max_actions=60))
            got = [(s.start_action_id, s.end_action_id) for s in result.state.sessions]
            assert got == oracle_session_partition(result.run_log)


class TestDependencyPredecessors:
    def test_empty_depends_on(self):
        state = RunState()
        seed_user_message(state)
        assert dependency_predecessors(state.graph, 0) == []

    def test_note_citing_two_actions(self):
        state = RunState()
        seed_user_message(state)
        for _ in range(4):
            append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "q"}),
                          mk_unit(state, UnitKind.SEARCH))
        append_action(state, mk_action(state, ActionKind.CREATE_NOTE, depends_on=[2, 4]),
                      mk_unit(state, UnitKind.PROCESSED))
        assert dependency_predecessors(state.graph, 5) == [2, 4]

    def test_diamond(self):
        # search S; note A cites S; note B cites S; note C cites A and B
        state = RunState()
        seed_user_message(state)
        append_action(state, mk_action(state, ActionKind.WEB_SEARCH, params={"query": "s"}),
                      mk_unit(state, UnitKind.SEARCH))  # action 1 -> unit 1
        append_action(state, mk_action(state, ActionKind.CREATE_NOTE, depends_on=[1]),
                      mk_unit(state, UnitKind.PROCESSED))  # action 2 -> unit 2 (A)
        append_action(state, mk_action(state, ActionKind.CREATE_NOTE, depends_on=[1]),
                      mk_unit(state, UnitKind.PROCESSED))  # action 3 -> unit 3 (B)
        append_action(state, mk_action(state, ActionKind.CREATE_NOTE, depends_on=[2, 3]),
                      mk_unit(state, UnitKind.PROCESSED))  # action 4 (C)
        assert dependency_predecessors(state.graph, 4) == [2, 3]
        assert dependency_predecessors(state.graph, 2) == [1]
        assert dependency_predecessors(state.graph, 3) == [1]

    def test_unknown_action(self):
        state = RunState()
        with pytest.raises(UnknownAction):
            dependency_predecessors(state.graph, 0)


class TestInvariants:
    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_random_runs_hold_core_invariants(self, seed):
        rng = random.Random(seed)
        result = drive_script(random_script(rng, max_actions=40))
        state = result.state
        # product bijection
        non_admin = [a for a in state.actions if a.kind is not ActionKind.FINISH]
        assert len(non_admin) == len(state.units)
        producers = [u.producer_action_id for u in state.units]
        assert sorted(producers) == sorted(a.id for a in non_admin)
        # topological consistency
        for p, c in state.graph.dependency_edges:
            assert p < c
        # sequence edges form the single path over all nodes
        assert state.graph.sequence_edges == [(i - 1, i) for i in range(1, len(state.actions))]
        # unit ids strictly increase
        assert [u.id for u in state.units] == list(range(len(state.units)))
        # session ranges tile the actions with shared boundaries
        got = [(s.start_action_id, s.end_action_id) for s in state.sessions]
        assert got == oracle_session_partition(result.run_log)

    def test_rounds_since_milestone(self):
        script = [
            {"kind": ActionKind.USER_MESSAGE, "parameters": {"text": "go"}},
            {"kind": ActionKind.WEB_SEARCH, "parameters": {"query": "a"}},
            {"kind": ActionKind.WEB_SEARCH, "parameters": {"query": "b"}},
        ]
        state = drive_script(script).state
        assert state.rounds_since_milestone == 2
