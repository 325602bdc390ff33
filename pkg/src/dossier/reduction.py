"""Context reduction and agent-facing context rendering.

Two reduction rules keep the rendered context from exhausting the model
window: after every note, earlier search/source bodies are replaced by pointer
stubs; when a new session opens, everything not produced by a milestone is
stubbed. Reduction only flips flags — the store always keeps full bodies, and
``read_information`` dereferences a stub back to its full text.

Token estimation is deliberately crude and fixed: ``len(text) // 4`` per
block. It is documented, deterministic, and model-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import (
    ActionKind,
    InformationUnit,
    ModelError,
    RunState,
    UnitKind,
)


class WrongTrigger(ModelError):
    pass


class NoOpenSession(ModelError):
    pass


STUB_NOTICE = "body elided; full text available via read_information({id})"


@dataclass
class PointerStub:
    """Dereferenceable stand-in for a minimized unit's body."""

    unit_id: int
    kind: UnitKind
    title: str
    source_locator: Optional[str] = None

    def render(self) -> str:
        # Field order is part of the wire contract: kind, id, title, locator, notice.
        parts = [f'[minimized {self.kind.value} #{self.unit_id} "{self.title}"']
        if self.source_locator:
            parts.append(f'locator="{self.source_locator}"')
        parts.append(STUB_NOTICE.format(id=self.unit_id) + "]")
        return " ".join(parts)


@dataclass
class ContextBlock:
    kind: str  # narration_before | narration_after | full | stub | directive | transient | error
    ref_id: int
    text: str

    @property
    def token_estimate(self) -> int:
        return len(self.text) // 4


@dataclass
class RenderedContext:
    """Ordered context blocks plus a deterministic size estimate."""

    blocks: list[ContextBlock] = field(default_factory=list)
    token_estimate: int = 0
    budget: int = 0
    over_budget: bool = False

    def to_text(self) -> str:
        return "\n\n".join(block.text for block in self.blocks)


def render_unit_block(unit: InformationUnit) -> ContextBlock:
    if unit.minimized:
        stub = PointerStub(
            unit_id=unit.id,
            kind=unit.kind,
            title=unit.title,
            source_locator=unit.source_locator,
        )
        return ContextBlock(kind="stub", ref_id=unit.id, text=stub.render())
    header = f'[information #{unit.id} {unit.kind.value} "{unit.title}"'
    if unit.source_locator:
        header += f' locator="{unit.source_locator}"'
    header += "]"
    return ContextBlock(kind="full", ref_id=unit.id, text=f"{header}\n{unit.body}")


def render_context(
    state: RunState,
    budget: int,
    extra_blocks: Optional[list[ContextBlock]] = None,
) -> RenderedContext:
    """Render the agent-facing context in ordinal order.

    Per action: narration_before, then the produced unit (full body or stub),
    then narration_after. ``extra_blocks`` (directives, transient reads, error
    notes) are appended at the end. If the estimate exceeds ``budget`` the
    context is returned anyway with ``over_budget`` set — reduction, not
    truncation, is the mechanism that keeps context small.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    units_by_producer = {u.producer_action_id: u for u in state.units}
    blocks: list[ContextBlock] = []
    for action in state.actions:
        if action.narration_before:
            blocks.append(
                ContextBlock(
                    kind="narration_before",
                    ref_id=action.id,
                    text=f"(action {action.id} {action.kind.value}) {action.narration_before}",
                )
            )
        unit = units_by_producer.get(action.id)
        if unit is not None:
            blocks.append(render_unit_block(unit))
        if action.narration_after:
            blocks.append(
                ContextBlock(
                    kind="narration_after",
                    ref_id=action.id,
                    text=f"(after action {action.id}) {action.narration_after}",
                )
            )
    if extra_blocks:
        blocks.extend(extra_blocks)
    estimate = sum(block.token_estimate for block in blocks)
    return RenderedContext(
        blocks=blocks,
        token_estimate=estimate,
        budget=budget,
        over_budget=estimate > budget,
    )


def post_process_minimization_ids(state: RunState) -> list[int]:
    """Units the post-note rule newly minimizes: earlier search/source bodies."""
    last = state.actions[-1]
    note_unit = state.unit_for_action(last.id)
    assert note_unit is not None
    return [
        u.id
        for u in state.units
        if u.id < note_unit.id
        and not u.minimized
        and u.kind in (UnitKind.SEARCH, UnitKind.SOURCE)
    ]


def apply_post_process_reduction(state: RunState) -> list[int]:
    """Minimize search/source units older than the note just created.

    Must be invoked immediately after a create-note action; returns the ids
    newly minimized (possibly empty).
    """
    if not state.actions or state.actions[-1].kind is not ActionKind.CREATE_NOTE:
        raise WrongTrigger("post-process reduction requires the latest action to be a note")
    ids = post_process_minimization_ids(state)
    state.set_minimized(ids)
    return ids


def session_boundary_minimization_ids(state: RunState) -> list[int]:
    """Units the session-boundary rule newly minimizes: all non-milestone products."""
    return [
        u.id
        for u in state.units
        if not u.minimized and not state.actions[u.producer_action_id].is_milestone
    ]


def apply_session_boundary_reduction(state: RunState) -> list[int]:
    """Minimize everything not produced by a milestone once a new session opens."""
    if state.open_session is None:
        raise NoOpenSession("session-boundary reduction requires an open session")
    ids = session_boundary_minimization_ids(state)
    state.set_minimized(ids)
    return ids


def read_information(state: RunState, unit_id: int) -> str:
    """Dereference a unit to its stored full body, minimized or not.

    Exposed to the agent as a tool; the result enters context as a transient
    block for the current step only and is never recorded as a new unit.
    """
    return state.unit(unit_id).body
