/** Cross-view linkage: focus, follow-latest, citation hover, refer-in-chat.
 *
 * Focus is driven by the server's focus bundle (the single source of truth
 * for graph neighborhoods); every view then derives its rendering from the
 * same ViewState, so the three views cannot disagree.
 */

import { FocusBundle } from "./protocol.js";
import { RunModel, latestActionId } from "./store.js";
import { RefChip, ViewState } from "./viewstate.js";

/** Focus one action everywhere (chat highlight, graph center, info card). */
export function focusAction(state: ViewState, bundle: FocusBundle): ViewState {
  state.focusedActionId = bundle.action.id; // at most one focused action
  state.lastBundle = bundle;
  return state;
}

export function clearFocus(state: ViewState): ViewState {
  state.focusedActionId = null;
  state.lastBundle = null;
  return state;
}

/** Target for the follow-latest control: the most recently completed action. */
export function followLatestTarget(model: RunModel): number | null {
  return latestActionId(model);
}

/** Producer actions highlighted while hovering a superscript citation. */
export function citationHighlightTargets(model: RunModel, unitId: number): number[] {
  const unit = model.units[unitId];
  return unit ? [unit.producer_action_id] : [];
}

export function hoverCitation(state: ViewState, unitId: number | null): ViewState {
  state.hoveredCitationUnit = unitId;
  return state;
}

/** An empty selection cannot be referenced (the button stays disabled). */
export function canRefer(start: number, end: number): boolean {
  return end > start;
}

/** Add a quoted-span chip to the composer. */
export function referInChat(
  state: ViewState,
  model: RunModel,
  unitId: number,
  start: number,
  end: number
): ViewState {
  if (!canRefer(start, end)) return state;
  const unit = model.units[unitId];
  if (!unit || start < 0 || end > unit.body.length) return state;
  state.composerRefs.push({ unitId, start, end, quote: unit.body.slice(start, end) });
  return state;
}

export function removeChip(state: ViewState, index: number): ViewState {
  state.composerRefs.splice(index, 1);
  return state;
}

/** The UserMessage payload the composer sends (chips become protocol refs). */
export function composerPayload(state: ViewState): { text: string; refs: [number, number, number][] } {
  return {
    text: state.composerDraft,
    refs: state.composerRefs.map((chip: RefChip) => [chip.unitId, chip.start, chip.end]),
  };
}

export function clearComposer(state: ViewState): ViewState {
  state.composerDraft = "";
  state.composerRefs = [];
  return state;
}
