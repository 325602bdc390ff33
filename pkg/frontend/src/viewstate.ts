/** UI-side state shared by the three coordinated views.
 *
 * Exactly one action can be focused at a time; node expansion defaults to
 * milestones plus the focused node, with explicit user toggles on top; trace
 * overlays are temporary until retained. All linkage data (focus bundles,
 * trace results) comes from the server: the UI does no graph computation.
 */

import { FocusBundle, TracePayload } from "./protocol.js";

export interface RefChip {
  unitId: number;
  start: number;
  end: number;
  quote: string;
}

export interface OverlayNode {
  id: string;
  unitId: number;
  anchorActionId: number; // producer of the supporting unit
  parentId: string | null; // overlay node this evidence supports (null = selected claim)
  quote: string;
  terminal: string | null;
}

export interface TraceOverlay {
  id: string;
  rootUnitId: number;
  nodes: OverlayNode[];
  retained: boolean;
}

export interface ViewState {
  focusedActionId: number | null;
  lastBundle: FocusBundle | null;
  expandOverrides: Record<number, boolean>;
  overlays: TraceOverlay[];
  hoveredCitationUnit: number | null;
  composerDraft: string;
  composerRefs: RefChip[];
  followLatest: boolean;
}

export function emptyViewState(): ViewState {
  return {
    focusedActionId: null,
    lastBundle: null,
    expandOverrides: {},
    overlays: [],
    hoveredCitationUnit: null,
    composerDraft: "",
    composerRefs: [],
    followLatest: false,
  };
}

/** expanded = milestones ∪ {focused} ∪ user-toggled (overrides win). */
export function isExpanded(
  state: ViewState,
  actionId: number,
  isMilestone: boolean
): boolean {
  const override = state.expandOverrides[actionId];
  if (override !== undefined) return override;
  return isMilestone || state.focusedActionId === actionId;
}

export function toggleExpand(state: ViewState, actionId: number, isMilestone: boolean): ViewState {
  state.expandOverrides[actionId] = !isExpanded(state, actionId, isMilestone);
  return state;
}

let overlayCounter = 0;

/** Materialize a trace result as temporary overlay nodes (one per finding). */
export function addTraceOverlay(
  state: ViewState,
  trace: TracePayload,
  producerOf: (unitId: number) => number
): TraceOverlay {
  const overlayId = `trace-${overlayCounter++}`;
  const nodes: OverlayNode[] = trace.nodes
    .filter((n) => n.parent >= 0) // index 0 is the selected claim, not a finding
    .map((n) => ({
      id: `${overlayId}-n${n.index}`,
      unitId: n.unit_id,
      anchorActionId: producerOf(n.unit_id),
      parentId: n.parent === 0 ? null : `${overlayId}-n${n.parent}`,
      quote: n.quote,
      terminal: n.terminal,
    }));
  const overlay: TraceOverlay = {
    id: overlayId,
    rootUnitId: trace.root.unit_id,
    nodes,
    retained: false,
  };
  state.overlays.push(overlay);
  return overlay;
}

export function retainOverlay(state: ViewState, overlayId: string): ViewState {
  const overlay = state.overlays.find((o) => o.id === overlayId);
  if (overlay) overlay.retained = true;
  return state;
}

/** The clear control removes every overlay the user has not retained. */
export function clearOverlays(state: ViewState): ViewState {
  state.overlays = state.overlays.filter((o) => o.retained);
  return state;
}

export function resetOverlayCounterForTests(): void {
  overlayCounter = 0;
}
