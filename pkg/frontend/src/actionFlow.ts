/** Chat-style view model: the action flow with session spans down the left edge. */

import { ActionColor, ActionKind, actionColor } from "./protocol.js";
import { RunModel, SessionRecord } from "./store.js";
import { ViewState } from "./viewstate.js";

export interface FlowItem {
  actionId: number;
  kind: ActionKind | string;
  actor: string;
  color: ActionColor;
  summary: string;
  narrationBefore: string;
  narrationAfter: string;
  isMilestone: boolean;
  focused: boolean;
  inFlight: boolean;
}

export interface ActionFlowView {
  items: FlowItem[];
  sessions: SessionRecord[];
  stopVisible: boolean;
  focusedActionId: number | null;
}

export function actionSummary(kind: string, parameters: Record<string, unknown>): string {
  switch (kind) {
    case "web_search":
      return `search: ${parameters.query ?? ""}`;
    case "scrape_webpage":
      return `scrape: ${parameters.url ?? ""}`;
    case "create_note":
      return `note: ${parameters.title ?? ""}${parameters.progress_summary ? " (progress summary)" : ""}`;
    case "user_message":
      return `user: ${parameters.text ?? ""}`;
    case "user_interrupt":
      return "user interrupt";
    case "finish":
      return "finish";
    default:
      return kind;
  }
}

export function renderActionFlow(model: RunModel, state: ViewState): ActionFlowView {
  const items: FlowItem[] = model.actions.map((action) => ({
    actionId: action.id,
    kind: action.kind,
    actor: action.actor,
    color: actionColor(action.kind),
    summary: actionSummary(action.kind, action.parameters),
    narrationBefore: action.narration_before,
    narrationAfter: action.narration_after,
    isMilestone: action.is_milestone,
    focused: state.focusedActionId === action.id,
    inFlight: false,
  }));
  if (model.pending) {
    items.push({
      actionId: model.pending.actionId,
      kind: model.pending.kind,
      actor: model.pending.actor,
      color: actionColor(model.pending.kind as ActionKind),
      summary: actionSummary(model.pending.kind, model.pending.parameters),
      narrationBefore: model.pending.narrationBefore,
      narrationAfter: "",
      isMilestone: false,
      focused: false,
      inFlight: true,
    });
  }
  return {
    items,
    sessions: model.sessions.map((s) => ({ ...s })),
    stopVisible: model.status === "running",
    focusedActionId: state.focusedActionId,
  };
}
