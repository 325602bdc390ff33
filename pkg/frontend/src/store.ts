/** Event application: folds the ordered protocol stream into a run model.
 *
 * The model is a pure function of the applied event prefix: replaying the
 * same messages yields an identical model (snapshot-tested against a golden
 * stream). Duplicate deliveries are dropped by sequence number.
 */

import {
  ActionRecord,
  ProtocolMessage,
  RunStatus,
  TracePayload,
  UnitRecord,
} from "./protocol.js";

export interface SessionRecord {
  id: number;
  startActionId: number;
  endActionId: number | null;
}

export interface PendingAction {
  actionId: number;
  kind: string;
  actor: string;
  parameters: Record<string, unknown>;
  narrationBefore: string;
}

export interface RunModel {
  runId: string;
  lastSeq: number;
  status: RunStatus;
  actions: ActionRecord[];
  units: UnitRecord[];
  sessions: SessionRecord[];
  pending: PendingAction | null;
  traces: TracePayload[];
  traceProgress: number; // judged candidates of the trace in flight
  errors: { code: string; message: string }[];
}

export function emptyModel(runId = ""): RunModel {
  return {
    runId,
    lastSeq: -1,
    status: "idle",
    actions: [],
    units: [],
    sessions: [],
    pending: null,
    traces: [],
    traceProgress: 0,
    errors: [],
  };
}

export function applyMessage(model: RunModel, msg: ProtocolMessage): RunModel {
  if (msg.seq !== null) {
    if (msg.seq <= model.lastSeq) return model; // at-least-once delivery: dedup
    model.lastSeq = msg.seq;
  }
  if (!model.runId) model.runId = msg.run_id;
  const p = msg.payload as any;
  switch (msg.kind) {
    case "ActionStarted":
      // narration accumulates from NarrationDelta messages; the completed
      // record later replaces the whole pending entry
      model.pending = {
        actionId: p.action_id,
        kind: p.kind,
        actor: p.actor,
        parameters: p.parameters ?? {},
        narrationBefore: "",
      };
      break;
    case "NarrationDelta": {
      const action = model.actions[p.action_id];
      if (action) {
        if (p.field === "narration_after") action.narration_after += p.text;
        else action.narration_before += p.text;
      } else if (model.pending && model.pending.actionId === p.action_id && p.field === "narration_before") {
        model.pending.narrationBefore += p.text;
      }
      break;
    }
    case "ActionCompleted":
      model.actions[p.action.id] = p.action;
      if (model.pending && model.pending.actionId === p.action.id) model.pending = null;
      break;
    case "UnitCreated":
      model.units[p.unit.id] = p.unit;
      break;
    case "MinimizationApplied":
      for (const unitId of p.unit_ids as number[]) {
        const unit = model.units[unitId];
        if (unit) unit.minimized = true;
      }
      break;
    case "SessionBoundary":
      if (p.closed_session_id !== null && model.sessions[p.closed_session_id]) {
        model.sessions[p.closed_session_id].endActionId = p.closed_end_action_id;
      }
      if (p.opened_session_id !== null) {
        model.sessions[p.opened_session_id] = {
          id: p.opened_session_id,
          startActionId: p.opened_start_action_id,
          endActionId: null,
        };
      }
      break;
    case "StatusChanged":
      model.status = p.status;
      break;
    case "TraceProgress":
      model.traceProgress += 1;
      break;
    case "TraceResult":
      model.traces.push(p.trace);
      model.traceProgress = 0;
      break;
    case "Error":
      model.errors.push({ code: p.code, message: p.message });
      break;
  }
  return model;
}

export function applyStream(model: RunModel, messages: ProtocolMessage[]): RunModel {
  for (const msg of messages) applyMessage(model, msg);
  return model;
}

/** The most recently completed action, for the follow-latest control. */
export function latestActionId(model: RunModel): number | null {
  return model.actions.length ? model.actions.length - 1 : null;
}
