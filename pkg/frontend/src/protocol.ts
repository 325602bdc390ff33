/** Wire types for the session protocol (v1). Field names match the JSON schema
 * published by the engine (src/dossier/assets/protocol.schema.json). */

export type ActionKind =
  | "user_message"
  | "user_interrupt"
  | "web_search"
  | "scrape_webpage"
  | "create_note"
  | "finish";

export type UnitKind = "user" | "search" | "source" | "processed";

export type RunStatus = "idle" | "running" | "awaiting_user" | "finished";

export interface ActionRecord {
  id: number;
  kind: ActionKind;
  actor: "agent" | "user";
  parameters: Record<string, unknown>;
  narration_before: string;
  narration_after: string;
  depends_on: number[];
  is_milestone: boolean;
  warnings?: string[];
  recorded_at?: number;
  category: string;
}

export interface UnitRecord {
  id: number;
  kind: UnitKind;
  title: string;
  body: string;
  producer_action_id: number;
  minimized: boolean;
  source_locator: string | null;
}

export interface TraceNode {
  index: number;
  parent: number; // -1 for the root claim
  unit_id: number;
  start: number;
  end: number;
  quote: string;
  terminal: "raw_reached" | "no_evidence_found" | "depth_limit" | null;
}

export interface TracePayload {
  root: { unit_id: number; start: number; end: number; claim_text: string };
  nodes: TraceNode[];
  judged_count: number;
  errors: string[];
}

export interface FocusBundle {
  action: ActionRecord;
  unit: UnitRecord | null;
  predecessors: number[];
  successors: number[];
  session_ids: number[];
  session_id: number | null;
  sequence_prev: number | null;
  sequence_next: number | null;
}

export interface ProtocolMessage {
  v: number;
  run_id: string;
  seq: number | null; // null for direct query replies
  kind: string;
  payload: Record<string, unknown>;
}

/** Action color coding used across all views: blue search, green source,
 * red processed, neutral for user and administrative actions. */
export type ActionColor = "blue" | "green" | "red" | "gray";

export function actionColor(kind: ActionKind): ActionColor {
  switch (kind) {
    case "web_search":
      return "blue";
    case "scrape_webpage":
      return "green";
    case "create_note":
      return "red";
    default:
      return "gray";
  }
}

const CITATION = /\[\^I(\d+)\]/g;

/** Unit ids cited with superscript markers in a note body, first-use order. */
export function citedUnitIds(body: string): number[] {
  const seen: number[] = [];
  for (const match of body.matchAll(CITATION)) {
    const id = Number(match[1]);
    if (!seen.includes(id)) seen.push(id);
  }
  return seen;
}
