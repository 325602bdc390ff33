/** Canvas view model: the action dependency graph.
 *
 * Nodes are ordered vertically by execution order; consecutive actions are
 * joined by dashed edges, information dependencies by solid edges. Collapsed
 * nodes show only key parameters; expanded nodes (milestones, the focused
 * node, user-toggled ones) also show the produced information. Trace overlays
 * render as temporary nodes anchored to the producer of their supporting
 * unit. Exact coordinates are left to the layout layer; only ordering and
 * edge kinds are contractual.
 */

import { ActionColor, actionColor } from "./protocol.js";
import { RunModel } from "./store.js";
import { OverlayNode, ViewState, isExpanded } from "./viewstate.js";
import { actionSummary } from "./actionFlow.js";

export interface GraphNode {
  actionId: number;
  order: number;
  color: ActionColor;
  label: string;
  isMilestone: boolean;
  expanded: boolean;
  focused: boolean;
  centered: boolean;
  highlighted: boolean;
  unit: { unitId: number; title: string; bodyPreview: string } | null; // expanded nodes only
}

export interface GraphEdge {
  from: number;
  to: number;
  style: "dashed" | "solid"; // dashed = sequence, solid = dependency
}

export interface GraphView {
  nodes: GraphNode[];
  edges: GraphEdge[];
  overlayNodes: OverlayNode[];
  overlayEdges: { fromOverlayId: string | null; toOverlayId: string; anchorActionId: number }[];
}

const PREVIEW_CHARS = 200;

export function renderDependencyGraph(model: RunModel, state: ViewState): GraphView {
  const highlighted = new Set<number>();
  if (state.hoveredCitationUnit !== null) {
    const unit = model.units[state.hoveredCitationUnit];
    if (unit) highlighted.add(unit.producer_action_id);
  }
  const unitByProducer = new Map<number, number>();
  for (const unit of model.units) {
    if (unit) unitByProducer.set(unit.producer_action_id, unit.id);
  }

  const nodes: GraphNode[] = model.actions.map((action, order) => {
    const expanded = isExpanded(state, action.id, action.is_milestone);
    const unitId = unitByProducer.get(action.id);
    const unit = expanded && unitId !== undefined ? model.units[unitId] : undefined;
    return {
      actionId: action.id,
      order,
      color: actionColor(action.kind),
      label: actionSummary(action.kind, action.parameters),
      isMilestone: action.is_milestone,
      expanded,
      focused: state.focusedActionId === action.id,
      centered: state.focusedActionId === action.id,
      highlighted: highlighted.has(action.id),
      unit: unit
        ? { unitId: unit.id, title: unit.title, bodyPreview: unit.body.slice(0, PREVIEW_CHARS) }
        : null,
    };
  });

  const edges: GraphEdge[] = [];
  for (let i = 1; i < model.actions.length; i++) {
    edges.push({ from: i - 1, to: i, style: "dashed" });
  }
  for (const action of model.actions) {
    for (const unitId of action.depends_on) {
      const producer = model.units[unitId]?.producer_action_id;
      if (producer !== undefined) edges.push({ from: producer, to: action.id, style: "solid" });
    }
  }

  const overlayNodes: OverlayNode[] = [];
  const overlayEdges: GraphView["overlayEdges"] = [];
  for (const overlay of state.overlays) {
    for (const node of overlay.nodes) {
      overlayNodes.push(node);
      overlayEdges.push({
        fromOverlayId: node.parentId,
        toOverlayId: node.id,
        anchorActionId: node.anchorActionId,
      });
    }
  }
  return { nodes, edges, overlayNodes, overlayEdges };
}
