/** Card view model: detailed research information with progressive disclosure. */

import { UnitKind, citedUnitIds } from "./protocol.js";
import { RunModel } from "./store.js";
import { ViewState } from "./viewstate.js";

const DISCLOSURE_CHARS = 2000;

export interface InfoCard {
  unitId: number;
  kind: UnitKind;
  title: string;
  locator: string | null;
  minimized: boolean;
  producerActionId: number;
  bodyPreview: string;
  truncated: boolean; // expand control shows the rest
  citedUnitIds: number[];
  focused: boolean;
}

export interface InfoCardView {
  cards: InfoCard[];
  focusedCard: InfoCard | null;
}

function toCard(model: RunModel, state: ViewState, unitId: number): InfoCard | null {
  const unit = model.units[unitId];
  if (!unit) return null;
  const producer = model.actions[unit.producer_action_id];
  return {
    unitId: unit.id,
    kind: unit.kind,
    title: unit.title,
    locator: unit.source_locator,
    minimized: unit.minimized,
    producerActionId: unit.producer_action_id,
    bodyPreview: unit.body.slice(0, DISCLOSURE_CHARS),
    truncated: unit.body.length > DISCLOSURE_CHARS,
    citedUnitIds: unit.kind === "processed" ? citedUnitIds(unit.body) : [],
    focused: producer !== undefined && state.focusedActionId === unit.producer_action_id,
  };
}

export function renderInfoCards(model: RunModel, state: ViewState): InfoCardView {
  const cards: InfoCard[] = [];
  for (const unit of model.units) {
    if (!unit) continue;
    const card = toCard(model, state, unit.id);
    if (card) cards.push(card);
  }
  let focusedCard: InfoCard | null = null;
  if (state.lastBundle && state.lastBundle.unit) {
    focusedCard = toCard(model, state, state.lastBundle.unit.id);
  } else if (state.focusedActionId !== null) {
    const unit = model.units.find(
      (u) => u && u.producer_action_id === state.focusedActionId
    );
    if (unit) focusedCard = toCard(model, state, unit.id);
  }
  return { cards, focusedCard };
}
