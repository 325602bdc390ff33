/** Browser shell: three coordinated views over a live run.
 *
 * Everything here is thin DOM plumbing; all behavior lives in the view-model
 * modules, which are what the tests cover.
 */

import { renderActionFlow } from "./actionFlow.js";
import { StreamClient } from "./client.js";
import { renderDependencyGraph } from "./depGraph.js";
import { renderInfoCards } from "./infoCards.js";
import {
  clearComposer,
  composerPayload,
  focusAction,
  followLatestTarget,
  hoverCitation,
  referInChat,
  removeChip,
} from "./linkage.js";
import { FocusBundle, TracePayload } from "./protocol.js";
import { RunModel, applyMessage, emptyModel } from "./store.js";
import {
  ViewState,
  addTraceOverlay,
  clearOverlays,
  emptyViewState,
  toggleExpand,
} from "./viewstate.js";

const base = (window as any).DOSSIER_BASE ?? "";
let model: RunModel = emptyModel();
let state: ViewState = emptyViewState();
let client: StreamClient | null = null;
let runId: string | null = null;

function el(id: string): HTMLElement {
  return document.getElementById(id)!;
}

async function api(method: string, path: string, body?: unknown): Promise<any> {
  const resp = await fetch(base + path, {
    method,
    headers: { "Content-Type": "application/json" },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  return resp.headers.get("content-type")?.includes("json") ? resp.json() : resp.text();
}

async function focusById(actionId: number): Promise<void> {
  if (runId === null) return;
  const bundle = (await api("GET", `/runs/${runId}/focus/${actionId}`)) as FocusBundle;
  focusAction(state, bundle);
  state.followLatest = false;
  render();
}

function render(): void {
  if (state.followLatest) {
    const latest = followLatestTarget(model);
    if (latest !== null && latest !== state.focusedActionId) {
      void focusById(latest);
    }
  }
  renderFlow();
  renderGraph();
  renderCards();
  el("status").textContent = `run ${runId ?? "-"} · ${model.status}`;
}

function renderFlow(): void {
  const view = renderActionFlow(model, state);
  const sessionOf = (actionId: number) =>
    view.sessions.filter(
      (s) => actionId >= s.startActionId && (s.endActionId === null || actionId <= s.endActionId)
    );
  el("flow").innerHTML = view.items
    .map((item) => {
      const sessions = sessionOf(item.actionId).map((s) => s.id).join(",");
      const classes = ["item", item.color, item.focused ? "focused" : "", item.inFlight ? "inflight" : ""];
      return (
        `<div class="${classes.join(" ")}" data-action="${item.actionId}">` +
        `<span class="session-line" title="session ${sessions}"></span>` +
        (item.narrationBefore ? `<p class="narration">${item.narrationBefore}</p>` : "") +
        `<p class="summary">${item.summary}${item.isMilestone ? " ★" : ""}</p>` +
        (item.narrationAfter ? `<p class="narration after">${item.narrationAfter}</p>` : "") +
        `</div>`
      );
    })
    .join("");
  (el("stop") as HTMLButtonElement).style.display = view.stopVisible ? "inline-block" : "none";
  for (const node of Array.from(el("flow").querySelectorAll("[data-action]"))) {
    node.addEventListener("click", () => void focusById(Number((node as HTMLElement).dataset.action)));
  }
}

function renderGraph(): void {
  const view = renderDependencyGraph(model, state);
  el("graph").innerHTML =
    view.nodes
      .map((n) => {
        const classes = [
          "node", n.color,
          n.expanded ? "expanded" : "collapsed",
          n.focused ? "focused" : "",
          n.highlighted ? "highlighted" : "",
        ];
        const body = n.expanded && n.unit ? `<div class="unit">${n.unit.title}</div>` : "";
        return `<div class="${classes.join(" ")}" data-action="${n.actionId}">${n.label}${body}</div>`;
      })
      .join('<div class="edge dashed"></div>') +
    view.overlayNodes
      .map((o) => `<div class="node overlay" title="${o.terminal ?? ""}">${o.quote.slice(0, 80)}</div>`)
      .join("");
  for (const node of Array.from(el("graph").querySelectorAll("[data-action]"))) {
    const actionId = Number((node as HTMLElement).dataset.action);
    node.addEventListener("click", () => void focusById(actionId));
    node.addEventListener("contextmenu", (event) => {
      event.preventDefault();
      const record = model.actions[actionId];
      toggleExpand(state, actionId, record ? record.is_milestone : false);
      render();
    });
  }
}

function renderCards(): void {
  const view = renderInfoCards(model, state);
  const card = view.focusedCard;
  const chips = state.composerRefs
    .map((chip, i) => `<span class="chip" data-chip="${i}">#${chip.unitId} "${chip.quote.slice(0, 30)}" ✕</span>`)
    .join("");
  el("chips").innerHTML = chips;
  for (const chip of Array.from(el("chips").querySelectorAll("[data-chip]"))) {
    chip.addEventListener("click", () => {
      removeChip(state, Number((chip as HTMLElement).dataset.chip));
      render();
    });
  }
  if (!card) {
    el("card").innerHTML = '<p class="hint">focus an action to see its information</p>';
    return;
  }
  const citations = card.citedUnitIds
    .map((unitId) => `<sup class="cite" data-unit="${unitId}">[^I${unitId}]</sup>`)
    .join(" ");
  el("card").innerHTML =
    `<h3>#${card.unitId} ${card.kind}: ${card.title}${card.minimized ? " (minimized)" : ""}</h3>` +
    (card.locator ? `<p class="locator">${card.locator}</p>` : "") +
    `<pre id="card-body">${card.bodyPreview}</pre>` +
    (card.truncated ? '<button id="expand-card">show full text</button>' : "") +
    (citations ? `<p>cites: ${citations}</p>` : "") +
    '<button id="refer">Refer in Chat</button> <button id="trace">Trace selection</button>';
  for (const sup of Array.from(el("card").querySelectorAll(".cite"))) {
    sup.addEventListener("mouseenter", () => {
      hoverCitation(state, Number((sup as HTMLElement).dataset.unit));
      renderGraph();
    });
    sup.addEventListener("mouseleave", () => {
      hoverCitation(state, null);
      renderGraph();
    });
  }
  el("refer").addEventListener("click", () => {
    const span = selectedSpan(card.unitId);
    if (span) {
      referInChat(state, model, card.unitId, span[0], span[1]);
      render();
    }
  });
  el("trace").addEventListener("click", () => {
    const span = selectedSpan(card.unitId);
    if (span && runId !== null) {
      void api("POST", `/runs/${runId}/trace`, { unit_id: card.unitId, start: span[0], end: span[1] });
    }
  });
  const expand = document.getElementById("expand-card");
  if (expand) {
    expand.addEventListener("click", () => {
      const unit = model.units[card.unitId];
      el("card-body").textContent = unit ? unit.body : card.bodyPreview;
      expand.remove();
    });
  }
}

/** Selection offsets within the card body element, if any. */
function selectedSpan(unitId: number): [number, number] | null {
  const selection = window.getSelection();
  const bodyEl = document.getElementById("card-body");
  if (!selection || selection.rangeCount === 0 || !bodyEl) return null;
  const text = selection.toString();
  if (!text) return null;
  const unit = model.units[unitId];
  const at = unit ? unit.body.indexOf(text) : -1;
  return at >= 0 ? [at, at + text.length] : null;
}

function wire(): void {
  el("start").addEventListener("click", async () => {
    const text = (el("question") as HTMLInputElement).value;
    const started = await api("POST", "/runs", { text });
    runId = started.run_id;
    model = emptyModel(runId ?? "");
    state = emptyViewState();
    state.followLatest = true;
    client = new StreamClient(
      (fromSeq) =>
        `${base.replace(/^http/, "ws") || `ws://${location.host}`}/runs/${runId}/stream?from_seq=${fromSeq}`,
      (url) => new WebSocket(url) as unknown as import("./client.js").SocketLike,
      (msg) => {
        if (msg.kind === "TraceResult") {
          addTraceOverlay(state, (msg.payload as any).trace as TracePayload, (unitId) =>
            model.units[unitId] ? model.units[unitId].producer_action_id : -1
          );
        }
        applyMessage(model, msg);
        render();
      }
    );
    client.start(0);
    render();
  });
  el("stop").addEventListener("click", () => {
    if (runId !== null) void api("POST", `/runs/${runId}/interrupt`);
  });
  el("send").addEventListener("click", async () => {
    state.composerDraft = (el("composer") as HTMLInputElement).value;
    if (runId !== null && state.composerDraft.trim()) {
      await api("POST", `/runs/${runId}/message`, composerPayload(state));
      clearComposer(state);
      (el("composer") as HTMLInputElement).value = "";
      render();
    }
  });
  el("follow").addEventListener("click", () => {
    state.followLatest = true;
    render();
  });
  el("clear-overlays").addEventListener("click", () => {
    clearOverlays(state);
    render();
  });
}

if (typeof document !== "undefined" && document.getElementById("flow")) {
  wire();
}
