import { colorFor, legendFor } from "./palette.js";
import { effectiveLabel } from "./types.js";
import type { DocumentSnapshot, Draft } from "./types.js";

export interface ViewState {
  selectedDraft?: string | null;
  /** Token-boundary-snapped selection for adding a manual span. */
  selection?: { start: number; end: number } | null;
  notice?: string | null;
}

export interface ViewHandlers {
  onSelectDraft?: (draftId: string) => void;
  onTokenClick?: (index: number, extend: boolean) => void;
}

/**
 * Tokens are attributed to at most one draft (earliest span wins), so
 * highlighted spans can never overlap visually even if the data misbehaves.
 */
export function assignTokens(doc: DocumentSnapshot): Map<number, Draft> {
  const byToken = new Map<number, Draft>();
  const drafts = [...doc.drafts].sort((a, b) => a.start - b.start || a.end - b.end);
  for (const draft of drafts) {
    if (draft.status === "rejected") continue;
    let free = true;
    for (let i = draft.start; i < draft.end; i++) {
      if (byToken.has(i)) free = false;
    }
    if (!free) continue;
    for (let i = draft.start; i < draft.end; i++) {
      byToken.set(i, draft);
    }
  }
  return byToken;
}

function el<K extends keyof HTMLElementTagNameMap>(tag: K, className?: string,
                                                   text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderLegend(doc: DocumentSnapshot): HTMLElement {
  const wrap = el("div", "legend");
  const labels = doc.drafts.filter((d) => d.status !== "rejected").map(effectiveLabel);
  for (const entry of legendFor(labels)) {
    const item = el("span", "legend-item", entry.label);
    item.style.setProperty("--entity-color", entry.color);
    item.dataset.label = entry.label;
    wrap.appendChild(item);
  }
  return wrap;
}

function renderTokens(doc: DocumentSnapshot, state: ViewState,
                      handlers: ViewHandlers): HTMLElement {
  const byToken = assignTokens(doc);
  const strip = el("div", "tokens");
  doc.tokens.forEach((text, i) => {
    const token = el("span", "token", text);
    token.dataset.index = String(i);
    const draft = byToken.get(i);
    if (draft) {
      token.classList.add("entity", `status-${draft.status}`);
      token.dataset.draft = draft.id;
      token.style.setProperty("--entity-color", colorFor(effectiveLabel(draft)));
      if (draft.id === state.selectedDraft) token.classList.add("selected");
      if (i === draft.start) {
        const tag = el("span", "entity-tag", effectiveLabel(draft));
        token.prepend(tag);
      }
    }
    const sel = state.selection;
    if (sel && sel.start <= i && i < sel.end) token.classList.add("in-selection");
    token.addEventListener("click", (ev) =>
      handlers.onTokenClick?.(i, (ev as MouseEvent).shiftKey));
    strip.appendChild(token);
  });
  return strip;
}

function renderDraftChips(doc: DocumentSnapshot, state: ViewState,
                          handlers: ViewHandlers): HTMLElement {
  const list = el("div", "drafts");
  for (const draft of doc.drafts) {
    const chip = el("button", `draft-chip status-${draft.status}`);
    chip.dataset.draft = draft.id;
    chip.style.setProperty("--entity-color", colorFor(effectiveLabel(draft)));
    const label = draft.status === "relabeled"
      ? `${draft.label} → ${draft.new_label}`
      : effectiveLabel(draft);
    chip.appendChild(el("span", "chip-label", label));
    chip.appendChild(el("span", "chip-text",
                        doc.tokens.slice(draft.start, draft.end).join(" ")));
    chip.appendChild(el("span", `badge badge-status`, draft.status));
    chip.appendChild(el("span", "badge badge-source", draft.source));
    if (draft.id === state.selectedDraft) chip.classList.add("selected");
    chip.addEventListener("click", () => handlers.onSelectDraft?.(draft.id));
    list.appendChild(chip);
  }
  return list;
}

export function renderDocument(root: HTMLElement, doc: DocumentSnapshot,
                               state: ViewState = {}, handlers: ViewHandlers = {}): void {
  root.textContent = "";
  const header = el("header", "doc-header");
  header.appendChild(el("h2", "doc-id", doc.doc_id));
  header.appendChild(el("span", "doc-version", `v${doc.version}`));
  root.appendChild(header);
  if (state.notice) {
    root.appendChild(el("div", "notice", state.notice));
  }
  root.appendChild(renderTokens(doc, state, handlers));
  root.appendChild(renderDraftChips(doc, state, handlers));
  root.appendChild(renderLegend(doc));
}

/** Empty state for missing documents, with a retry affordance. */
export function renderEmptyState(root: HTMLElement, message: string,
                                 onRetry: () => void): void {
  root.textContent = "";
  const box = el("div", "empty-state");
  box.appendChild(el("p", "empty-message", message));
  const retry = el("button", "retry", "Retry");
  retry.addEventListener("click", onRetry);
  box.appendChild(retry);
  root.appendChild(box);
}
