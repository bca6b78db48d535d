import { colorFor } from "./palette.js";
import { effectiveLabel } from "./types.js";
import type { Draft } from "./types.js";

export type ProgressCounts = Record<string, Record<string, number>>;

const STATUSES = ["proposed", "accepted", "rejected", "relabeled"] as const;

/**
 * Per-entity-type counts of proposed/accepted/rejected/relabeled drafts,
 * derived purely from server document state (so the totals always equal the
 * server's decision-log aggregates).
 */
export function computeProgress(documents: { drafts: Draft[] }[]): ProgressCounts {
  const counts: ProgressCounts = {};
  for (const doc of documents) {
    for (const draft of doc.drafts) {
      const label = effectiveLabel(draft);
      const perLabel = (counts[label] ??= {});
      perLabel[draft.status] = (perLabel[draft.status] ?? 0) + 1;
    }
  }
  return counts;
}

export function totalDrafts(counts: ProgressCounts): number {
  let total = 0;
  for (const perLabel of Object.values(counts)) {
    for (const n of Object.values(perLabel)) total += n;
  }
  return total;
}

export function renderDashboard(root: HTMLElement, counts: ProgressCounts): void {
  root.textContent = "";
  const table = document.createElement("table");
  table.className = "dashboard";
  const head = table.insertRow();
  head.insertCell().textContent = "type";
  for (const status of STATUSES) {
    head.insertCell().textContent = status;
  }
  for (const label of Object.keys(counts).sort()) {
    const row = table.insertRow();
    row.dataset.label = label;
    const name = row.insertCell();
    name.textContent = label;
    name.style.setProperty("--entity-color", colorFor(label));
    for (const status of STATUSES) {
      const cell = row.insertCell();
      cell.textContent = String(counts[label][status] ?? 0);
      cell.dataset.status = status;
    }
  }
  root.appendChild(table);
}
