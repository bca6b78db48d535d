import type { DocumentListEntry, DocumentSnapshot, Draft } from "../src/types.js";

export function draft(partial: Partial<Draft> & { id: string }): Draft {
  return {
    start: 0,
    end: 1,
    label: "FUND",
    source: "rule",
    status: "proposed",
    ...partial,
  };
}

export function doc(partial: Partial<DocumentSnapshot> = {}): DocumentSnapshot {
  return {
    doc_id: "d0",
    version: 1,
    tokens: "Funded by Orion Fund under grant X-99 .".split(" "),
    drafts: [
      draft({ id: "a", start: 2, end: 4, label: "FUND" }),
      draft({ id: "b", start: 6, end: 7, label: "GRNB", source: "wos-grant-index" }),
    ],
    decisions: [],
    ...partial,
  };
}

export function listEntry(d: DocumentSnapshot): DocumentListEntry {
  return { doc_id: d.doc_id, version: d.version, n_tokens: d.tokens.length, drafts: d.drafts };
}
