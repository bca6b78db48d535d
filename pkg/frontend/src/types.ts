/** Wire types for the review service HTTP API. */

export type DraftStatus = "proposed" | "accepted" | "rejected" | "relabeled";

export interface Draft {
  id: string;
  start: number;
  end: number;
  label: string;
  source: string;
  status: DraftStatus;
  new_label?: string;
  note?: string;
}

export interface DocumentSnapshot {
  doc_id: string;
  version: number;
  tokens: string[];
  drafts: Draft[];
  decisions: unknown[];
}

export interface DocumentListEntry {
  doc_id: string;
  version: number;
  n_tokens: number;
  drafts: Draft[];
}

export type DecisionAction = "accept" | "reject" | "relabel" | "add";

export interface DecisionPayload {
  action: DecisionAction;
  version: number;
  draft_id?: string;
  new_label?: string;
  start?: number;
  end?: number;
  label?: string;
}

/** Effective label of a draft: the relabel target once one is chosen. */
export function effectiveLabel(draft: Draft): string {
  return draft.status === "relabeled" && draft.new_label ? draft.new_label : draft.label;
}
