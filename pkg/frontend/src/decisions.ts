import { ConflictError, NotFoundError } from "./api.js";
import type { ReviewApi } from "./api.js";
import type { DecisionPayload, DocumentSnapshot } from "./types.js";

export interface RenderNote {
  message: string;
  /** A conflicted decision, re-offered against the reloaded document. */
  reoffer?: DecisionPayload;
}

export type Render = (doc: DocumentSnapshot, note?: RenderNote) => void;

function decisionKey(decision: DecisionPayload): string {
  return decision.draft_id ?? `__add:${decision.start}-${decision.end}`;
}

/** Apply a decision locally without talking to the server (optimistic view). */
export function optimisticApply(doc: DocumentSnapshot, decision: DecisionPayload): DocumentSnapshot {
  const drafts = doc.drafts.map((d) => ({ ...d }));
  if (decision.action === "add") {
    drafts.push({
      id: `pending-${decision.start}-${decision.end}`,
      start: decision.start ?? 0,
      end: decision.end ?? 0,
      label: decision.label ?? "MISC",
      source: "manual",
      status: "accepted",
    });
  } else {
    const target = drafts.find((d) => d.id === decision.draft_id);
    if (target) {
      if (decision.action === "accept") target.status = "accepted";
      else if (decision.action === "reject") target.status = "rejected";
      else if (decision.action === "relabel") {
        target.status = "relabeled";
        target.new_label = decision.new_label;
      }
    }
  }
  return { ...doc, drafts };
}

/**
 * Submits decisions with an optimistic local update, at most one pending
 * decision per draft, and rollback plus re-offer when the server reports a
 * version conflict.
 */
export class DecisionManager {
  private pending = new Set<string>();

  constructor(private readonly api: ReviewApi) {}

  hasPending(draftId: string): boolean {
    return this.pending.has(draftId);
  }

  async submit(doc: DocumentSnapshot, decision: DecisionPayload,
               render: Render): Promise<DocumentSnapshot> {
    const key = decisionKey(decision);
    if (this.pending.has(key)) {
      render(doc, { message: `decision for ${key} already in flight` });
      return doc;
    }
    this.pending.add(key);
    render(optimisticApply(doc, decision));
    try {
      const fresh = await this.api.postDecision(doc.doc_id, decision);
      render(fresh);
      return fresh;
    } catch (err) {
      if (err instanceof ConflictError) {
        const fresh = await this.api.getDocument(doc.doc_id);
        render(fresh, {
          message: `document changed (now v${fresh.version}); decision not applied`,
          reoffer: { ...decision, version: fresh.version },
        });
        return fresh;
      }
      const message = err instanceof NotFoundError
        ? "document disappeared on the server"
        : `decision failed: ${err instanceof Error ? err.message : err}`;
      render(doc, { message });
      return doc;
    } finally {
      this.pending.delete(key);
    }
  }
}
