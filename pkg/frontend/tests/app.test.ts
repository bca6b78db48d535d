// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ConflictError } from "../src/api.js";
import type { ReviewApi } from "../src/api.js";
import { App } from "../src/main.js";
import type { DecisionPayload, DocumentSnapshot } from "../src/types.js";
import { doc, draft, listEntry } from "./helpers.js";

class FakeServer implements ReviewApi {
  snapshots: Map<string, DocumentSnapshot>;
  failNext: ConflictError | null = null;
  posted: DecisionPayload[] = [];

  constructor(docs: DocumentSnapshot[]) {
    this.snapshots = new Map(docs.map((d) => [d.doc_id, d]));
  }

  async health() {
    return { status: "ok", documents: this.snapshots.size, decisions: this.posted.length };
  }

  async listDocuments() {
    return [...this.snapshots.values()].map(listEntry);
  }

  async getDocument(docId: string) {
    const snapshot = this.snapshots.get(docId);
    if (!snapshot) throw new Error("missing");
    return structuredClone(snapshot);
  }

  async postDecision(docId: string, decision: DecisionPayload) {
    if (this.failNext) {
      const err = this.failNext;
      this.failNext = null;
      throw err;
    }
    this.posted.push(decision);
    const snapshot = structuredClone(this.snapshots.get(docId)!);
    const target = snapshot.drafts.find((d) => d.id === decision.draft_id);
    if (decision.action === "add") {
      snapshot.drafts.push({
        id: `m${snapshot.drafts.length}`, start: decision.start!, end: decision.end!,
        label: decision.label!, source: "manual", status: "accepted",
      });
    } else if (target) {
      if (decision.action === "accept") target.status = "accepted";
      if (decision.action === "reject") target.status = "rejected";
      if (decision.action === "relabel") {
        target.status = "relabeled";
        target.new_label = decision.new_label;
      }
    }
    snapshot.version += 1;
    this.snapshots.set(docId, snapshot);
    return structuredClone(snapshot);
  }

  async exportConll() {
    return "";
  }
}

function roots() {
  const make = () => document.body.appendChild(document.createElement("div"));
  return { list: make(), document: make(), dashboard: make() };
}

describe("App", () => {
  let server: FakeServer;
  let app: App;

  beforeEach(async () => {
    document.body.textContent = "";
    server = new FakeServer([doc(), doc({ doc_id: "d1", drafts: [draft({ id: "z" })] })]);
    app = new App(server, roots());
    await app.start();
  });

  it("loads the list and opens the first document", () => {
    expect(app.docs).toHaveLength(2);
    expect(app.current?.doc_id).toBe("d0");
    expect(app.selectedDraft).toBe("a");
    expect(app.roots.document.querySelector(".doc-id")?.textContent).toBe("d0");
  });

  it("accept shortcut flips the badge to accepted", async () => {
    await app.handleKey("a");
    expect(server.posted).toEqual([{ action: "accept", draft_id: "a", version: 1 }]);
    expect(app.current?.drafts[0].status).toBe("accepted");
    const badge = app.roots.document.querySelector(".draft-chip .badge-status");
    expect(badge?.textContent).toBe("accepted");
  });

  it("relabel shortcut changes the rendered color per legend", async () => {
    await app.handleKey("3");  // UNI
    expect(server.posted).toEqual([
      { action: "relabel", draft_id: "a", new_label: "UNI", version: 1 },
    ]);
    const token = app.roots.document.querySelector('.token[data-draft="a"]') as HTMLElement;
    expect(token.style.getPropertyValue("--entity-color")).toBe("#009E73");
    const legend = [...app.roots.document.querySelectorAll(".legend-item")]
      .map((n) => (n as HTMLElement).dataset.label);
    expect(legend).toContain("UNI");
  });

  it("j/k cycle the selected draft", async () => {
    await app.handleKey("j");
    expect(app.selectedDraft).toBe("b");
    await app.handleKey("k");
    expect(app.selectedDraft).toBe("a");
  });

  it("add span over selected tokens posts a manual draft", async () => {
    app.clickToken(0, false);
    app.clickToken(1, true);
    expect(app.selection).toEqual({ start: 0, end: 2 });
    await app.handleKey("n");
    expect(server.posted).toEqual([
      { action: "add", start: 0, end: 2, label: "MISC", version: 1 },
    ]);
    const manual = app.current?.drafts.find((d) => d.source === "manual");
    expect(manual).toBeDefined();
  });

  it("conflicts reload the document and re-offer the decision", async () => {
    server.failNext = new ConflictError("stale", 4);
    const canonical = structuredClone(server.snapshots.get("d0")!);
    canonical.version = 4;
    server.snapshots.set("d0", canonical);
    await app.handleKey("a");
    expect(app.current?.version).toBe(4);
    expect(app.notice?.reoffer).toEqual({ action: "accept", draft_id: "a", version: 4 });
    const banner = app.roots.document.querySelector(".notice");
    expect(banner?.textContent).toContain("not applied");
    (banner?.querySelector(".reoffer") as HTMLElement).click();
    await vi.waitFor(() => {
      expect(server.posted).toEqual([{ action: "accept", draft_id: "a", version: 4 }]);
    });
  });

  it("document navigation with brackets", async () => {
    await app.handleKey("]");
    expect(app.current?.doc_id).toBe("d1");
    await app.handleKey("[");
    expect(app.current?.doc_id).toBe("d0");
  });

  it("dashboard counts reflect server state after decisions", async () => {
    await app.handleKey("a");
    const fundRow = app.roots.dashboard.querySelector('tr[data-label="FUND"]');
    expect(fundRow?.querySelector('td[data-status="accepted"]')?.textContent).toBe("1");
  });
});
