import { ApiClient, NotFoundError } from "./api.js";
import type { ReviewApi } from "./api.js";
import { DecisionManager } from "./decisions.js";
import type { RenderNote } from "./decisions.js";
import { computeProgress, renderDashboard } from "./dashboard.js";
import { actionForKey } from "./keyboard.js";
import { renderDocument, renderEmptyState } from "./view.js";
import type { DecisionPayload, DocumentListEntry, DocumentSnapshot } from "./types.js";

export interface AppRoots {
  list: HTMLElement;
  document: HTMLElement;
  dashboard: HTMLElement;
}

export class App {
  docs: DocumentListEntry[] = [];
  current: DocumentSnapshot | null = null;
  selectedDraft: string | null = null;
  selection: { start: number; end: number } | null = null;
  notice: RenderNote | null = null;
  addLabel = "MISC";
  private manager: DecisionManager;

  constructor(readonly api: ReviewApi, readonly roots: AppRoots) {
    this.manager = new DecisionManager(api);
  }

  async start(): Promise<void> {
    this.docs = await this.api.listDocuments();
    this.renderList();
    if (this.docs.length) {
      await this.open(this.docs[0].doc_id);
    }
  }

  async open(docId: string): Promise<void> {
    try {
      this.current = await this.api.getDocument(docId);
      this.selectedDraft = this.current.drafts[0]?.id ?? null;
      this.selection = null;
      this.notice = null;
    } catch (err) {
      if (err instanceof NotFoundError) {
        renderEmptyState(this.roots.document, `document ${docId} not found`, () => {
          void this.open(docId);
        });
        return;
      }
      throw err;
    }
    this.render();
  }

  private renderList(): void {
    const root = this.roots.list;
    root.textContent = "";
    for (const entry of this.docs) {
      const item = document.createElement("button");
      item.className = "doc-entry";
      item.dataset.doc = entry.doc_id;
      const reviewed = entry.drafts.filter((d) => d.status !== "proposed").length;
      item.textContent = `${entry.doc_id} (${reviewed}/${entry.drafts.length})`;
      if (this.current && entry.doc_id === this.current.doc_id) item.classList.add("active");
      item.addEventListener("click", () => void this.open(entry.doc_id));
      root.appendChild(item);
    }
  }

  render(): void {
    if (!this.current) return;
    renderDocument(this.roots.document, this.current, {
      selectedDraft: this.selectedDraft,
      selection: this.selection,
      notice: this.notice?.message ?? null,
    }, {
      onSelectDraft: (id) => {
        this.selectedDraft = id;
        this.render();
      },
      onTokenClick: (index, extend) => this.clickToken(index, extend),
    });
    if (this.notice?.reoffer) {
      const banner = this.roots.document.querySelector(".notice");
      if (banner) {
        const again = document.createElement("button");
        again.className = "reoffer";
        again.textContent = "Apply again";
        const decision = this.notice.reoffer;
        again.addEventListener("click", () => void this.submit(decision));
        banner.appendChild(again);
      }
    }
    renderDashboard(this.roots.dashboard, computeProgress(this.docs));
    this.renderList();
  }

  clickToken(index: number, extend: boolean): void {
    if (!this.current) return;
    const hit = this.current.drafts.find(
      (d) => d.status !== "rejected" && d.start <= index && index < d.end);
    if (hit && !extend) {
      this.selectedDraft = hit.id;
      this.selection = null;
    } else if (extend && this.selection) {
      this.selection = {
        start: Math.min(this.selection.start, index),
        end: Math.max(this.selection.end, index + 1),
      };
    } else {
      this.selection = { start: index, end: index + 1 };
    }
    this.render();
  }

  async handleKey(key: string): Promise<void> {
    const action = actionForKey(key);
    if (!action || !this.current) return;
    const doc = this.current;
    switch (action.kind) {
      case "accept":
      case "reject":
        if (this.selectedDraft) {
          await this.submit({ action: action.kind, draft_id: this.selectedDraft,
                              version: doc.version });
        }
        break;
      case "relabel":
        if (this.selectedDraft) {
          await this.submit({ action: "relabel", draft_id: this.selectedDraft,
                              new_label: action.label, version: doc.version });
        }
        break;
      case "add-span":
        if (this.selection) {
          await this.submit({ action: "add", start: this.selection.start,
                              end: this.selection.end, label: this.addLabel,
                              version: doc.version });
          this.selection = null;
        }
        break;
      case "next-draft":
      case "prev-draft": {
        const ids = doc.drafts.map((d) => d.id);
        if (!ids.length) break;
        const at = this.selectedDraft ? ids.indexOf(this.selectedDraft) : -1;
        const step = action.kind === "next-draft" ? 1 : -1;
        this.selectedDraft = ids[(at + step + ids.length) % ids.length];
        this.render();
        break;
      }
      case "next-doc":
      case "prev-doc": {
        if (!this.docs.length) break;
        const at = this.docs.findIndex((d) => d.doc_id === doc.doc_id);
        const step = action.kind === "next-doc" ? 1 : -1;
        const next = this.docs[(at + step + this.docs.length) % this.docs.length];
        await this.open(next.doc_id);
        break;
      }
      case "clear-selection":
        this.selection = null;
        this.render();
        break;
    }
  }

  async submit(decision: DecisionPayload): Promise<void> {
    if (!this.current) return;
    const fresh = await this.manager.submit(this.current, decision, (doc, note) => {
      this.current = doc;
      this.notice = note ?? null;
      this.render();
    });
    this.current = fresh;
    const entry = this.docs.find((d) => d.doc_id === fresh.doc_id);
    if (entry) {
      entry.version = fresh.version;
      entry.drafts = fresh.drafts;
    }
    this.render();
  }
}

export function bootstrap(): App | null {
  const list = document.getElementById("doc-list");
  const doc = document.getElementById("document");
  const dashboard = document.getElementById("dashboard");
  if (!list || !doc || !dashboard) return null;
  const app = new App(new ApiClient(""), { list, document: doc, dashboard });
  document.addEventListener("keydown", (ev) => {
    const target = ev.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) return;
    void app.handleKey(ev.key);
  });
  const picker = document.getElementById("add-label") as HTMLSelectElement | null;
  if (picker) {
    picker.addEventListener("change", () => {
      app.addLabel = picker.value;
    });
  }
  void app.start();
  return app;
}

declare global {
  interface Window {
    __ACKLAB_NO_BOOTSTRAP__?: boolean;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined"
    && !window.__ACKLAB_NO_BOOTSTRAP__ && document.getElementById("doc-list")) {
  bootstrap();
}
