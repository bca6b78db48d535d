import type { DecisionPayload, DocumentListEntry, DocumentSnapshot } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class NotFoundError extends ApiError {
  constructor(message: string) {
    super(message, 404);
  }
}

/** Stale document version: the server reports the current one. */
export class ConflictError extends ApiError {
  constructor(message: string, readonly currentVersion: number) {
    super(message, 409);
  }
}

async function parseError(resp: Response): Promise<never> {
  let message = `${resp.status}`;
  let currentVersion = -1;
  try {
    const body = (await resp.json()) as { error?: string; current_version?: number };
    if (body.error) message = body.error;
    if (typeof body.current_version === "number") currentVersion = body.current_version;
  } catch {
    /* non-JSON error body */
  }
  if (resp.status === 404) throw new NotFoundError(message);
  if (resp.status === 409) throw new ConflictError(message, currentVersion);
  throw new ApiError(message, resp.status);
}

export interface ReviewApi {
  health(): Promise<{ status: string; documents: number; decisions: number }>;
  listDocuments(): Promise<DocumentListEntry[]>;
  getDocument(docId: string): Promise<DocumentSnapshot>;
  postDecision(docId: string, decision: DecisionPayload): Promise<DocumentSnapshot>;
  exportConll(): Promise<string>;
}

/**
 * Typed client for the review service. Every mutation goes through
 * postDecision; there is no other write path.
 */
export class ApiClient implements ReviewApi {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async health(): Promise<{ status: string; documents: number; decisions: number }> {
    const resp = await fetch(this.url("/health"));
    if (!resp.ok) await parseError(resp);
    return resp.json();
  }

  async listDocuments(): Promise<DocumentListEntry[]> {
    const resp = await fetch(this.url("/documents"));
    if (!resp.ok) await parseError(resp);
    return resp.json();
  }

  async getDocument(docId: string): Promise<DocumentSnapshot> {
    const resp = await fetch(this.url(`/documents/${encodeURIComponent(docId)}`));
    if (!resp.ok) await parseError(resp);
    return resp.json();
  }

  async postDecision(docId: string, decision: DecisionPayload): Promise<DocumentSnapshot> {
    const resp = await fetch(this.url(`/documents/${encodeURIComponent(docId)}/decisions`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(decision),
    });
    if (!resp.ok) await parseError(resp);
    return resp.json();
  }

  async exportConll(): Promise<string> {
    const resp = await fetch(this.url("/export.conll"));
    if (!resp.ok) await parseError(resp);
    return resp.text();
  }
}
