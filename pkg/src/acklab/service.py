"""HTTP review service backing the annotation UI.

Endpoints: GET /documents, GET /documents/{id}, POST
/documents/{id}/decisions, GET /export.conll, GET /health. Writes are
serialized per document through version counters (stale version -> 409 with
the current version), and every accepted decision is appended to a
newline-delimited JSON log and fsynced before the response goes out, so
replaying the log from the initial drafts reproduces the export exactly.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .annotate import AnnotateError, Decision, DraftCorpus, apply_decision, apply_review
from .corpus import write_conll

log = logging.getLogger(__name__)

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".map": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class ConflictError(Exception):
    def __init__(self, doc_id: str, current_version: int):
        self.doc_id = doc_id
        self.current_version = current_version
        super().__init__(f"stale version for {doc_id}; current is {current_version}")


class ReviewSession:
    """Draft documents plus an append-only decision log."""

    def __init__(self, draft_corpus: DraftCorpus, log_path):
        self._lock = threading.Lock()
        self.draft_corpus = draft_corpus
        self.log_path = log_path
        self.versions = {doc.doc_id: 1 for doc in draft_corpus.documents}
        self.decisions: list[dict] = []
        if log_path and os.path.exists(log_path):
            with open(log_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    self._replay(entry)
        self._log_fh = open(log_path, "a", encoding="utf-8") if log_path else None

    def _replay(self, entry: dict) -> None:
        decision = Decision.from_dict(entry)
        apply_decision(self.draft_corpus, decision)
        self.versions[decision.doc_id] += 1
        self.decisions.append(entry)

    def close(self) -> None:
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    # -- queries ---------------------------------------------------------

    def list_documents(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "doc_id": doc.doc_id,
                    "version": self.versions[doc.doc_id],
                    "n_tokens": len(doc.sentence),
                    "drafts": [d.to_dict() for d in doc.drafts],
                }
                for doc in self.draft_corpus.documents
            ]

    def snapshot(self, doc_id: str) -> dict:
        with self._lock:
            return self._snapshot_locked(doc_id)

    def _snapshot_locked(self, doc_id: str) -> dict:
        doc = self.draft_corpus.find(doc_id)
        return {
            "doc_id": doc.doc_id,
            "version": self.versions[doc.doc_id],
            "tokens": doc.sentence.words,
            "drafts": [d.to_dict() for d in doc.drafts],
            "decisions": [d for d in self.decisions if d.get("doc_id") == doc_id],
        }

    def progress(self) -> dict:
        with self._lock:
            counts: dict[str, dict[str, int]] = {}
            for doc in self.draft_corpus.documents:
                for d in doc.drafts:
                    per_label = counts.setdefault(d.effective_label, {})
                    per_label[d.status] = per_label.get(d.status, 0) + 1
            return counts

    # -- mutations --------------------------------------------------------

    def submit(self, doc_id: str, payload: dict) -> dict:
        """Validate the version, apply the decision, fsync the log entry,
        bump the version, and return the fresh document snapshot."""
        with self._lock:
            doc = self.draft_corpus.find(doc_id)
            if "version" not in payload:
                raise AnnotateError("decision needs the document version")
            current = self.versions[doc.doc_id]
            if int(payload["version"]) != current:
                raise ConflictError(doc_id, current)
            entry = {k: v for k, v in payload.items() if k != "version"}
            entry["doc_id"] = doc_id
            decision = Decision.from_dict(entry)
            apply_decision(self.draft_corpus, decision)
            if self._log_fh:
                self._log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
                self._log_fh.flush()
                os.fsync(self._log_fh.fileno())
            self.versions[doc_id] = current + 1
            self.decisions.append(entry)
            return self._snapshot_locked(doc_id)

    def export_conll(self) -> str:
        with self._lock:
            corpus = apply_review(self.draft_corpus, [])
            return write_conll(corpus.train, corpus.scheme)


class ReviewHandler(BaseHTTPRequestHandler):
    server_version = "acklab-review/0.1"

    @property
    def session(self) -> ReviewSession:
        return self.server.session  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        log.debug("review-http: " + fmt, *args)

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_text(self, text: str, content_type: str, status: int = 200) -> None:
        body = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_static(self, rel_path: str) -> bool:
        static_dir = getattr(self.server, "static_dir", None)
        if not static_dir:
            return False
        if rel_path in ("", "/"):
            rel_path = "index.html"
        full = os.path.realpath(os.path.join(static_dir, rel_path.lstrip("/")))
        root = os.path.realpath(static_dir)
        if not full.startswith(root + os.sep) and full != root:
            return False
        if not os.path.isfile(full):
            return False
        ext = os.path.splitext(full)[1]
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", _CONTENT_TYPES.get(ext, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        return True

    def do_GET(self):  # noqa: N802 (http.server API)
        path = self.path.split("?", 1)[0]
        if path == "/health":
            self._send_json({"status": "ok",
                             "documents": len(self.session.draft_corpus.documents),
                             "decisions": len(self.session.decisions)})
        elif path == "/documents":
            self._send_json(self.session.list_documents())
        elif path.startswith("/documents/"):
            doc_id = path[len("/documents/"):]
            try:
                self._send_json(self.session.snapshot(doc_id))
            except AnnotateError:
                self._send_json({"error": f"unknown document {doc_id!r}"}, 404)
        elif path == "/export.conll":
            try:
                self._send_text(self.session.export_conll(), "text/plain; charset=utf-8")
            except AnnotateError as exc:
                self._send_json({"error": str(exc)}, 400)
        elif path == "/progress":
            self._send_json(self.session.progress())
        elif self._send_static(path):
            pass
        else:
            self._send_json({"error": f"no route for {path}"}, 404)

    def do_POST(self):  # noqa: N802
        path = self.path.split("?", 1)[0]
        if not (path.startswith("/documents/") and path.endswith("/decisions")):
            self._send_json({"error": f"no route for {path}"}, 404)
            return
        doc_id = path[len("/documents/"):-len("/decisions")]
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send_json({"error": "body is not valid JSON"}, 400)
            return
        try:
            self._send_json(self.session.submit(doc_id, payload))
        except ConflictError as exc:
            self._send_json({"error": str(exc), "current_version": exc.current_version}, 409)
        except AnnotateError as exc:
            self._send_json({"error": str(exc)}, 400)


def make_server(session: ReviewSession, host: str = "127.0.0.1", port: int = 8321,
                static_dir=None) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), ReviewHandler)
    server.session = session  # type: ignore[attr-defined]
    server.static_dir = static_dir  # type: ignore[attr-defined]
    return server
