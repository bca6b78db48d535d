"""Semi-automated annotation: seed entity drafts from upstream sources,
classify organization names by regular-expression rules, and route the
drafts through a human review loop.

Draft priorities when proposals collide: grant-index matches beat upstream
person spans beat rule-classified organizations; longer matches win inside
one priority band. Miscellaneous entities are never auto-proposed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .corpus import (
    Corpus,
    CorpusError,
    Sentence,
    Span,
    build_corpus,
    infer_labels,
    tokenize,
)

DRAFT_SOURCES = ("pretrained-per", "wos-grant-index", "wos-org-index", "rule", "manual")
DRAFT_STATUSES = ("proposed", "accepted", "rejected", "relabeled")
ORG_TARGETS = ("UNI", "COR", "FUND")

ORG_MERGE = {"FUND": "ORG", "COR": "ORG", "UNI": "ORG", "IND": "IND", "GRNB": "GRNB", "MISC": "MISC"}
IDENTITY = {t: t for t in ("FUND", "COR", "UNI", "IND", "GRNB", "MISC")}


class AnnotateError(CorpusError):
    pass


@dataclass
class DraftSpan:
    draft_id: str
    start: int
    end: int
    label: str
    source: str
    status: str = "proposed"
    new_label: str | None = None
    note: str = ""

    @property
    def effective_label(self) -> str:
        return self.new_label if self.status == "relabeled" else self.label

    def to_dict(self) -> dict:
        out = {
            "id": self.draft_id,
            "start": self.start,
            "end": self.end,
            "label": self.label,
            "source": self.source,
            "status": self.status,
        }
        if self.new_label is not None:
            out["new_label"] = self.new_label
        if self.note:
            out["note"] = self.note
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DraftSpan":
        return cls(d["id"], d["start"], d["end"], d["label"], d["source"],
                   d.get("status", "proposed"), d.get("new_label"), d.get("note", ""))


@dataclass
class DraftDocument:
    doc_id: str
    sentence: Sentence
    drafts: list[DraftSpan] = field(default_factory=list)

    def find(self, draft_id: str) -> DraftSpan:
        for d in self.drafts:
            if d.draft_id == draft_id:
                return d
        raise AnnotateError(f"unknown draft {draft_id!r} in document {self.doc_id}")


@dataclass
class DraftCorpus:
    documents: list[DraftDocument]
    scheme: str = "BIOES"
    conflicts: list[str] = field(default_factory=list)
    unaligned: list[str] = field(default_factory=list)

    def find(self, doc_id: str) -> DraftDocument:
        for doc in self.documents:
            if doc.doc_id == doc_id:
                return doc
        raise AnnotateError(f"unknown document {doc_id!r}")


# ---------------------------------------------------------------------------
# Rule-based organization classification


@dataclass(frozen=True)
class Rule:
    target: str
    pattern: str

    def compiled(self) -> re.Pattern:
        return re.compile(self.pattern)


class RuleTable:
    """Ordered (pattern, target) rules with first-match precedence UNI, then
    COR, then FUND; unmatched names fall back to the default target."""

    def __init__(self, rules: list[Rule], default: str = "FUND"):
        if not rules:
            raise AnnotateError("rule table must be nonempty")
        for rule in rules:
            if rule.target not in ORG_TARGETS:
                raise AnnotateError(f"rule target {rule.target!r} not one of {ORG_TARGETS}")
        if default not in ORG_TARGETS:
            raise AnnotateError(f"default target {default!r} not one of {ORG_TARGETS}")
        self.rules = list(rules)
        self.default = default
        self._compiled = [(r.target, r.compiled()) for r in self.rules]

    @classmethod
    def parse(cls, text: str, default: str = "FUND") -> "RuleTable":
        rules = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.rstrip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise AnnotateError(f"rules line {line_no}: expected TARGET<TAB>REGEX")
            rules.append(Rule(parts[0].strip(), parts[1]))
        return cls(rules, default)

    @classmethod
    def load(cls, path) -> "RuleTable":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    @classmethod
    def default_table(cls) -> "RuleTable":
        text = resources.files("acklab").joinpath("data/org_rules.txt").read_text("utf-8")
        return cls.parse(text)


def classify_org(name: str, rules: RuleTable) -> str:
    """Deterministically classify an organization name as UNI, COR or FUND."""
    if not name:
        raise AnnotateError("organization name must be nonempty")
    for target in ORG_TARGETS:
        for rule_target, pattern in rules._compiled:
            if rule_target == target and pattern.search(name):
                return target
    return rules.default


# ---------------------------------------------------------------------------
# Draft seeding

_PRIORITY = {"wos-grant-index": 0, "pretrained-per": 1, "wos-org-index": 2, "rule": 2}


def _token_matches(words: list[str], entry: str):
    entry_words = [t.text for t in tokenize(entry)]
    if not entry_words:
        return
    m = len(entry_words)
    for i in range(len(words) - m + 1):
        if words[i:i + m] == entry_words:
            yield i, i + m


def seed_annotations(sentences: list[Sentence], upstream: list[Sentence],
                     grant_index: list[str], org_index: list[str],
                     rules: RuleTable, scheme: str = "BIOES") -> DraftCorpus:
    """Propose entity drafts for every sentence.

    Upstream PER spans become IND drafts, grant-index matches become GRNB
    drafts, and organization-index entries plus upstream ORG/MISC mentions
    are classified into FUND/COR/UNI by the rule table. Colliding proposals
    are resolved GRNB > IND > organization rules, longer match first, and
    dropped proposals are logged as conflicts.
    """
    if len(upstream) != len(sentences):
        raise AnnotateError(
            f"upstream file has {len(upstream)} sentences, expected {len(sentences)}")
    draft_docs: list[DraftDocument] = []
    conflicts: list[str] = []
    unaligned: list[str] = []
    for i, (sent, up) in enumerate(zip(sentences, upstream)):
        doc_id = sent.sent_id or f"doc-{i:05d}"
        words = sent.words
        proposals: list[tuple[int, int, int, int, str, str]] = []
        order = 0

        for span in up.spans:
            if not (0 <= span.start < span.end <= len(sent)):
                raise AnnotateError(
                    f"upstream span {span} out of bounds in sentence {doc_id}")
            if span.label == "PER":
                proposals.append((_PRIORITY["pretrained-per"], -(span.end - span.start),
                                  span.start, order, "IND", "pretrained-per"))
                order += 1
            elif span.label in ("ORG", "MISC"):
                mention = " ".join(words[span.start:span.end])
                target = classify_org(mention, rules)
                proposals.append((_PRIORITY["rule"], -(span.end - span.start),
                                  span.start, order, target, "rule"))
                order += 1
            # LOC has no mapping in this pipeline.

        for entry in grant_index:
            hits = list(_token_matches(words, entry))
            if not hits and entry in sent.text:
                unaligned.append(f"{doc_id}: grant index entry {entry!r} not token-aligned")
            for s, e in hits:
                proposals.append((_PRIORITY["wos-grant-index"], -(e - s), s, order, "GRNB",
                                  "wos-grant-index"))
                order += 1

        for entry in org_index:
            hits = list(_token_matches(words, entry))
            if not hits and entry in sent.text:
                unaligned.append(f"{doc_id}: org index entry {entry!r} not token-aligned")
            target = classify_org(entry, rules)
            for s, e in hits:
                proposals.append((_PRIORITY["wos-org-index"], -(e - s), s, order, target,
                                  "wos-org-index"))
                order += 1

        kept: list[tuple[int, int, str, str]] = []
        for prio, neg_len, start, _, label, source in sorted(proposals):
            end = start - neg_len
            clash = next(((ks, ke, kl) for ks, ke, kl, _ in kept
                          if start < ke and ks < end), None)
            if clash is None:
                kept.append((start, end, label, source))
            else:
                conflicts.append(
                    f"{doc_id}: dropped {label}({start},{end}) from {source} "
                    f"overlapping {clash[2]}({clash[0]},{clash[1]})")
        kept.sort()
        drafts = [DraftSpan(f"d{j}", s, e, lab, src) for j, (s, e, lab, src) in enumerate(kept)]
        draft_docs.append(DraftDocument(doc_id, sent, drafts))
    return DraftCorpus(draft_docs, scheme=scheme, conflicts=conflicts, unaligned=unaligned)


# ---------------------------------------------------------------------------
# Review documents


def emit_review(draft_corpus: DraftCorpus) -> list[dict]:
    """One review document per sentence; ids are stable across re-emission."""
    return [
        {
            "doc_id": doc.doc_id,
            "tokens": doc.sentence.words,
            "drafts": [d.to_dict() for d in doc.drafts],
            "decisions": [],
        }
        for doc in draft_corpus.documents
    ]


def save_drafts(draft_corpus: DraftCorpus, path) -> None:
    payload = {
        "scheme": draft_corpus.scheme,
        "documents": emit_review(draft_corpus),
        "conflicts": draft_corpus.conflicts,
        "unaligned": draft_corpus.unaligned,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_drafts(path) -> DraftCorpus:
    from .corpus import make_sentence

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    docs = []
    for entry in payload["documents"]:
        sent = make_sentence(entry["tokens"], meta={"sent_id": entry["doc_id"]})
        drafts = [DraftSpan.from_dict(d) for d in entry["drafts"]]
        docs.append(DraftDocument(entry["doc_id"], sent, drafts))
    return DraftCorpus(docs, scheme=payload.get("scheme", "BIOES"),
                       conflicts=payload.get("conflicts", []),
                       unaligned=payload.get("unaligned", []))


# ---------------------------------------------------------------------------
# Decisions


@dataclass
class Decision:
    doc_id: str
    action: str  # accept | reject | relabel | add
    draft_id: str | None = None
    new_label: str | None = None
    start: int | None = None
    end: int | None = None
    label: str | None = None
    note: str = ""

    def to_dict(self) -> dict:
        out = {"doc_id": self.doc_id, "action": self.action}
        for key in ("draft_id", "new_label", "start", "end", "label"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.note:
            out["note"] = self.note
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Decision":
        return cls(d["doc_id"], d["action"], d.get("draft_id"), d.get("new_label"),
                   d.get("start"), d.get("end"), d.get("label"), d.get("note", ""))


def apply_decision(draft_corpus: DraftCorpus, decision: Decision) -> DraftDocument:
    """Apply one review decision in place and return the touched document."""
    doc = draft_corpus.find(decision.doc_id)
    if decision.action == "add":
        if decision.start is None or decision.end is None or not decision.label:
            raise AnnotateError("add decision needs start, end and label")
        n = len(doc.sentence)
        if not (0 <= decision.start < decision.end <= n):
            raise AnnotateError(
                f"added span ({decision.start},{decision.end}) out of bounds in {doc.doc_id}")
        for d in doc.drafts:
            if d.status in ("accepted", "relabeled") and d.start < decision.end and decision.start < d.end:
                raise AnnotateError(
                    f"added span overlaps accepted draft {d.draft_id} in {doc.doc_id}")
        draft_id = f"m{sum(1 for d in doc.drafts if d.source == 'manual')}"
        doc.drafts.append(DraftSpan(draft_id, decision.start, decision.end, decision.label,
                                    "manual", status="accepted", note=decision.note))
        return doc
    if decision.draft_id is None:
        raise AnnotateError(f"{decision.action} decision needs a draft_id")
    draft = doc.find(decision.draft_id)
    if decision.action == "accept":
        draft.status = "accepted"
    elif decision.action == "reject":
        draft.status = "rejected"
    elif decision.action == "relabel":
        if not decision.new_label:
            raise AnnotateError("relabel decision needs new_label")
        draft.status = "relabeled"
        draft.new_label = decision.new_label
    else:
        raise AnnotateError(f"unknown action {decision.action!r}")
    if decision.note:
        draft.note = decision.note
    return doc


def gold_sentence(doc: DraftDocument) -> Sentence:
    spans = [Span(d.start, d.end, d.effective_label)
             for d in doc.drafts if d.status in ("accepted", "relabeled")]
    sent = Sentence(doc.sentence.tokens, sorted(spans), dict(doc.sentence.meta))
    sent.meta.setdefault("sent_id", doc.doc_id)
    sent.validate()
    return sent


def apply_review(draft_corpus: DraftCorpus, decisions: list[Decision]) -> Corpus:
    """Apply decisions, then harvest accepted/relabeled drafts as gold spans.

    Returns a corpus whose train split holds the reviewed sentences; the
    result always satisfies the span invariants.
    """
    for decision in decisions:
        apply_decision(draft_corpus, decision)
    gold = [gold_sentence(doc) for doc in draft_corpus.documents]
    return build_corpus(gold, [], [], scheme=draft_corpus.scheme)


# ---------------------------------------------------------------------------
# Category merges (3-class and 5-class ablations)


def merge_categories(corpus: Corpus, mapping: dict[str, str],
                     drop: set[str] | frozenset[str] = frozenset()) -> Corpus:
    """Relabel spans through `mapping` and drop labels in `drop`; the label
    inventory is recomputed and the sentence count is preserved."""
    present = {span.label for sent in corpus.all_sentences() for span in sent.spans}
    missing = present - set(mapping) - set(drop)
    if missing:
        raise AnnotateError(f"mapping not total: missing {sorted(missing)}")

    def convert(sentences):
        out = []
        for sent in sentences:
            spans = [Span(s.start, s.end, mapping[s.label])
                     for s in sent.spans if s.label not in drop]
            out.append(Sentence(sent.tokens, spans, dict(sent.meta)))
        return out

    merged = Corpus(convert(corpus.train), convert(corpus.dev), convert(corpus.test),
                    scheme=corpus.scheme)
    merged.labels = infer_labels(merged.all_sentences())
    merged.validate()
    return merged
