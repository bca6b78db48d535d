"""Data model and I/O for tokenized, span-annotated acknowledgement sentences.

Holds the six-type entity inventory, the BIO/BIOES tag codecs with
deterministic repair of ill-formed sequences, the tab-separated CoNLL
reader/writer, a whitespace+punctuation tokenizer that keeps grant-number
tokens intact, and per-split/per-domain corpus statistics.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field, replace

ENTITY_TYPES = ("FUND", "COR", "UNI", "IND", "MISC", "GRNB")
ORG = "ORG"
SCHEMES = ("BIO", "BIOES")

_TAG_PREFIXES = {"B", "I", "E", "S"}


class CorpusError(Exception):
    pass


class ConllFormatError(CorpusError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    text: str
    char_offset: int = 0

    def __post_init__(self):
        if not self.text:
            raise CorpusError("token text must be nonempty")


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int
    label: str

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass
class Sentence:
    tokens: list[Token]
    spans: list[Span] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.text for t in self.tokens]

    @property
    def text(self) -> str:
        return " ".join(self.words)

    @property
    def sent_id(self) -> str:
        return self.meta.get("sent_id", "")

    def validate(self) -> None:
        n = len(self.tokens)
        offsets = [t.char_offset for t in self.tokens]
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise CorpusError("token offsets must be strictly increasing")
        ordered = sorted(self.spans)
        for span in ordered:
            if not (0 <= span.start < span.end <= n):
                raise CorpusError(f"span {span} out of bounds for sentence of length {n}")
        for a, b in zip(ordered, ordered[1:]):
            if a.overlaps(b):
                raise CorpusError(f"overlapping spans {a} and {b}")


def make_sentence(words: list[str], spans: list[Span] | None = None, meta: dict | None = None) -> Sentence:
    """Build a sentence from plain words, synthesizing single-space offsets."""
    tokens = []
    offset = 0
    for w in words:
        tokens.append(Token(w, offset))
        offset += len(w) + 1
    return Sentence(tokens, list(spans or []), dict(meta or {}))


@dataclass
class Corpus:
    train: list[Sentence] = field(default_factory=list)
    dev: list[Sentence] = field(default_factory=list)
    test: list[Sentence] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    scheme: str = "BIOES"

    SPLITS = ("train", "dev", "test")

    def split(self, name: str) -> list[Sentence]:
        if name not in self.SPLITS:
            raise CorpusError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_sentences(self):
        for name in self.SPLITS:
            yield from self.split(name)

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise CorpusError(f"unknown scheme {self.scheme!r}")
        inventory = set(self.labels)
        seen_ids: dict[str, str] = {}
        for name in self.SPLITS:
            for sent in self.split(name):
                sent.validate()
                for span in sent.spans:
                    if span.label not in inventory:
                        raise CorpusError(f"span label {span.label!r} not in inventory {sorted(inventory)}")
                sid = sent.sent_id
                if sid:
                    if sid in seen_ids and seen_ids[sid] != name:
                        raise CorpusError(f"sentence {sid!r} appears in both {seen_ids[sid]} and {name}")
                    seen_ids[sid] = name


def infer_labels(sentences) -> list[str]:
    return sorted({span.label for sent in sentences for span in sent.spans})


def build_corpus(train, dev, test, scheme: str = "BIOES") -> Corpus:
    corpus = Corpus(list(train), list(dev), list(test), scheme=scheme)
    corpus.labels = infer_labels(corpus.all_sentences())
    corpus.validate()
    return corpus


# ---------------------------------------------------------------------------
# Tag codecs


def encode_bioes(sentence: Sentence) -> list[str]:
    """Tag a sentence's spans with the BIOES scheme (S- for single tokens)."""
    tags = ["O"] * len(sentence)
    for span in sorted(sentence.spans):
        if span.end - span.start == 1:
            tags[span.start] = f"S-{span.label}"
        else:
            tags[span.start] = f"B-{span.label}"
            for i in range(span.start + 1, span.end - 1):
                tags[i] = f"I-{span.label}"
            tags[span.end - 1] = f"E-{span.label}"
    return tags


def encode_bio(sentence: Sentence) -> list[str]:
    tags = ["O"] * len(sentence)
    for span in sorted(sentence.spans):
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tags


def encode_tags(sentence: Sentence, scheme: str) -> list[str]:
    if scheme == "BIOES":
        return encode_bioes(sentence)
    if scheme == "BIO":
        return encode_bio(sentence)
    raise CorpusError(f"unknown scheme {scheme!r}")


def split_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    if "-" not in tag:
        raise CorpusError(f"malformed tag {tag!r}")
    prefix, label = tag.split("-", 1)
    if prefix not in _TAG_PREFIXES or not label:
        raise CorpusError(f"unknown tag prefix in {tag!r}")
    return prefix, label


def decode_bioes(tags: list[str]) -> tuple[list[Span], int]:
    """Decode a (possibly ill-formed) BIOES tag sequence into spans.

    Total function with deterministic repair: an I-/E- without an open span
    of the same label starts a new span, a label change or illegal
    transition closes the open span, and an unclosed span at sentence end
    is emitted. Returns (spans, repair_count) where repair_count is the
    number of tokens whose tag was inconsistent with the running state.
    """
    spans: list[Span] = []
    repairs = 0
    open_start: int | None = None
    open_label: str | None = None

    def close(end: int) -> None:
        nonlocal open_start, open_label
        if open_start is not None:
            spans.append(Span(open_start, end, open_label))
        open_start = open_label = None

    for i, tag in enumerate(tags):
        prefix, label = split_tag(tag)
        if prefix == "O":
            if open_start is not None:
                repairs += 1
                close(i)
        elif prefix == "B":
            if open_start is not None:
                repairs += 1
                close(i)
            open_start, open_label = i, label
        elif prefix == "S":
            if open_start is not None:
                repairs += 1
                close(i)
            spans.append(Span(i, i + 1, label))
        elif prefix == "I":
            if open_start is None or open_label != label:
                repairs += 1
                close(i)
                open_start, open_label = i, label
        else:  # E
            if open_start is None or open_label != label:
                repairs += 1
                close(i)
                open_start, open_label = i, label
            close(i + 1)
    close(len(tags))
    return spans, repairs


def decode_bio(tags: list[str]) -> tuple[list[Span], int]:
    spans: list[Span] = []
    repairs = 0
    open_start: int | None = None
    open_label: str | None = None

    def close(end: int) -> None:
        nonlocal open_start, open_label
        if open_start is not None:
            spans.append(Span(open_start, end, open_label))
        open_start = open_label = None

    for i, tag in enumerate(tags):
        prefix, label = split_tag(tag)
        if prefix in ("E", "S"):
            raise CorpusError(f"tag {tag!r} is not a BIO tag")
        if prefix == "O":
            close(i)
        elif prefix == "B":
            close(i)
            open_start, open_label = i, label
        else:  # I
            if open_start is None or open_label != label:
                repairs += 1
                close(i)
                open_start, open_label = i, label
    close(len(tags))
    return spans, repairs


def decode_tags(tags: list[str], scheme: str) -> tuple[list[Span], int]:
    if scheme == "BIOES":
        return decode_bioes(tags)
    if scheme == "BIO":
        return decode_bio(tags)
    raise CorpusError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------------------
# CoNLL reader/writer


def parse_conll(text: str, scheme: str = "BIOES") -> list[Sentence]:
    """Parse tab-separated token/tag lines into sentences.

    Blank lines separate sentences. Ill-formed tag sequences are repaired
    by the scheme decoder; the repair count lands in sentence meta.
    """
    sentences: list[Sentence] = []
    words: list[str] = []
    tags: list[str] = []

    def flush() -> None:
        if not words:
            return
        spans, repairs = decode_tags(tags, scheme)
        sent = make_sentence(words, spans)
        if repairs:
            sent.meta["decode_repairs"] = repairs
        sentences.append(sent)
        words.clear()
        tags.clear()

    for line_no, line in enumerate(text.split("\n"), start=1):
        if line.strip() == "":
            flush()
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ConllFormatError(
                f"expected 2 tab-separated fields, got {len(fields)}", line_no)
        word, tag = fields
        if not word:
            raise ConllFormatError("empty token", line_no)
        try:
            split_tag(tag)
        except CorpusError as exc:
            raise ConllFormatError(str(exc), line_no) from None
        words.append(word)
        tags.append(tag)
    flush()
    return sentences


def write_conll(sentences: list[Sentence], scheme: str = "BIOES") -> str:
    """Serialize sentences to canonical CoNLL text (inverse of parse_conll)."""
    blocks = []
    for sent in sentences:
        ordered = sorted(sent.spans)
        for a, b in zip(ordered, ordered[1:]):
            if a.overlaps(b):
                raise CorpusError(f"overlapping spans {a} and {b} in sentence {sent.sent_id or sent.text!r}")
        tags = encode_tags(sent, scheme)
        blocks.append("\n".join(f"{tok.text}\t{tag}" for tok, tag in zip(sent.tokens, tags)))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"


def save_corpus(corpus: Corpus, directory) -> None:
    """Write a corpus directory: one CoNLL file per split plus meta.json."""
    os.makedirs(directory, exist_ok=True)
    meta = {"scheme": corpus.scheme, "labels": corpus.labels, "provenance": {}}
    for name in Corpus.SPLITS:
        sentences = corpus.split(name)
        path = os.path.join(directory, f"{name}.conll")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(write_conll(sentences, corpus.scheme))
        meta["provenance"][name] = [dict(s.meta) for s in sentences]
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_corpus(directory) -> Corpus:
    if not os.path.isdir(directory):
        raise CorpusError(f"corpus directory {str(directory)!r} not found")
    if not any(os.path.exists(os.path.join(directory, f"{n}.conll")) for n in Corpus.SPLITS):
        raise CorpusError(f"no split files (train/dev/test.conll) in {str(directory)!r}")
    meta_path = os.path.join(directory, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    scheme = meta.get("scheme", "BIOES")
    corpus = Corpus(scheme=scheme)
    for name in Corpus.SPLITS:
        path = os.path.join(directory, f"{name}.conll")
        if not os.path.exists(path):
            continue
        with open(path, encoding="utf-8") as fh:
            sentences = parse_conll(fh.read(), scheme)
        provenance = meta.get("provenance", {}).get(name, [])
        for sent, prov in zip(sentences, provenance):
            sent.meta.update(prov)
        setattr(corpus, name, sentences)
    corpus.labels = meta.get("labels") or infer_labels(corpus.all_sentences())
    corpus.validate()
    return corpus


# ---------------------------------------------------------------------------
# Statistics


def corpus_stats(corpus: Corpus) -> dict:
    """Sentence, token and entity counts per split, domain and entity type."""
    stats: dict = {"splits": {}, "domains": {}, "entities": {}, "total_sentences": 0}
    for name in Corpus.SPLITS:
        sentences = corpus.split(name)
        per_type: dict[str, int] = {}
        for sent in sentences:
            for span in sent.spans:
                per_type[span.label] = per_type.get(span.label, 0) + 1
        stats["splits"][name] = {
            "sentences": len(sentences),
            "tokens": sum(len(s) for s in sentences),
            "entities": dict(sorted(per_type.items())),
        }
        for sent in sentences:
            domain = sent.meta.get("domain")
            if domain:
                stats["domains"][domain] = stats["domains"].get(domain, 0) + 1
        for label, count in per_type.items():
            stats["entities"][label] = stats["entities"].get(label, 0) + count
    stats["entities"] = dict(sorted(stats["entities"].items()))
    stats["total_sentences"] = sum(stats["splits"][n]["sentences"] for n in Corpus.SPLITS)
    return stats


# ---------------------------------------------------------------------------
# Raw-text tokenization and sentence segmentation

_PUNCT = set(".,;:!?()[]{}\"'`“”‘’")
ABBREVIATIONS = ("Dr.", "e.g.", "No.", "i.e.", "Prof.", "Mr.", "Ms.", "Mrs.", "vs.", "et al.")


def tokenize(text: str) -> list[Token]:
    """Whitespace split, then peel leading/trailing punctuation into their
    own tokens. Interior hyphens/slashes stay put so grant identifiers like
    01PQ17001 or FKZ-01/17 survive as single tokens."""
    tokens: list[Token] = []
    for match in re.finditer(r"\S+", text):
        chunk = match.group()
        start = match.start()
        lead: list[tuple[str, int]] = []
        trail: list[tuple[str, int]] = []
        lo, hi = 0, len(chunk)
        while lo < hi and chunk[lo] in _PUNCT:
            lead.append((chunk[lo], start + lo))
            lo += 1
        while hi > lo and chunk[hi - 1] in _PUNCT:
            trail.append((chunk[hi - 1], start + hi - 1))
            hi -= 1
        for ch, off in lead:
            tokens.append(Token(ch, off))
        if hi > lo:
            tokens.append(Token(chunk[lo:hi], start + lo))
        for ch, off in reversed(trail):
            tokens.append(Token(ch, off))
    return tokens


def split_sentences(text: str) -> list[str]:
    """Split on [.!?] followed by whitespace and an uppercase/digit start,
    with a short abbreviation stop-list."""
    boundaries = []
    for match in re.finditer(r"[.!?](?=\s+[A-Z0-9])", text):
        idx = match.start()
        prefix = text[: idx + 1]
        if any(prefix.endswith(abbr) for abbr in ABBREVIATIONS):
            continue
        boundaries.append(idx + 1)
    pieces = []
    prev = 0
    for b in boundaries:
        piece = text[prev:b].strip()
        if piece:
            pieces.append(piece)
        prev = b
    tail = text[prev:].strip()
    if tail:
        pieces.append(tail)
    return pieces


def relabel_spans(sentence: Sentence, mapping: dict[str, str], drop: set[str]) -> Sentence:
    spans = []
    for span in sentence.spans:
        if span.label in drop:
            continue
        spans.append(replace(span, label=mapping[span.label]))
    return Sentence(sentence.tokens, spans, dict(sentence.meta))
