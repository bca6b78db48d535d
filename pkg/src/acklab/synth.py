"""Template-based synthetic acknowledgement corpus generator.

Provides desk-scale stand-in data where real acknowledgement corpora cannot
be redistributed: every generated sentence contains at least one
acknowledged entity, entity-type proportions are steerable (corporations
rarest by default), and the same seed always yields the same corpus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .corpus import Corpus, CorpusError, Sentence, Span, build_corpus, make_sentence

_SLOT_RE = re.compile(r"^\{([A-Z]+)\}$")

DEFAULT_DOMAIN_WEIGHTS = {
    "Social Sciences": 0.47,
    "Computer Science": 0.23,
    "Oceanography": 0.18,
    "Economics": 0.12,
}


class SynthError(CorpusError):
    pass


@dataclass(frozen=True)
class Template:
    tokens: tuple[str, ...]

    @property
    def slot_types(self) -> tuple[str, ...]:
        out = []
        for tok in self.tokens:
            m = _SLOT_RE.match(tok)
            if m:
                out.append(m.group(1))
        return tuple(out)

    def slot_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for t in self.slot_types:
            counts[t] = counts.get(t, 0) + 1
        return counts


def parse_templates(text: str) -> list[Template]:
    """One template per line; tokens are space-separated, slots look like {TYPE}."""
    templates = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        templates.append(Template(tuple(line.split())))
    return templates


def load_vocab(paths: dict[str, str]) -> dict[str, list[str]]:
    """Read vocabulary files: one surface form per line per entity type."""
    vocab: dict[str, list[str]] = {}
    for etype, path in paths.items():
        with open(path, encoding="utf-8") as fh:
            entries = [line.strip() for line in fh if line.strip()]
        vocab[etype] = entries
    return vocab


def default_templates() -> list[Template]:
    text = resources.files("acklab").joinpath("data/templates.txt").read_text("utf-8")
    return parse_templates(text)


def default_vocab() -> dict[str, list[str]]:
    vocab = {}
    data = resources.files("acklab").joinpath("data")
    for entry in sorted(data.iterdir(), key=lambda e: e.name):
        m = re.match(r"vocab_([A-Z]+)\.txt$", entry.name)
        if m:
            vocab[m.group(1)] = [line.strip() for line in entry.read_text("utf-8").splitlines() if line.strip()]
    return vocab


def _validate(templates: list[Template], vocab: dict[str, list[str]]) -> None:
    if not templates:
        raise SynthError("no templates given")
    for tpl in templates:
        if not tpl.slot_types:
            raise SynthError(f"template {' '.join(tpl.tokens)!r} contains no entity slot")
        for t in tpl.slot_types:
            if t not in vocab:
                raise SynthError(f"template slot {{{t}}} has no vocabulary")
            if not vocab[t]:
                raise SynthError(f"vocabulary for {{{t}}} is empty")


def _pick_template(templates: list[Template], counts: dict[str, int], total: int,
                   proportions: dict[str, float] | None, rng: np.random.Generator) -> Template:
    if proportions is None:
        return templates[int(rng.integers(len(templates)))]
    types = sorted(set(proportions) | {t for tpl in templates for t in tpl.slot_types})
    best_score = None
    best: list[Template] = []
    for tpl in templates:
        tpl_counts = tpl.slot_counts()
        new_total = total + sum(tpl_counts.values())
        score = 0.0
        for t in types:
            frac = (counts.get(t, 0) + tpl_counts.get(t, 0)) / new_total
            score += abs(frac - proportions.get(t, 0.0))
        if best_score is None or score < best_score - 1e-12:
            best_score, best = score, [tpl]
        elif abs(score - best_score) <= 1e-12:
            best.append(tpl)
    return best[int(rng.integers(len(best)))]


def _fill(tpl: Template, vocab: dict[str, list[str]], rng: np.random.Generator,
          meta: dict) -> Sentence:
    # Sample each type's slot fillers without replacement when possible.
    fillers: dict[str, list[str]] = {}
    for etype, count in tpl.slot_counts().items():
        entries = vocab[etype]
        if count <= len(entries):
            picks = rng.choice(len(entries), size=count, replace=False)
        else:
            picks = rng.integers(len(entries), size=count)
        fillers[etype] = [entries[int(i)] for i in picks]
    words: list[str] = []
    spans: list[Span] = []
    for tok in tpl.tokens:
        m = _SLOT_RE.match(tok)
        if m:
            etype = m.group(1)
            surface = fillers[etype].pop(0)
            parts = surface.split()
            spans.append(Span(len(words), len(words) + len(parts), etype))
            words.extend(parts)
        else:
            words.append(tok)
    return make_sentence(words, spans, meta)


def generate_synthetic(templates: list[Template], vocab: dict[str, list[str]],
                       sizes, seed: int, proportions: dict[str, float] | None = None,
                       domains: dict[str, float] | None = None, scheme: str = "BIOES",
                       doc_size: int = 5) -> Corpus:
    """Generate a train/dev/test corpus. `sizes` is (train, dev, test) or a
    dict with those keys. Template choice is deficit-driven when a
    proportion table is given, so empirical type shares track the request."""
    _validate(templates, vocab)
    if isinstance(sizes, dict):
        sizes = (sizes["train"], sizes["dev"], sizes["test"])
    n_train, n_dev, n_test = (int(s) for s in sizes)
    if min(n_train, n_dev, n_test) < 0 or n_train + n_dev + n_test <= 0:
        raise SynthError(f"bad sizes {sizes!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    domain_names = sorted((domains or DEFAULT_DOMAIN_WEIGHTS))
    weights = np.array([(domains or DEFAULT_DOMAIN_WEIGHTS)[d] for d in domain_names], dtype=float)
    weights = weights / weights.sum()

    counts: dict[str, int] = {}
    total = 0
    splits: dict[str, list[Sentence]] = {"train": [], "dev": [], "test": []}
    for split, n in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        for i in range(n):
            tpl = _pick_template(templates, counts, total, proportions, rng)
            for etype, c in tpl.slot_counts().items():
                counts[etype] = counts.get(etype, 0) + c
                total += c
            domain = domain_names[int(rng.choice(len(domain_names), p=weights))]
            meta = {
                "sent_id": f"synth-{split}-{i:04d}",
                "domain": domain,
                "source": f"synth-{split}-doc-{i // doc_size:03d}",
            }
            splits[split].append(_fill(tpl, vocab, rng, meta))
    corpus = build_corpus(splits["train"], splits["dev"], splits["test"], scheme=scheme)
    for sent in corpus.all_sentences():
        if not sent.spans:
            raise SynthError("generated sentence without an entity")
    return corpus
