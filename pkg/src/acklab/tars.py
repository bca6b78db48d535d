"""Label-verbalized task reformulation for zero- and few-shot tagging.

A k-class tagging task becomes k binary inside/outside tasks: the
natural-language label phrase is prepended to the sentence (separated by a
reserved token) and one shared binary tagger scores the sentence tokens.
Unseen label phrases are valid inputs, which is what enables zero-shot
prediction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from . import tensor as T
from .corpus import Corpus, Sentence, Span
from .tagger import MiniTransformerEncoder, TaggerError, build_vocab, check_label_coverage

SEP = "[SEP]"


class TarsError(TaggerError):
    pass


def load_verbalizations(path) -> dict[str, str]:
    """One LABEL<TAB>phrase entry per line."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TarsError(f"verbalization line {line_no}: expected LABEL<TAB>phrase")
            mapping[parts[0].strip()] = parts[1].strip()
    validate_verbalization(mapping)
    return mapping


def default_verbalizations() -> dict[str, str]:
    text = resources.files("acklab").joinpath("data/verbalizations.txt").read_text("utf-8")
    mapping = {}
    for line in text.splitlines():
        if line.strip():
            label, phrase = line.split("\t")
            mapping[label] = phrase
    validate_verbalization(mapping)
    return mapping


def validate_verbalization(mapping: dict[str, str]) -> None:
    if not mapping:
        raise TarsError("empty verbalization")
    phrases = list(mapping.values())
    if any(not p for p in phrases):
        raise TarsError("verbalization phrases must be nonempty")
    if len(set(phrases)) != len(phrases):
        raise TarsError("verbalization phrases must be pairwise distinct")


@dataclass
class BinaryInstance:
    label: str
    phrase: str
    sentence: Sentence
    targets: np.ndarray  # 0/1 per sentence token


def reformulate_sentences(sentences: list[Sentence], labels: list[str],
                          verbalization: dict[str, str]) -> list[BinaryInstance]:
    for label in labels:
        if label not in verbalization:
            raise TarsError(f"no verbalization for label {label!r}")
    instances: list[BinaryInstance] = []
    for sent in sentences:
        for label in labels:
            targets = np.zeros(len(sent), dtype=np.int64)
            for span in sent.spans:
                if span.label == label:
                    targets[span.start:span.end] = 1
            instances.append(BinaryInstance(label, verbalization[label], sent, targets))
    return instances


def reformulate(corpus: Corpus, verbalization: dict[str, str]) -> dict[str, list[BinaryInstance]]:
    """Per split: |labels| binary instances per sentence, where the instance
    for label L marks exactly the spans of type L."""
    labels = list(corpus.labels)
    return {split: reformulate_sentences(corpus.split(split), labels, verbalization)
            for split in Corpus.SPLITS}


@dataclass
class TarsConfig:
    model_dim: int = 48
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 96
    max_positions: int = 256

    def __post_init__(self):
        if self.model_dim % self.n_heads:
            raise TarsError("model_dim must be divisible by n_heads")


class TarsModel:
    """One shared binary tagger conditioned on a label phrase."""

    def __init__(self, config: TarsConfig, vocab: dict[str, int],
                 verbalization: dict[str, str], encoder: MiniTransformerEncoder,
                 scorer_w: T.Tensor, scorer_b: T.Tensor):
        self.config = config
        self.vocab = vocab
        self.verbalization = dict(verbalization)
        self.encoder = encoder
        self.scorer_w = scorer_w
        self.scorer_b = scorer_b

    @classmethod
    def build(cls, config: TarsConfig, vocab: dict[str, int],
              verbalization: dict[str, str], seed: int) -> "TarsModel":
        rng = T.default_rng(seed)
        encoder = MiniTransformerEncoder(len(vocab), config.model_dim, config.n_layers,
                                         config.n_heads, config.ffn_dim,
                                         config.max_positions, rng)
        scorer_w = T.parameter((config.model_dim, 2), rng, name="scorer/w")
        scorer_b = T.parameter((1, 2), rng, name="scorer/b", init="zeros")
        return cls(config, vocab, verbalization, encoder, scorer_w, scorer_b)

    def _composite_ids(self, phrase: str, sentence: Sentence) -> tuple[np.ndarray, int]:
        phrase_words = phrase.split()
        words = phrase_words + [SEP] + sentence.words
        if len(words) > self.config.max_positions:
            raise TarsError(f"composite sequence of {len(words)} tokens exceeds "
                            f"max_positions={self.config.max_positions}")
        ids = np.array([self.vocab.get(w, 0) for w in words], dtype=np.int64)
        return ids, len(phrase_words) + 1

    def binary_logits(self, phrase: str, sentence: Sentence) -> T.Tensor:
        """Inside/outside logits over the sentence region only."""
        ids, offset = self._composite_ids(phrase, sentence)
        enc = self.encoder.encode(ids)
        core = T.narrow(enc, 0, offset, offset + len(sentence))
        return T.add(T.matmul(core, self.scorer_w), self.scorer_b)

    def loss(self, instance: BinaryInstance) -> T.Tensor:
        n = len(instance.sentence)
        if n == 0:
            raise TarsError("cannot score an empty sentence")
        logits = self.binary_logits(instance.phrase, instance.sentence)
        onehot = np.zeros((n, 2))
        onehot[np.arange(n), instance.targets] = 1.0
        gold = T.sum_(T.mul(logits, T.Tensor(onehot)))
        total = T.add(T.sum_(T.logsumexp(logits, axis=1)), T.mul(gold, T.Tensor(-1.0)))
        return T.mul(total, T.Tensor(1.0 / n))

    def inside_probs(self, phrase: str, sentence: Sentence) -> np.ndarray:
        if not sentence.tokens:
            return np.zeros(0)
        logits = self.binary_logits(phrase, sentence).data
        m = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - m)
        return e[:, 1] / e.sum(axis=1)

    def named_parameters(self) -> dict[str, T.Tensor]:
        out = dict(self.encoder.params)
        out["scorer/w"] = self.scorer_w
        out["scorer/b"] = self.scorer_b
        return out

    def parameters(self) -> list[T.Tensor]:
        return list(self.named_parameters().values())

    def save(self, path) -> None:
        index_to_word = sorted(self.vocab, key=self.vocab.get)
        extras = {"vocab": index_to_word, "verbalization": self.verbalization}
        params = {k: v.data for k, v in self.named_parameters().items()}
        T.save_checkpoint(path, "tars", asdict(self.config),
                          sorted(self.verbalization), "binary", params, extras)

    @classmethod
    def load(cls, path) -> "TarsModel":
        ckpt = T.load_checkpoint(path)
        if ckpt.kind != "tars":
            raise TarsError(f"checkpoint kind {ckpt.kind!r} is not a tars model")
        config = TarsConfig(**ckpt.config)
        vocab = {w: i for i, w in enumerate(ckpt.extras["vocab"])}
        model = cls.build(config, vocab, ckpt.extras["verbalization"], seed=0)
        for name, tensor in model.named_parameters().items():
            tensor.data[...] = ckpt.params[name]
        return model


def train_tars(corpus: Corpus, verbalization: dict[str, str], config: TarsConfig,
               opt_cfg: T.OptimizerConfig, seed: int, epochs: int = 30,
               ) -> tuple[TarsModel, list[dict]]:
    """Few-shot training of the shared binary tagger: every label yields one
    binary instance per sentence (no negative subsampling, so runs are
    deterministic)."""
    check_label_coverage(corpus)
    labels = list(corpus.labels)
    instances = reformulate_sentences(corpus.train, labels, verbalization)
    phrase_words = [w for label in labels for w in verbalization[label].split()]
    vocab = build_vocab(corpus.train, extra=[SEP, *sorted(set(phrase_words))])
    model = TarsModel.build(config, vocab, {l: verbalization[l] for l in labels}, seed)

    rng = T.default_rng(seed + 7919)
    params = model.parameters()
    state = T.OptimizerState.for_config(opt_cfg)
    candidates = [(label, verbalization[label]) for label in labels]
    log: list[dict] = []
    best_f1 = -1.0
    best_params: dict[str, np.ndarray] | None = None
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(instances))
        total = 0.0
        for idx in order:
            with T.GradTape() as tape:
                loss = model.loss(instances[int(idx)])
            grads = T.backward(loss, tape)
            T.optimizer_step(params, grads, opt_cfg, state)
            total += loss.item()
        dev_f1 = _dev_micro_f1(model, corpus.dev, candidates) if corpus.dev else 0.0
        T.note_dev_score(state, dev_f1, opt_cfg)
        log.append({"epoch": epoch, "train_loss": total / len(instances),
                    "dev_f1": dev_f1, "lr": state.lr})
        if corpus.dev and dev_f1 > best_f1:
            best_f1 = dev_f1
            best_params = {n: p.data.copy() for n, p in model.named_parameters().items()}
    if best_params is not None:
        for name, tensor in model.named_parameters().items():
            tensor.data[...] = best_params[name]
    return model, log


def _dev_micro_f1(model: TarsModel, sentences: list[Sentence],
                  candidates: list[tuple[str, str]]) -> float:
    from .evaluation import score_spans

    preds = {}
    gold = []
    for i, sent in enumerate(sentences):
        sid = sent.sent_id or f"__idx-{i}"
        preds[sid] = tars_predict(model, sent, candidates)
        if sent.sent_id:
            gold.append(sent)
        else:
            clone = Sentence(sent.tokens, sent.spans, dict(sent.meta))
            clone.meta["sent_id"] = sid
            gold.append(clone)
    return score_spans(gold, preds).micro_f1


@dataclass
class CandidateSpan:
    span: Span
    confidence: float
    candidate_index: int


def aggregate_candidates(proposals: list[CandidateSpan]) -> list[Span]:
    """Resolve overlapping spans across candidate labels: highest confidence
    wins, ties go to the earlier candidate, then the earlier start."""
    chosen: list[Span] = []
    ordered = sorted(proposals, key=lambda p: (-p.confidence, p.candidate_index, p.span.start))
    for prop in ordered:
        if all(not prop.span.overlaps(c) for c in chosen):
            chosen.append(prop.span)
    return sorted(chosen)


def tars_predict(model: TarsModel, sentence: Sentence,
                 candidates: list[tuple[str, str]] | dict[str, str]) -> list[Span]:
    """Run the binary tagger once per candidate verbalization and aggregate
    inside-runs into non-overlapping spans. Candidates may be labels the
    model never saw in training (zero-shot)."""
    if isinstance(candidates, dict):
        candidates = list(candidates.items())
    if not candidates:
        raise TarsError("candidate list must be nonempty")
    proposals: list[CandidateSpan] = []
    for ci, (label, phrase) in enumerate(candidates):
        probs = model.inside_probs(phrase, sentence)
        start = None
        for i in range(len(probs) + 1):
            inside = i < len(probs) and probs[i] >= 0.5
            if inside and start is None:
                start = i
            elif not inside and start is not None:
                conf = float(probs[start:i].mean())
                proposals.append(CandidateSpan(Span(start, i, label), conf, ci))
                start = None
    return aggregate_candidates(proposals)
