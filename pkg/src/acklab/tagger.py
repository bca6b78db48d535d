"""Sequence-labeling models.

Two families: a BiLSTM-CRF over a frozen embedding stack (the stacked
contextual-strings configuration), and a small self-attention encoder with
document-level context windows and a per-token softmax head (the fine-tune
configuration, which deliberately has no CRF decoder). Both share the CRF
math in crf.py and the tag codecs in corpus.py.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .corpus import Corpus, Sentence, Span, decode_tags, encode_tags
from .crf import CrfLayer, crf_nll, viterbi

UNK = "<unk>"
FAMILIES = ("flair-stack", "finetune")


class TaggerError(Exception):
    pass


class ConfigurationError(TaggerError):
    pass


@dataclass
class TaggerConfig:
    family: str = "flair-stack"
    scheme: str = "BIOES"
    hidden_size: int = 32          # BiLSTM units per direction
    model_dim: int = 64            # transformer width
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    context_window: int = 64       # tokens of document context per side
    max_positions: int = 512
    stack_dim: int | None = None   # expected stack width; checked at build

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown model family {self.family!r}")
        if self.model_dim % self.n_heads:
            raise ConfigurationError("model_dim must be divisible by n_heads")


def build_tag_inventory(labels, scheme: str) -> list[str]:
    prefixes = ("B", "I", "E", "S") if scheme == "BIOES" else ("B", "I")
    tags = ["O"]
    for label in sorted(labels):
        tags.extend(f"{p}-{label}" for p in prefixes)
    return tags


def build_vocab(sentences, extra=()) -> dict[str, int]:
    words = sorted({w for s in sentences for w in s.words})
    vocab = {UNK: 0}
    for w in words:
        vocab.setdefault(w, len(vocab))
    for w in extra:
        vocab.setdefault(w, len(vocab))
    return vocab


# ---------------------------------------------------------------------------
# Document context


@dataclass
class ContextWindow:
    left: list[str] = field(default_factory=list)
    right: list[str] = field(default_factory=list)


def with_document_context(sentences: list[Sentence], index: int,
                          window: int) -> tuple[Sentence, ContextWindow]:
    """Gather up to `window` neighbor tokens on each side of one sentence,
    truncating at the document edges."""
    if not (0 <= index < len(sentences)):
        raise TaggerError(f"sentence index {index} out of range for document of {len(sentences)}")
    left: list[str] = []
    for s in sentences[:index]:
        left.extend(s.words)
    right: list[str] = []
    for s in sentences[index + 1:]:
        right.extend(s.words)
    if window <= 0:
        return sentences[index], ContextWindow([], [])
    return sentences[index], ContextWindow(left[-window:], right[:window])


def build_context_map(sentences: list[Sentence], window: int) -> dict[str, ContextWindow]:
    """Context windows for every sentence, grouping documents by the
    `source` meta field (sentences without one stand alone)."""
    groups: dict[str, list[Sentence]] = {}
    for i, sent in enumerate(sentences):
        key = sent.meta.get("source") or f"__solo-{i}"
        groups.setdefault(key, []).append(sent)
    out: dict[str, ContextWindow] = {}
    for doc in groups.values():
        for i, sent in enumerate(doc):
            _, ctx = with_document_context(doc, i, window)
            key = sent.sent_id or f"__anon-{id(sent)}"
            out[key] = ctx
    return out


# ---------------------------------------------------------------------------
# Encoders


class BiLstmEncoder:
    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.hidden = hidden
        self.out_dim = 2 * hidden
        self.params = {}
        for direction in ("fwd", "bwd"):
            w = T.parameter((in_dim + hidden, 4 * hidden), rng, name=f"lstm-{direction}/w")
            b = T.parameter((1, 4 * hidden), rng, name=f"lstm-{direction}/b", init="zeros")
            b.data[0, hidden:2 * hidden] = 1.0
            self.params[f"lstm-{direction}/w"] = w
            self.params[f"lstm-{direction}/b"] = b

    def _run(self, rows: list[T.Tensor], w: T.Tensor, b: T.Tensor) -> list[T.Tensor]:
        hs = self.hidden
        h = T.Tensor(np.zeros((1, hs)))
        c = T.Tensor(np.zeros((1, hs)))
        out = []
        for x in rows:
            pre = T.add(T.matmul(T.concat([x, h], axis=1), w), b)
            i = T.sigmoid(T.narrow(pre, 1, 0, hs))
            f = T.sigmoid(T.narrow(pre, 1, hs, 2 * hs))
            g = T.tanh(T.narrow(pre, 1, 2 * hs, 3 * hs))
            o = T.sigmoid(T.narrow(pre, 1, 3 * hs, 4 * hs))
            c = T.add(T.mul(f, c), T.mul(i, g))
            h = T.mul(o, T.tanh(c))
            out.append(h)
        return out

    def forward(self, feats: np.ndarray) -> T.Tensor:
        x = T.Tensor(feats)
        n = feats.shape[0]
        rows = [T.narrow(x, 0, i, i + 1) for i in range(n)]
        hs_f = self._run(rows, self.params["lstm-fwd/w"], self.params["lstm-fwd/b"])
        hs_b = self._run(rows[::-1], self.params["lstm-bwd/w"], self.params["lstm-bwd/b"])[::-1]
        return T.concat([T.concat([f, b], axis=1) for f, b in zip(hs_f, hs_b)], axis=0)


class MiniTransformerEncoder:
    """Self-attention encoder: learned token and position embeddings, then
    n_layers of multi-head attention and a tanh feed-forward block, each
    with a residual connection and layer norm."""

    def __init__(self, vocab_size: int, model_dim: int, n_layers: int, n_heads: int,
                 ffn_dim: int, max_positions: int, rng: np.random.Generator):
        self.model_dim = model_dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.head_dim = model_dim // n_heads
        self.max_positions = max_positions
        self.out_dim = model_dim
        p: dict[str, T.Tensor] = {}
        p["tok_emb"] = T.parameter((vocab_size, model_dim), rng, name="enc/tok_emb")
        p["pos_emb"] = T.parameter((max_positions, model_dim), rng, name="enc/pos_emb")
        for l in range(n_layers):
            for name in ("wq", "wk", "wv", "wo"):
                p[f"l{l}/{name}"] = T.parameter((model_dim, model_dim), rng, name=f"enc/l{l}/{name}")
            p[f"l{l}/ln1_g"] = T.parameter((1, model_dim), rng, name=f"enc/l{l}/ln1_g", init="ones")
            p[f"l{l}/ln1_b"] = T.parameter((1, model_dim), rng, name=f"enc/l{l}/ln1_b", init="zeros")
            p[f"l{l}/ffn_w1"] = T.parameter((model_dim, ffn_dim), rng, name=f"enc/l{l}/ffn_w1")
            p[f"l{l}/ffn_b1"] = T.parameter((1, ffn_dim), rng, name=f"enc/l{l}/ffn_b1", init="zeros")
            p[f"l{l}/ffn_w2"] = T.parameter((ffn_dim, model_dim), rng, name=f"enc/l{l}/ffn_w2")
            p[f"l{l}/ffn_b2"] = T.parameter((1, model_dim), rng, name=f"enc/l{l}/ffn_b2", init="zeros")
            p[f"l{l}/ln2_g"] = T.parameter((1, model_dim), rng, name=f"enc/l{l}/ln2_g", init="ones")
            p[f"l{l}/ln2_b"] = T.parameter((1, model_dim), rng, name=f"enc/l{l}/ln2_b", init="zeros")
        self.params = p

    def _layer_norm(self, x: T.Tensor, g: T.Tensor, b: T.Tensor) -> T.Tensor:
        d = self.model_dim
        mu = T.mul(T.sum_(x, axis=1, keepdims=True), T.Tensor(1.0 / d))
        xc = T.add(x, T.mul(mu, T.Tensor(-1.0)))
        var = T.mul(T.sum_(T.mul(xc, xc), axis=1, keepdims=True), T.Tensor(1.0 / d))
        xn = T.div(xc, T.sqrt(T.add(var, T.Tensor(1e-5))))
        return T.add(T.mul(xn, g), b)

    def _attention(self, x: T.Tensor, layer: int) -> T.Tensor:
        p = self.params
        q = T.matmul(x, p[f"l{layer}/wq"])
        k = T.matmul(x, p[f"l{layer}/wk"])
        v = T.matmul(x, p[f"l{layer}/wv"])
        scale = T.Tensor(1.0 / np.sqrt(self.head_dim))
        heads = []
        for h in range(self.n_heads):
            lo, hi = h * self.head_dim, (h + 1) * self.head_dim
            qh = T.narrow(q, 1, lo, hi)
            kh = T.narrow(k, 1, lo, hi)
            vh = T.narrow(v, 1, lo, hi)
            scores = T.mul(T.matmul(qh, T.transpose(kh)), scale)
            heads.append(T.matmul(T.softmax(scores, axis=-1), vh))
        return T.matmul(T.concat(heads, axis=1), p[f"l{layer}/wo"])

    def encode(self, ids) -> T.Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        n = len(ids)
        if n > self.max_positions:
            raise TaggerError(f"sequence of {n} tokens exceeds max_positions={self.max_positions}")
        p = self.params
        x = T.add(T.lookup(p["tok_emb"], ids), T.lookup(p["pos_emb"], np.arange(n)))
        for l in range(self.n_layers):
            x = self._layer_norm(T.add(x, self._attention(x, l)),
                                 p[f"l{l}/ln1_g"], p[f"l{l}/ln1_b"])
            hidden = T.tanh(T.add(T.matmul(x, p[f"l{l}/ffn_w1"]), p[f"l{l}/ffn_b1"]))
            ffn = T.add(T.matmul(hidden, p[f"l{l}/ffn_w2"]), p[f"l{l}/ffn_b2"])
            x = self._layer_norm(T.add(x, ffn), p[f"l{l}/ln2_g"], p[f"l{l}/ln2_b"])
        return x


# ---------------------------------------------------------------------------
# Tagger model


@dataclass
class Prediction:
    spans: list[Span]
    repairs: int = 0
    tags: list[str] = field(default_factory=list)


class TaggerModel:
    def __init__(self, config: TaggerConfig, entity_labels: list[str], encoder,
                 emission_w: T.Tensor, emission_b: T.Tensor, crf: CrfLayer | None,
                 stack=None, vocab: dict[str, int] | None = None):
        self.config = config
        self.entity_labels = list(entity_labels)
        self.tags = build_tag_inventory(entity_labels, config.scheme)
        self.tag_to_idx = {t: i for i, t in enumerate(self.tags)}
        self.encoder = encoder
        self.emission_w = emission_w
        self.emission_b = emission_b
        self.crf = crf
        self.stack = stack
        self.vocab = vocab

    @classmethod
    def build(cls, config: TaggerConfig, entity_labels: list[str], seed: int,
              stack=None, vocab: dict[str, int] | None = None) -> "TaggerModel":
        rng = T.default_rng(seed)
        k = len(build_tag_inventory(entity_labels, config.scheme))
        if config.family == "flair-stack":
            if stack is None:
                raise ConfigurationError("flair-stack model needs an embedding stack")
            in_dim = config.stack_dim if config.stack_dim is not None else stack.dim
            if in_dim != stack.dim:
                raise ConfigurationError(
                    f"embedding stack is {stack.dim}-dimensional but the encoder expects {in_dim}")
            encoder = BiLstmEncoder(in_dim, config.hidden_size, rng)
            crf = CrfLayer(k, rng)
        else:
            if vocab is None:
                raise ConfigurationError("finetune model needs a token vocabulary")
            encoder = MiniTransformerEncoder(len(vocab), config.model_dim, config.n_layers,
                                             config.n_heads, config.ffn_dim,
                                             config.max_positions, rng)
            crf = None
        emission_w = T.parameter((encoder.out_dim, k), rng, name="emission/w")
        emission_b = T.parameter((1, k), rng, name="emission/b", init="zeros")
        return cls(config, entity_labels, encoder, emission_w, emission_b, crf,
                   stack=stack, vocab=vocab)

    # -- forward ------------------------------------------------------------

    def _token_ids(self, sentence: Sentence, context: ContextWindow | None) -> tuple[np.ndarray, int]:
        left = list(context.left) if context else []
        right = list(context.right) if context else []
        n_core = len(sentence)
        budget = self.config.max_positions - n_core
        if budget < 0:
            raise TaggerError(f"sentence of {n_core} tokens exceeds max_positions")
        if len(left) + len(right) > budget:
            half = budget // 2
            left = left[-half:] if half else []
            right = right[:budget - len(left)]
        words = left + sentence.words + right
        ids = np.array([self.vocab.get(w, 0) for w in words], dtype=np.int64)
        return ids, len(left)

    def encode_tokens(self, sentence: Sentence, context: ContextWindow | None = None) -> T.Tensor:
        """Encoder output rows for the core sentence's tokens."""
        if self.config.family == "flair-stack":
            feats = self.stack.embed(sentence)
            return self.encoder.forward(feats)
        ids, offset = self._token_ids(sentence, context)
        enc = self.encoder.encode(ids)
        return T.narrow(enc, 0, offset, offset + len(sentence))

    def emissions(self, sentence: Sentence, context: ContextWindow | None = None) -> T.Tensor:
        """Per-token tag scores, shape (len(sentence), n_tags)."""
        enc = self.encode_tokens(sentence, context)
        return T.add(T.matmul(enc, self.emission_w), self.emission_b)

    def gold_tag_ids(self, sentence: Sentence) -> list[int]:
        ids = []
        for tag in encode_tags(sentence, self.config.scheme):
            if tag not in self.tag_to_idx:
                raise TaggerError(f"tag {tag!r} not in the model inventory")
            ids.append(self.tag_to_idx[tag])
        return ids

    def loss(self, sentence: Sentence, context: ContextWindow | None = None) -> T.Tensor:
        if not sentence.tokens:
            raise TaggerError("cannot score an empty sentence")
        gold = self.gold_tag_ids(sentence)
        e = self.emissions(sentence, context)
        if self.crf is not None:
            return crf_nll(e, self.crf.transitions, gold)
        n, k = e.shape
        onehot = np.zeros((n, k))
        onehot[np.arange(n), gold] = 1.0
        gold_score = T.sum_(T.mul(e, T.Tensor(onehot)))
        total = T.add(T.sum_(T.logsumexp(e, axis=1)), T.mul(gold_score, T.Tensor(-1.0)))
        return T.mul(total, T.Tensor(1.0 / n))

    def predict(self, sentence: Sentence, context: ContextWindow | None = None) -> Prediction:
        """Viterbi (or per-tag argmax) decoding into valid non-overlapping
        spans; codec repairs are counted in the prediction metadata."""
        if not sentence.tokens:
            return Prediction([], 0, [])
        e = self.emissions(sentence, context).data
        if self.crf is not None:
            path, _ = viterbi(e, self.crf.transitions.data)
        else:
            path = [int(i) for i in np.argmax(e, axis=1)]
        tag_strs = [self.tags[i] for i in path]
        spans, repairs = decode_tags(tag_strs, self.config.scheme)
        return Prediction(sorted(spans), repairs, tag_strs)

    # -- parameters and persistence ------------------------------------------

    def named_parameters(self) -> dict[str, T.Tensor]:
        out = dict(self.encoder.params)
        out["emission/w"] = self.emission_w
        out["emission/b"] = self.emission_b
        if self.crf is not None:
            out["crf/transitions"] = self.crf.transitions
        return out

    def parameters(self) -> list[T.Tensor]:
        return list(self.named_parameters().values())

    def save(self, path) -> None:
        params: dict[str, np.ndarray] = {k: v.data for k, v in self.named_parameters().items()}
        extras: dict = {}
        if self.vocab is not None:
            index_to_word = sorted(self.vocab, key=self.vocab.get)
            extras["vocab"] = index_to_word
        if self.stack is not None:
            embedder_configs = []
            for i, emb in enumerate(self.stack.embedders):
                cfg, st = emb.to_state()
                embedder_configs.append(cfg)
                for name, arr in st.items():
                    params[f"embedder{i}/{name}"] = arr
            extras["embedders"] = embedder_configs
        T.save_checkpoint(path, self.config.family, asdict(self.config),
                          self.entity_labels, self.config.scheme, params, extras)

    @classmethod
    def load(cls, path) -> "TaggerModel":
        from .embeddings import EmbeddingStack, embedder_from_state

        ckpt = T.load_checkpoint(path)
        config = TaggerConfig(**ckpt.config)
        stack = None
        vocab = None
        if "embedders" in ckpt.extras:
            embedders = []
            for i, cfg in enumerate(ckpt.extras["embedders"]):
                prefix = f"embedder{i}/"
                st = {k[len(prefix):]: v for k, v in ckpt.params.items() if k.startswith(prefix)}
                embedders.append(embedder_from_state(cfg, st))
            stack = EmbeddingStack(embedders)
        if "vocab" in ckpt.extras:
            vocab = {w: i for i, w in enumerate(ckpt.extras["vocab"])}
        model = cls.build(config, ckpt.labels, seed=0, stack=stack, vocab=vocab)
        for name, tensor in model.named_parameters().items():
            if name not in ckpt.params:
                raise TaggerError(f"checkpoint is missing parameter {name!r}")
            if tuple(ckpt.params[name].shape) != tensor.shape:
                raise TaggerError(f"checkpoint parameter {name!r} has shape "
                                  f"{ckpt.params[name].shape}, expected {tensor.shape}")
            tensor.data[...] = ckpt.params[name]
        return model


class TransformerEmbedder:
    """Frozen per-token features from a trained finetune-family tagger, for
    stacking contextual string embeddings with transformer outputs."""

    def __init__(self, model: TaggerModel, context_map: dict[str, ContextWindow] | None = None):
        if model.config.family != "finetune":
            raise ConfigurationError("TransformerEmbedder wraps a finetune-family model")
        self.model = model
        self.context_map = context_map or {}
        self.dim = model.config.model_dim

    def embed(self, sentence: Sentence) -> np.ndarray:
        ctx = self.context_map.get(sentence.sent_id)
        return self.model.encode_tokens(sentence, ctx).data

    def to_state(self) -> tuple[dict, dict[str, np.ndarray]]:
        raise TaggerError("TransformerEmbedder stacks are rebuilt from their experiment "
                          "config; save the underlying finetune model instead")


# ---------------------------------------------------------------------------
# Training


def check_label_coverage(corpus: Corpus) -> list[str]:
    """The tag inventory is built from all splits, but a label that dev or
    test has and train lacks cannot be learned; that is a data error."""
    if not corpus.train:
        raise TaggerError("training split is empty")
    train_labels = {sp.label for s in corpus.train for sp in s.spans}
    for name in ("dev", "test"):
        extra = {sp.label for s in corpus.split(name) for sp in s.spans} - train_labels
        if extra:
            raise TaggerError(f"labels {sorted(extra)} appear in {name} but not in train")
    return sorted(train_labels)


def micro_f1_of(model, sentences: list[Sentence],
                context_map: dict[str, ContextWindow] | None = None) -> float:
    from .evaluation import score_spans

    preds = {}
    for i, sent in enumerate(sentences):
        sid = sent.sent_id or f"__idx-{i}"
        ctx = (context_map or {}).get(sent.sent_id)
        preds[sid] = model.predict(sent, ctx).spans
    gold = []
    for i, sent in enumerate(sentences):
        if sent.sent_id:
            gold.append(sent)
        else:
            clone = Sentence(sent.tokens, sent.spans, dict(sent.meta))
            clone.meta["sent_id"] = f"__idx-{i}"
            gold.append(clone)
    return score_spans(gold, preds).micro_f1


def train(config: TaggerConfig, corpus: Corpus, opt_cfg: T.OptimizerConfig, seed: int,
          epochs: int = 50, stack=None, stop_at_train_f1: float | None = None,
          ) -> tuple[TaggerModel, list[dict]]:
    """Train a tagger on the corpus train split with per-epoch dev scoring.

    The best-dev parameters are restored at the end; the log has one entry
    per epoch with train loss, dev micro-F1 and the current base learning
    rate. Deterministic for a given seed.
    """
    labels = check_label_coverage(corpus)
    vocab = build_vocab(corpus.train) if config.family == "finetune" else None
    model = TaggerModel.build(config, labels, seed, stack=stack, vocab=vocab)

    contexts: dict[str, ContextWindow] = {}
    if config.family == "finetune" and config.context_window > 0:
        for split in Corpus.SPLITS:
            contexts.update(build_context_map(corpus.split(split), config.context_window))

    rng = T.default_rng(seed + 7919)
    params = model.parameters()
    state = T.OptimizerState.for_config(opt_cfg)
    log: list[dict] = []
    best_f1 = -1.0
    best_params: dict[str, np.ndarray] | None = None

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(corpus.train))
        total = 0.0
        for idx in order:
            sent = corpus.train[int(idx)]
            ctx = contexts.get(sent.sent_id)
            with T.GradTape() as tape:
                loss = model.loss(sent, ctx)
            grads = T.backward(loss, tape)
            T.optimizer_step(params, grads, opt_cfg, state)
            total += loss.item()
        entry = {"epoch": epoch, "train_loss": total / len(corpus.train)}
        dev_f1 = micro_f1_of(model, corpus.dev, contexts) if corpus.dev else 0.0
        T.note_dev_score(state, dev_f1, opt_cfg)
        entry["dev_f1"] = dev_f1
        entry["lr"] = state.lr
        if corpus.dev and dev_f1 > best_f1:
            best_f1 = dev_f1
            best_params = {n: p.data.copy() for n, p in model.named_parameters().items()}
        if stop_at_train_f1 is not None:
            train_f1 = micro_f1_of(model, corpus.train, contexts)
            entry["train_f1"] = train_f1
            log.append(entry)
            if train_f1 >= stop_at_train_f1:
                break
        else:
            log.append(entry)
    if best_params is not None and stop_at_train_f1 is None:
        for name, tensor in model.named_parameters().items():
            tensor.data[...] = best_params[name]
    return model, log
