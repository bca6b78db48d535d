"""Embedding sources: static word vectors, character-level bidirectional
language-model contextual string embeddings, and a stacking combinator.

The char LMs are byte-level (256 byte values plus stream start/end markers)
so any UTF-8 text embeds without out-of-vocabulary failures. Trained
embedders are frozen features for the taggers: extraction is plain numpy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .corpus import Sentence

log = logging.getLogger(__name__)

BYTE_VOCAB = 258
START_MARK = 256
END_MARK = 257


class EmbeddingError(Exception):
    pass


# ---------------------------------------------------------------------------
# Static word vectors


class StaticTable:
    """Frozen token → vector table; lookups lowercase the query token and
    misses embed to the zero vector."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self.vectors = vectors
        self.dim = dim
        self._zero = np.zeros(dim)

    def __len__(self) -> int:
        return len(self.vectors)

    def embed_token(self, token: str) -> np.ndarray:
        return self.vectors.get(token.lower(), self._zero)


def parse_static(text: str) -> StaticTable:
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(" ")
        token = parts[0]
        try:
            vec = np.array([float(p) for p in parts[1:] if p != ""], dtype=np.float64)
        except ValueError:
            raise EmbeddingError(f"line {line_no}: malformed vector") from None
        if dim is None:
            dim = vec.size
            if dim == 0:
                raise EmbeddingError(f"line {line_no}: no vector components")
        elif vec.size != dim:
            raise EmbeddingError(
                f"line {line_no}: dimension {vec.size} does not match table dimension {dim}")
        if token in vectors:
            log.warning("duplicate static entry %r (line %d): last wins", token, line_no)
        vectors[token] = vec
    if dim is None:
        raise EmbeddingError("no entries")
    return StaticTable(vectors, dim)


def load_static(path) -> StaticTable:
    """Read a text table: one `token v1 v2 ... vD` entry per line."""
    with open(path, encoding="utf-8") as fh:
        return parse_static(fh.read())


def random_static_table(words, dim: int, seed: int) -> StaticTable:
    """Seeded stand-in for pretrained word vectors: a fixed random vector per
    word (keys lowercased), deterministic for a given word set and seed."""
    rng = T.default_rng(seed)
    vectors: dict[str, np.ndarray] = {}
    for word in sorted({w.lower() for w in words}):
        vectors[word] = rng.normal(0.0, 0.4, size=dim)
    return StaticTable(vectors, dim)


class StaticEmbedder:
    def __init__(self, table: StaticTable):
        self.table = table
        self.dim = table.dim

    def embed(self, sentence: Sentence) -> np.ndarray:
        if not sentence.tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.table.embed_token(t.text) for t in sentence.tokens])

    def to_state(self) -> tuple[dict, dict[str, np.ndarray]]:
        words = sorted(self.table.vectors)
        matrix = np.stack([self.table.vectors[w] for w in words]) if words else np.zeros((0, self.dim))
        return {"type": "static", "dim": self.dim, "words": words}, {"vectors": matrix}

    @classmethod
    def from_state(cls, config: dict, params: dict[str, np.ndarray]) -> "StaticEmbedder":
        words = config["words"]
        matrix = params["vectors"]
        table = StaticTable({w: matrix[i] for i, w in enumerate(words)}, config["dim"])
        return cls(table)


# ---------------------------------------------------------------------------
# Character-level language models


@dataclass
class CharLMConfig:
    hidden_size: int = 64
    embed_dim: int = 16
    seq_len: int = 64
    batch_size: int = 16
    epochs: int = 5
    learning_rate: float = 5e-3
    clip_norm: float = 5.0
    holdout_fraction: float = 0.1
    seed: int = 0


def directional_stream(text: str, direction: str) -> np.ndarray:
    """Byte ids of the text in reading order for the given direction."""
    ids = np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)
    if direction == "backward":
        ids = ids[::-1].copy()
    elif direction != "forward":
        raise EmbeddingError(f"unknown direction {direction!r}")
    return ids


class CharLM:
    """LSTM over bytes with a next-character softmax head."""

    PARAM_NAMES = ("emb", "w", "b", "wo", "bo")

    def __init__(self, direction: str, config: CharLMConfig, params: dict[str, T.Tensor]):
        self.direction = direction
        self.config = config
        self.params = params
        self.hidden_size = config.hidden_size

    @classmethod
    def init(cls, direction: str, config: CharLMConfig) -> "CharLM":
        rng = T.default_rng(config.seed)
        h, e = config.hidden_size, config.embed_dim
        params = {
            "emb": T.parameter((BYTE_VOCAB, e), rng, name=f"charlm-{direction}/emb"),
            "w": T.parameter((e + h, 4 * h), rng, name=f"charlm-{direction}/w"),
            "b": T.parameter((1, 4 * h), rng, name=f"charlm-{direction}/b", init="zeros"),
            "wo": T.parameter((h, BYTE_VOCAB), rng, name=f"charlm-{direction}/wo"),
            "bo": T.parameter((1, BYTE_VOCAB), rng, name=f"charlm-{direction}/bo", init="zeros"),
        }
        # Positive forget-gate bias helps early training.
        params["b"].data[0, h:2 * h] = 1.0
        return cls(direction, config, params)

    def parameters(self) -> list[T.Tensor]:
        return [self.params[name] for name in self.PARAM_NAMES]

    def _step(self, x: T.Tensor, h: T.Tensor, c: T.Tensor) -> tuple[T.Tensor, T.Tensor]:
        hs = self.hidden_size
        pre = T.add(T.matmul(T.concat([x, h], axis=1), self.params["w"]), self.params["b"])
        i = T.sigmoid(T.narrow(pre, 1, 0, hs))
        f = T.sigmoid(T.narrow(pre, 1, hs, 2 * hs))
        g = T.tanh(T.narrow(pre, 1, 2 * hs, 3 * hs))
        o = T.sigmoid(T.narrow(pre, 1, 3 * hs, 4 * hs))
        c2 = T.add(T.mul(f, c), T.mul(i, g))
        h2 = T.mul(o, T.tanh(c2))
        return h2, c2

    def batch_loss(self, inputs: np.ndarray, targets: np.ndarray) -> T.Tensor:
        """Mean next-character cross-entropy over a (B, L) batch of ids."""
        bsz, length = inputs.shape
        h = T.Tensor(np.zeros((bsz, self.hidden_size)))
        c = T.Tensor(np.zeros((bsz, self.hidden_size)))
        total: T.Tensor | None = None
        rows = np.arange(bsz)
        for t in range(length):
            x = T.lookup(self.params["emb"], inputs[:, t])
            h, c = self._step(x, h, c)
            logits = T.add(T.matmul(h, self.params["wo"]), self.params["bo"])
            onehot = np.zeros((bsz, BYTE_VOCAB))
            onehot[rows, targets[:, t]] = 1.0
            gold = T.sum_(T.mul(logits, T.Tensor(onehot)))
            step_loss = T.add(T.sum_(T.logsumexp(logits, axis=1)), T.mul(gold, T.Tensor(-1.0)))
            total = step_loss if total is None else T.add(total, step_loss)
        return T.mul(total, T.Tensor(1.0 / (bsz * length)))

    def hidden_states(self, ids: np.ndarray) -> np.ndarray:
        """Plain-numpy forward pass: row t is the hidden state after
        consuming ids[t]."""
        hs = self.hidden_size
        emb = self.params["emb"].data
        w = self.params["w"].data
        b = self.params["b"].data[0]
        h = np.zeros(hs)
        c = np.zeros(hs)
        out = np.empty((len(ids), hs))
        for t, idx in enumerate(ids):
            z = np.concatenate([emb[idx], h])
            pre = z @ w + b
            i = _sigmoid(pre[:hs])
            f = _sigmoid(pre[hs:2 * hs])
            g = np.tanh(pre[2 * hs:3 * hs])
            o = _sigmoid(pre[3 * hs:])
            c = f * c + i * g
            h = o * np.tanh(c)
            out[t] = h
        return out

    def stream_cross_entropy(self, ids: np.ndarray) -> float:
        """Mean next-character cross-entropy of a byte stream (numpy only)."""
        if len(ids) < 2:
            raise EmbeddingError("stream too short to score")
        states = self.hidden_states(ids[:-1])
        logits = states @ self.params["wo"].data + self.params["bo"].data[0]
        m = logits.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
        gold = logits[np.arange(len(ids) - 1), ids[1:]]
        return float(np.mean(lse - gold))

    def to_state(self) -> tuple[dict, dict[str, np.ndarray]]:
        config = asdict(self.config)
        config.update({"type": "charlm", "direction": self.direction})
        return config, {name: self.params[name].data for name in self.PARAM_NAMES}

    @classmethod
    def from_state(cls, config: dict, params: dict[str, np.ndarray]) -> "CharLM":
        cfg = CharLMConfig(**{k: v for k, v in config.items() if k not in ("type", "direction")})
        tensors = {name: T.Tensor(params[name], requires_grad=True, name=f"charlm/{name}")
                   for name in cls.PARAM_NAMES}
        return cls(config["direction"], cfg, tensors)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def train_char_lm(text: str, direction: str, config: CharLMConfig) -> tuple[CharLM, list[dict]]:
    """Train a next-character LM on plain text; returns the model and a
    per-epoch log with train loss and held-out cross-entropy/perplexity."""
    if not text:
        raise EmbeddingError("empty corpus")
    stream = directional_stream(text, direction)
    n_holdout = max(2, int(len(stream) * config.holdout_fraction))
    if n_holdout >= len(stream):
        raise EmbeddingError("corpus too small for the held-out slice")
    train_ids = stream[:-n_holdout]
    holdout_ids = stream[-n_holdout:]

    model = CharLM.init(direction, config)
    rng = T.default_rng(config.seed + 1)
    opt_cfg = T.OptimizerConfig(algorithm="adaptive-moments",
                                learning_rate=config.learning_rate,
                                clip_norm=config.clip_norm)
    state = T.OptimizerState.for_config(opt_cfg)
    params = model.parameters()

    full = np.concatenate([[START_MARK], train_ids, [END_MARK]])
    length = config.seq_len
    windows = [full[s:s + length + 1] for s in range(0, len(full) - 1, length)]
    windows = [w for w in windows if len(w) == length + 1]
    if not windows:
        raise EmbeddingError("corpus shorter than one training window")

    history: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(windows))
        losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [windows[i] for i in order[start:start + config.batch_size]]
            batch = np.stack(chunk)
            with T.GradTape() as tape:
                loss = model.batch_loss(batch[:, :-1], batch[:, 1:])
            grads = T.backward(loss, tape)
            T.optimizer_step(params, grads, opt_cfg, state)
            losses.append(loss.item())
        holdout_ce = model.stream_cross_entropy(holdout_ids)
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "holdout_ce": holdout_ce,
            "holdout_ppl": math.exp(holdout_ce),
        })
    return model, history


# ---------------------------------------------------------------------------
# Contextual string embeddings


def embed_contextual(fwd: CharLM, bwd: CharLM, sentence: Sentence) -> np.ndarray:
    """Per-token vectors: the forward LM's hidden state after the token's
    last character concatenated with the backward LM's hidden state after
    the token's first character read right-to-left. Tokens are joined by
    single spaces into one character stream."""
    words = sentence.words
    dim = fwd.hidden_size + bwd.hidden_size
    if not words:
        return np.zeros((0, dim))
    byte_ids: list[int] = []
    starts: list[int] = []
    ends: list[int] = []
    for j, word in enumerate(words):
        if j:
            byte_ids.append(32)
        starts.append(len(byte_ids))
        byte_ids.extend(word.encode("utf-8"))
        ends.append(len(byte_ids))
    ids = np.array(byte_ids, dtype=np.int64)
    n = len(ids)
    fwd_states = fwd.hidden_states(np.concatenate([[START_MARK], ids]))
    bwd_states = bwd.hidden_states(np.concatenate([[START_MARK], ids[::-1]]))
    out = np.empty((len(words), dim))
    for i in range(len(words)):
        out[i, :fwd.hidden_size] = fwd_states[ends[i]]
        out[i, fwd.hidden_size:] = bwd_states[n - starts[i]]
    return out


class ContextualEmbedder:
    def __init__(self, fwd: CharLM, bwd: CharLM):
        self.fwd = fwd
        self.bwd = bwd
        self.dim = fwd.hidden_size + bwd.hidden_size

    def embed(self, sentence: Sentence) -> np.ndarray:
        return embed_contextual(self.fwd, self.bwd, sentence)

    def to_state(self) -> tuple[dict, dict[str, np.ndarray]]:
        fwd_cfg, fwd_params = self.fwd.to_state()
        bwd_cfg, bwd_params = self.bwd.to_state()
        config = {"type": "contextual", "fwd": fwd_cfg, "bwd": bwd_cfg}
        params = {f"fwd/{k}": v for k, v in fwd_params.items()}
        params.update({f"bwd/{k}": v for k, v in bwd_params.items()})
        return config, params

    @classmethod
    def from_state(cls, config: dict, params: dict[str, np.ndarray]) -> "ContextualEmbedder":
        fwd = CharLM.from_state(config["fwd"], {k[4:]: v for k, v in params.items() if k.startswith("fwd/")})
        bwd = CharLM.from_state(config["bwd"], {k[4:]: v for k, v in params.items() if k.startswith("bwd/")})
        return cls(fwd, bwd)


# ---------------------------------------------------------------------------
# Stacking


class EmbeddingStack:
    """Ordered embedders whose per-token outputs concatenate column-wise."""

    def __init__(self, embedders: list):
        if not embedders:
            raise EmbeddingError("stack needs at least one embedder")
        self.embedders = list(embedders)
        self.dim = sum(e.dim for e in embedders)

    def embed(self, sentence: Sentence) -> np.ndarray:
        if not sentence.tokens:
            return np.zeros((0, self.dim))
        return np.concatenate([e.embed(sentence) for e in self.embedders], axis=1)


def stack(embedders: list, sentence: Sentence) -> np.ndarray:
    """Embed one sentence with an ordered embedder stack: column blocks
    appear in embedder order and the width is the sum of member widths."""
    return EmbeddingStack(embedders).embed(sentence)


_STATE_TYPES = {"static": StaticEmbedder, "charlm": CharLM, "contextual": ContextualEmbedder}


def embedder_from_state(config: dict, params: dict[str, np.ndarray]):
    cls = _STATE_TYPES.get(config.get("type"))
    if cls is None:
        raise EmbeddingError(f"unknown embedder type {config.get('type')!r}")
    return cls.from_state(config, params)
