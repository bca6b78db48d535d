"""Minimal dense-tensor arithmetic with reverse-mode autodiff and optimizers.

Everything is double precision and deterministic under a seed. The numeric
kernels are numpy; the computation graph, gradients, optimizers and the
checkpoint container live here. Desk-scale models only: no GPU, no mixed
precision, no graph rewriting.
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np


class TensorError(Exception):
    """Base class for errors raised by this module."""


class ShapeMismatchError(TensorError):
    def __init__(self, kind: str, shape_a, shape_b):
        self.kind = kind
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        super().__init__(f"{kind}: incompatible shapes {self.shape_a} and {self.shape_b}")


class LookupRangeError(TensorError):
    def __init__(self, index: int, table_rows: int):
        self.index = index
        self.table_rows = table_rows
        super().__init__(f"lookup index {index} out of range for table with {table_rows} rows")


class TapeReuseError(TensorError):
    pass


class NonFiniteError(TensorError):
    pass


_node_ids = itertools.count(1)
_tls = threading.local()


def _active_tape() -> "GradTape | None":
    return getattr(_tls, "tape", None)


class Tensor:
    """A dense float64 array node, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "node_id", "name", "tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self.name = name
        self.tape: "GradTape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the payload."""
        return self.data.ravel()

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # Operator sugar; everything routes through the primitives below.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __sub__(self, other):
        other = _as_tensor(other)
        return add(self, mul(other, Tensor(-1.0)))

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, Tensor(-1.0))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    out_id: int
    input_ids: tuple[int, ...]
    backward_fn: Callable[[np.ndarray, dict[int, np.ndarray]], None]


class GradTape:
    """Ordered record of primitive applications for one backward pass.

    Use as a context manager; the tape is thread-local, so concurrent
    sessions on disjoint models each own their own tape. A tape can be
    traversed exactly once.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._consumed = False
        self._leaf_ids: set[int] = set()
        self._out_ids: set[int] = set()

    def __enter__(self) -> "GradTape":
        if _active_tape() is not None:
            raise TensorError("a GradTape is already active in this thread")
        _tls.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _tls.tape = None
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward_fn) -> None:
        ids = tuple(t.node_id for t in inputs)
        for t in inputs:
            if t.requires_grad and t.node_id not in self._out_ids:
                self._leaf_ids.add(t.node_id)
        self._out_ids.add(out.node_id)
        self._records.append(_Record(out.node_id, ids, backward_fn))


def backward(loss: Tensor, tape: GradTape | None = None) -> dict[int, Tensor]:
    """Traverse the tape once and return gradients for every leaf parameter.

    The mapping is keyed by node_id; gradients have the shape of their
    parameter. The tape's graph and saved activations are released after
    the traversal, so a second call on the same tape raises.
    """
    if loss.data.size != 1:
        raise TensorError(f"backward expects a scalar loss, got shape {loss.shape}")
    tape = tape if tape is not None else loss.tape
    if tape is None:
        raise TensorError("loss was not recorded on any tape")
    if tape._consumed:
        raise TapeReuseError("backward already ran on this tape")
    if not tape._records:
        raise TensorError("tape is empty")
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for rec in reversed(tape._records):
        g_out = grads.pop(rec.out_id, None)
        if g_out is None:
            continue
        rec.backward_fn(g_out, grads)
    leaf_grads = {nid: Tensor(g) for nid, g in grads.items() if nid in tape._leaf_ids}
    tape._records.clear()
    tape._consumed = True
    return leaf_grads


def _accumulate(grads: dict[int, np.ndarray], t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    prev = grads.get(t.node_id)
    if prev is None:
        # Own our copy: gradients may be views or shared between siblings.
        grads[t.node_id] = np.array(g)
    else:
        prev += g


def _make(out_data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = _active_tape()
    if requires and tape is not None:
        out.tape = tape
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    out = a.data @ b.data
    a_data, b_data = a.data, b.data

    def bwd(g, grads):
        _accumulate(grads, a, g @ b_data.T)
        _accumulate(grads, b, a_data.T @ g)

    return _make(out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatchError("add", a.shape, b.shape) from None
    a_shape, b_shape = a.shape, b.shape

    def bwd(g, grads):
        _accumulate(grads, a, _unbroadcast(g, a_shape))
        _accumulate(grads, b, _unbroadcast(g, b_shape))

    return _make(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatchError("mul", a.shape, b.shape) from None
    a_data, b_data = a.data, b.data

    def bwd(g, grads):
        _accumulate(grads, a, _unbroadcast(g * b_data, a_data.shape))
        _accumulate(grads, b, _unbroadcast(g * a_data, b_data.shape))

    return _make(out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data / b.data
    except ValueError:
        raise ShapeMismatchError("div", a.shape, b.shape) from None
    a_data, b_data = a.data, b.data

    def bwd(g, grads):
        _accumulate(grads, a, _unbroadcast(g / b_data, a_data.shape))
        _accumulate(grads, b, _unbroadcast(-g * a_data / (b_data * b_data), b_data.shape))

    return _make(out, (a, b), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise TensorError("concat of zero tensors")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", tensors[0].shape, tensors[-1].shape) from None
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, grads):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(grads, t, g[tuple(idx)])

    return _make(out, tensors, bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(g, grads):
        _accumulate(grads, x, g * (1.0 - y * y))

    return _make(y, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def bwd(g, grads):
        _accumulate(grads, x, g * y * (1.0 - y))

    return _make(y, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g, grads):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(grads, x, (g - inner) * y)

    return _make(y, (x,), bwd)


def logsumexp(x: Tensor, axis: int | None = None) -> Tensor:
    """Max-shifted log-sum-exp over one axis, or over all elements if axis is None."""
    m = np.max(x.data, axis=axis, keepdims=True)
    out_k = m + np.log(np.sum(np.exp(x.data - m), axis=axis, keepdims=True))
    s = np.exp(x.data - out_k)
    out = np.squeeze(out_k, axis=axis) if axis is not None else out_k.reshape(())

    def bwd(g, grads):
        if axis is None:
            _accumulate(grads, x, g * s)
        else:
            _accumulate(grads, x, np.expand_dims(g, axis) * s)

    return _make(out, (x,), bwd)


def lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D table; gradient scatters back into the table."""
    idx = np.asarray(indices, dtype=np.int64)
    rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        bad = int(idx.min()) if idx.min() < 0 else int(idx.max())
        raise LookupRangeError(bad, rows)
    out = table.data[idx]

    def bwd(g, grads):
        if not table.requires_grad:
            return
        full = grads.get(table.node_id)
        if full is None:
            full = np.zeros_like(table.data)
            grads[table.node_id] = full
        np.add.at(full, idx, g)

    return _make(out, (table,), bwd)


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Slice along one axis, keeping all other axes intact."""
    dim = x.shape[axis]
    if not (0 <= start < stop <= dim):
        raise TensorError(f"slice [{start}:{stop}] out of bounds for axis {axis} of size {dim}")
    key = [slice(None)] * x.data.ndim
    key[axis] = slice(start, stop)
    key = tuple(key)
    out = x.data[key]

    def bwd(g, grads):
        if not x.requires_grad:
            return
        full = grads.get(x.node_id)
        if full is None:
            full = np.zeros_like(x.data)
            grads[x.node_id] = full
        full[key] += g

    return _make(out, (x,), bwd)


def sum_(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)
    shape = x.shape

    def bwd(g, grads):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(grads, x, np.broadcast_to(g, shape).copy())

    return _make(out, (x,), bwd)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    new_shape = tuple(shape)
    out = x.data.reshape(new_shape)
    old_shape = x.shape

    def bwd(g, grads):
        _accumulate(grads, x, g.reshape(old_shape))

    return _make(out, (x,), bwd)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatchError("transpose", x.shape, x.shape)
    out = x.data.T

    def bwd(g, grads):
        _accumulate(grads, x, g.T)

    return _make(out, (x,), bwd)


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)

    def bwd(g, grads):
        _accumulate(grads, x, g * 0.5 / y)

    return _make(y, (x,), bwd)


_PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": lambda inputs, **kw: matmul(*inputs),
    "add": lambda inputs, **kw: add(*inputs),
    "mul": lambda inputs, **kw: mul(*inputs),
    "div": lambda inputs, **kw: div(*inputs),
    "concat": lambda inputs, **kw: concat(inputs, **kw),
    "tanh": lambda inputs, **kw: tanh(*inputs),
    "sigmoid": lambda inputs, **kw: sigmoid(*inputs),
    "softmax": lambda inputs, **kw: softmax(*inputs, **kw),
    "logsumexp": lambda inputs, **kw: logsumexp(*inputs, **kw),
    "lookup": lambda inputs, **kw: lookup(*inputs, **kw),
    "slice": lambda inputs, **kw: narrow(*inputs, **kw),
    "sum": lambda inputs, **kw: sum_(*inputs, **kw),
    "reshape": lambda inputs, **kw: reshape(*inputs, **kw),
    "transpose": lambda inputs, **kw: transpose(*inputs),
    "sqrt": lambda inputs, **kw: sqrt(*inputs),
}


def apply_primitive(kind: str, inputs: Sequence[Tensor], **kwargs) -> Tensor:
    """Dispatch a primitive by name. Output is recorded on the active tape
    whenever any input requires grad."""
    fn = _PRIMITIVES.get(kind)
    if fn is None:
        raise TensorError(f"unknown primitive kind {kind!r}")
    return fn(list(inputs), **kwargs)


# ---------------------------------------------------------------------------
# Initialization and RNG


def default_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def parameter(shape: Sequence[int], rng: np.random.Generator, name: str | None = None,
              init: str = "xavier") -> Tensor:
    """Create a trainable tensor. Weight matrices get seeded xavier-uniform
    values; pass init="zeros" for biases."""
    shape = tuple(shape)
    if init == "zeros":
        data = np.zeros(shape)
    elif init == "ones":
        data = np.ones(shape)
    elif init == "xavier":
        fan_in = shape[0] if len(shape) > 1 else shape[0]
        fan_out = shape[-1]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        data = rng.uniform(-limit, limit, size=shape)
    else:
        raise TensorError(f"unknown init {init!r}")
    return Tensor(data, requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4) -> float:
    """Compare the analytic gradient of f against central finite differences.

    f must be a deterministic closure over params returning a scalar Tensor.
    Returns the worst element-wise relative error, with a 1e-8 absolute
    floor in the denominator.
    """
    if eps <= 0:
        raise TensorError("eps must be positive")
    with GradTape() as tape:
        loss = f()
    grads = backward(loss, tape)
    worst = 0.0
    for pi, p in enumerate(params):
        analytic = grads.get(p.node_id)
        a = analytic.data if analytic is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = f().item()
            flat[j] = orig - eps
            fm = f().item()
            flat[j] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NonFiniteError(f"f is non-finite when perturbing parameter {pi} element {j}")
            numeric = (fp - fm) / (2.0 * eps)
            rel = abs(a_flat[j] - numeric) / max(abs(a_flat[j]), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# Optimizers


@dataclass
class OptimizerConfig:
    """Training hyperparameters.

    algorithm "sgd" is the default for CRF taggers (lr 0.1, halve on a dev
    plateau of `patience` epochs); "adaptive-moments" is the fine-tune
    default (small lr, optional linear warmup and decay).
    """

    algorithm: str = "sgd"
    learning_rate: float = 0.1
    anneal_factor: float = 0.5
    patience: int = 3
    clip_norm: float | None = None
    warmup_steps: int = 0
    decay_steps: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adaptive-moments"):
            raise TensorError(f"unknown optimizer algorithm {self.algorithm!r}")
        if self.learning_rate <= 0:
            raise TensorError("learning_rate must be > 0")
        if not (0.0 < self.anneal_factor <= 1.0):
            raise TensorError("anneal_factor must be in (0, 1]")
        if self.patience < 0:
            raise TensorError("patience must be >= 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise TensorError("clip_norm must be > 0")


@dataclass
class OptimizerState:
    """Mutable per-run state: the annealed base learning rate (which never
    increases during a run), step counter, plateau bookkeeping and
    adaptive-moment accumulators."""

    lr: float
    step: int = 0
    best_score: float | None = None
    bad_epochs: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_config(cls, cfg: OptimizerConfig) -> "OptimizerState":
        return cls(lr=cfg.learning_rate)

    def effective_lr(self, cfg: OptimizerConfig) -> float:
        lr = self.lr
        if cfg.warmup_steps and self.step < cfg.warmup_steps:
            lr *= (self.step + 1) / cfg.warmup_steps
        elif cfg.decay_steps:
            done = min(max(self.step - cfg.warmup_steps, 0), cfg.decay_steps)
            lr *= 1.0 - done / cfg.decay_steps
        return lr


def clip_gradients(grad_arrays: Sequence[np.ndarray], clip_norm: float) -> None:
    total = math.sqrt(sum(float((g * g).sum()) for g in grad_arrays))
    if total > clip_norm:
        scale = clip_norm / total
        for g in grad_arrays:
            g *= scale


def optimizer_step(params: Sequence[Tensor], grads: dict[int, Tensor],
                   cfg: OptimizerConfig, state: OptimizerState) -> OptimizerState:
    """Update params in place from their gradient entries and advance state."""
    arrays = []
    for p in params:
        entry = grads.get(p.node_id)
        if entry is None:
            raise TensorError(f"missing gradient for parameter {p.name or p.node_id}")
        g = entry.data if isinstance(entry, Tensor) else np.asarray(entry, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {p.name or p.node_id}")
        arrays.append(np.array(g, copy=True))
    if cfg.clip_norm is not None:
        clip_gradients(arrays, cfg.clip_norm)
    lr = state.effective_lr(cfg)
    if cfg.algorithm == "sgd":
        for p, g in zip(params, arrays):
            p.data -= lr * g
    else:
        t = state.step + 1
        for p, g in zip(params, arrays):
            m = state.m.setdefault(p.node_id, np.zeros_like(p.data))
            v = state.v.setdefault(p.node_id, np.zeros_like(p.data))
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            m_hat = m / (1.0 - cfg.beta1 ** t)
            v_hat = v / (1.0 - cfg.beta2 ** t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    state.step += 1
    return state


def note_dev_score(state: OptimizerState, score: float, cfg: OptimizerConfig) -> OptimizerState:
    """Plateau annealing: halve (by anneal_factor) the base learning rate when
    the dev score has not improved for `patience` consecutive epochs."""
    if state.best_score is None or score > state.best_score:
        state.best_score = score
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs >= cfg.patience:
            state.lr *= cfg.anneal_factor
            state.bad_epochs = 0
    return state


# ---------------------------------------------------------------------------
# Checkpoint container

CHECKPOINT_FORMAT = "acklab-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    config: dict[str, Any]
    labels: list[str]
    scheme: str
    params: dict[str, np.ndarray]
    extras: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path, kind: str, config: dict, labels: Iterable[str], scheme: str,
                    params: dict[str, Tensor | np.ndarray], extras: dict | None = None) -> None:
    """Write the versioned textual model container (see docs/checkpoint.md)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "labels": list(labels),
        "scheme": scheme,
        "params": {
            name: {
                "shape": list((t.data if isinstance(t, Tensor) else np.asarray(t)).shape),
                "data": (t.data if isinstance(t, Tensor) else np.asarray(t)).ravel().tolist(),
            }
            for name, t in params.items()
        },
        "extras": extras or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise TensorError(f"not an {CHECKPOINT_FORMAT} file: {path}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise TensorError(f"unsupported checkpoint version {payload.get('version')}")
    params = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    return Checkpoint(
        kind=payload["kind"],
        config=payload["config"],
        labels=list(payload["labels"]),
        scheme=payload["scheme"],
        params=params,
        extras=payload.get("extras", {}),
    )
