"""Linear-chain CRF: log-space forward algorithm, Viterbi decoding, the
sequence negative log-likelihood, and exhaustive-enumeration oracles.

Transition convention: T has shape (k+2, k+2) over k tags plus START=k and
STOP=k+1, with T[i, j] scoring the move i -> j. A path y scores
T[START, y0] + sum_i e[i, y_i] + sum_i T[y_{i-1}, y_i] + T[y_last, STOP].
START is never a destination and STOP never a source; those entries are
structurally unused and report as -inf via CrfLayer.effective_transitions.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import tensor as T


class CrfError(Exception):
    pass


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, T.Tensor) else np.asarray(x, dtype=np.float64)


def _check_shapes(e: np.ndarray, t: np.ndarray) -> int:
    if e.ndim != 2:
        raise CrfError(f"emissions must be 2-D, got shape {e.shape}")
    k = e.shape[1]
    if t.shape != (k + 2, k + 2):
        raise CrfError(f"transitions shape {t.shape} does not match {k} tags (+start/stop)")
    return k


def path_score(emissions, transitions, tags: list[int]) -> float:
    e, t = _as_array(emissions), _as_array(transitions)
    k = _check_shapes(e, t)
    if len(tags) != e.shape[0]:
        raise CrfError(f"path length {len(tags)} != {e.shape[0]} emissions")
    start, stop = k, k + 1
    score = t[start, tags[0]] + e[0, tags[0]]
    for i in range(1, len(tags)):
        score += t[tags[i - 1], tags[i]] + e[i, tags[i]]
    return float(score + t[tags[-1], stop])


def crf_log_partition(emissions, transitions):
    """log sum over all k^n paths of exp(path score), via the forward
    recursion in log space. Returns a Tensor when either argument is a
    Tensor (differentiable), else a float."""
    tensor_mode = isinstance(emissions, T.Tensor) or isinstance(transitions, T.Tensor)
    e = emissions if isinstance(emissions, T.Tensor) else T.Tensor(np.asarray(emissions, dtype=np.float64))
    t = transitions if isinstance(transitions, T.Tensor) else T.Tensor(np.asarray(transitions, dtype=np.float64))
    k = _check_shapes(e.data, t.data)
    n = e.shape[0]
    if n == 0:
        raise CrfError("empty emission matrix")
    t_start = T.narrow(T.narrow(t, 0, k, k + 1), 1, 0, k)       # (1, k)
    t_inner = T.narrow(T.narrow(t, 0, 0, k), 1, 0, k)           # (k, k)
    t_stop = T.transpose(T.narrow(T.narrow(t, 0, 0, k), 1, k + 1, k + 2))  # (1, k)
    alpha = T.add(t_start, T.narrow(e, 0, 0, 1))
    for i in range(1, n):
        scores = T.add(T.transpose(alpha), t_inner)              # (k,1)+(k,k): source x dest
        alpha = T.add(T.reshape(T.logsumexp(scores, axis=0), (1, k)), T.narrow(e, 0, i, i + 1))
    log_z = T.logsumexp(T.add(alpha, t_stop), axis=None)
    return log_z if tensor_mode else log_z.item()


def crf_nll(emissions, transitions, tags: list[int]):
    """Negative log-likelihood of the gold path: log Z minus the gold path
    score. Differentiable w.r.t. emissions and transitions; >= 0 up to
    rounding."""
    e = emissions if isinstance(emissions, T.Tensor) else T.Tensor(np.asarray(emissions, dtype=np.float64))
    t = transitions if isinstance(transitions, T.Tensor) else T.Tensor(np.asarray(transitions, dtype=np.float64))
    k = _check_shapes(e.data, t.data)
    n = e.shape[0]
    if len(tags) != n:
        raise CrfError(f"gold path length {len(tags)} != {n} emissions")
    for tag in tags:
        if not (0 <= tag < k):
            raise CrfError(f"gold tag {tag} outside inventory of {k} tags")
    start, stop = k, k + 1
    e_mask = np.zeros((n, k))
    t_mask = np.zeros((k + 2, k + 2))
    t_mask[start, tags[0]] += 1.0
    for i in range(n):
        e_mask[i, tags[i]] += 1.0
        if i:
            t_mask[tags[i - 1], tags[i]] += 1.0
    t_mask[tags[-1], stop] += 1.0
    gold = T.add(T.sum_(T.mul(e, T.Tensor(e_mask))), T.sum_(T.mul(t, T.Tensor(t_mask))))
    return T.add(crf_log_partition(e, t), T.mul(gold, T.Tensor(-1.0)))


def viterbi(emissions, transitions) -> tuple[list[int], float]:
    """Highest-scoring path and its score; ties break toward the lowest tag
    index at each backpointer."""
    e, t = _as_array(emissions), _as_array(transitions)
    k = _check_shapes(e, t)
    n = e.shape[0]
    if n == 0:
        return [], 0.0
    start, stop = k, k + 1
    delta = t[start, :k] + e[0]
    backpointers = []
    for i in range(1, n):
        scores = delta[:, None] + t[:k, :k]
        best_prev = np.argmax(scores, axis=0)  # first max = lowest source index
        delta = scores[best_prev, np.arange(k)] + e[i]
        backpointers.append(best_prev)
    final = delta + t[:k, stop]
    last = int(np.argmax(final))
    path = [last]
    for bp in reversed(backpointers):
        path.append(int(bp[path[-1]]))
    path.reverse()
    return path, float(final[last])


MAX_BRUTE_FORCE_PATHS = 10 ** 6


def _enumerate_scores(emissions, transitions):
    e, t = _as_array(emissions), _as_array(transitions)
    k = _check_shapes(e, t)
    n = e.shape[0]
    if k ** n > MAX_BRUTE_FORCE_PATHS:
        raise CrfError(f"instance too large for brute force: {k}^{n} paths")
    for tags in itertools.product(range(k), repeat=n):
        yield list(tags), path_score(e, t, list(tags))


def brute_force_partition(emissions, transitions) -> float:
    """Reference semantics for crf_log_partition by exhaustive enumeration."""
    scores = np.array([s for _, s in _enumerate_scores(emissions, transitions)])
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def brute_force_best(emissions, transitions) -> tuple[list[int], float]:
    """Reference semantics for viterbi; ties resolve to the lexicographically
    smallest path (itertools.product order)."""
    best_path: list[int] | None = None
    best_score = -np.inf
    for tags, score in _enumerate_scores(emissions, transitions):
        if score > best_score:
            best_path, best_score = tags, score
    return best_path, float(best_score)


class CrfLayer:
    """Trainable transition matrix over k tags plus start/stop."""

    def __init__(self, n_tags: int, rng: np.random.Generator):
        self.n_tags = n_tags
        self.transitions = T.parameter((n_tags + 2, n_tags + 2), rng, name="crf/transitions")

    def effective_transitions(self) -> np.ndarray:
        out = self.transitions.data.copy()
        out[:, self.n_tags] = -np.inf      # nothing transitions into START
        out[self.n_tags + 1, :] = -np.inf  # nothing transitions out of STOP
        return out
