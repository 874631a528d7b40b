"""Linear-chain CRF: scoring, exact log-partition, Viterbi, plus enumeration oracles.

Scores decompose as emissions plus label-pair transitions with virtual START
and STOP states.  The differentiable path (scoring, log-partition,
log-likelihood) runs on :class:`~crfae.autodiff.Value` nodes; decoding and the
brute-force oracles are plain numpy.
"""

from __future__ import annotations

from itertools import product
from typing import Sequence

import numpy as np

from .autodiff import Value

# -inf stand-in that stays finite in float32 arithmetic
NEG_INF = -1e4


class TransitionTable:
    """(L+2) x (L+2) transition scores with START = L and STOP = L+1.

    Transitions into START and out of STOP are structurally banned; the
    recursions below never reference those entries, so the underlying
    parameter receives exactly zero gradient there.  ``effective()`` exposes
    the masked matrix for inspection.
    """

    def __init__(self, trans: Value, n_labels: int):
        expect = (n_labels + 2, n_labels + 2)
        if trans.shape != expect:
            raise ValueError(f"transition table shape {trans.shape} != {expect}")
        self.trans = trans
        self.n_labels = n_labels

    @property
    def start(self) -> int:
        return self.n_labels

    @property
    def stop(self) -> int:
        return self.n_labels + 1

    def effective(self) -> np.ndarray:
        out = self.trans.data.copy()
        out[:, self.start] = NEG_INF
        out[self.stop, :] = NEG_INF
        return out


def _check_instance(emissions, table: TransitionTable, y: Sequence[int] | None = None) -> tuple[int, int]:
    T, L = emissions.shape
    if T < 1:
        raise ValueError("empty sequence")
    if L != table.n_labels:
        raise ValueError(f"emissions have {L} labels, transition table {table.n_labels}")
    if y is not None:
        if len(y) != T:
            raise ValueError(f"label sequence length {len(y)} != {T} positions")
        for i, lab in enumerate(y):
            if not 0 <= lab < L:
                raise ValueError(f"invalid label id {lab} at position {i} (L={L})")
    return T, L


def sequence_score(emissions: Value, table: TransitionTable, y: Sequence[int]) -> Value:
    """score(y) = sum_i emit[i, y_i] + trans[START, y_0] + sum trans[y_i, y_{i+1}] + trans[y_T, STOP]."""
    T, _ = _check_instance(emissions.data, table, y)
    y = np.asarray(y, dtype=np.intp)
    frm = np.concatenate(([table.start], y))
    to = np.concatenate((y, [table.stop]))
    emit_part = emissions[np.arange(T), y].sum()
    trans_part = table.trans[frm, to].sum()
    return emit_part + trans_part


def log_partition(emissions: Value, table: TransitionTable) -> Value:
    """Forward recursion in log space: log sum over all L^T paths of exp(score)."""
    T, L = _check_instance(emissions.data, table)
    alpha = emissions[0] + table.trans[table.start, :L]
    for t in range(1, T):
        scores = alpha.reshape((L, 1)) + table.trans[:L, :L]
        alpha = scores.logsumexp(axis=0) + emissions[t]
    return (alpha + table.trans[:L, table.stop]).logsumexp()


def log_likelihood(emissions: Value, table: TransitionTable, y: Sequence[int]) -> Value:
    """log p(y | x) = score(y) - logZ; always <= 0."""
    return sequence_score(emissions, table, y) - log_partition(emissions, table)


def viterbi_decode(emissions: np.ndarray, table: TransitionTable) -> tuple[list[int], float]:
    """Highest-scoring path; ties break toward the lowest label id at each backtrack step."""
    T, L = _check_instance(emissions, table)
    trans = table.trans.data
    delta = emissions[0] + trans[table.start, :L]
    backptr = np.empty((T, L), dtype=np.intp)
    for t in range(1, T):
        cand = delta[:, None] + trans[:L, :L]  # cand[i, j]: best-so-far into i then i->j
        backptr[t] = np.argmax(cand, axis=0)  # argmax picks the lowest index on ties
        delta = cand[backptr[t], np.arange(L)] + emissions[t]
    final = delta + trans[:L, table.stop]
    last = int(np.argmax(final))
    path = [last]
    for t in range(T - 1, 0, -1):
        last = int(backptr[t, last])
        path.append(last)
    path.reverse()
    return path, float(final[path[-1]])


MAX_BRUTE_FORCE_PATHS = 10**6


def _enumerate_scores(emissions: np.ndarray, table: TransitionTable):
    T, L = _check_instance(emissions, table)
    if L**T > MAX_BRUTE_FORCE_PATHS:
        raise ValueError(f"brute force infeasible: {L}^{T} paths exceed {MAX_BRUTE_FORCE_PATHS}")
    trans = table.trans.data
    for path in product(range(L), repeat=T):
        s = trans[table.start, path[0]]
        for i in range(T):
            s += emissions[i, path[i]]
            if i + 1 < T:
                s += trans[path[i], path[i + 1]]
        s += trans[path[-1], table.stop]
        yield path, float(s)


def brute_force_logZ(emissions: np.ndarray, table: TransitionTable) -> float:
    """Exhaustive log-partition over all label sequences (test oracle)."""
    scores = np.array([s for _, s in _enumerate_scores(emissions, table)])
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def brute_force_best(emissions: np.ndarray, table: TransitionTable) -> tuple[list[int], float]:
    """Exhaustive argmax, breaking exact score ties like the Viterbi backtrack.

    The backtrack rule (lowest label id at each step, walking from the end)
    selects the path whose reversed label sequence is lexicographically
    smallest among the maximizers.
    """
    best_path: tuple[int, ...] | None = None
    best_score = -np.inf
    for path, s in _enumerate_scores(emissions, table):
        if s > best_score:
            best_path, best_score = path, s
        elif s == best_score and best_path is not None:
            if tuple(reversed(path)) < tuple(reversed(best_path)):
                best_path = path
    assert best_path is not None
    return list(best_path), best_score


def enumeration_marginals(emissions: np.ndarray, table: TransitionTable) -> np.ndarray:
    """p(y_i = l) for every position and label, by exhaustive enumeration."""
    T, L = emissions.shape
    rows = list(_enumerate_scores(emissions, table))
    scores = np.array([s for _, s in rows])
    m = scores.max()
    w = np.exp(scores - m)
    w /= w.sum()
    marg = np.zeros((T, L))
    for (path, _), p in zip(rows, w):
        for i, lab in enumerate(path):
            marg[i, lab] += p
    return marg
