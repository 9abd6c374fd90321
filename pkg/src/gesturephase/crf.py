"""Linear-chain CRF: exact log-partition, gradients and Viterbi decoding.

Scores factor as start[y0] + sum_t emissions[t, yt] + sum_t
transitions[y_{t-1}, y_t] + end[y_last]. The forward recursion computes
the log-partition in O(t * L^2); ``brute_force_reference`` recomputes
everything by full path enumeration and exists for tests only.

Viterbi ties resolve toward the lower label code at every backtrack
step, which equals picking, among all maximum-score paths, the one that
is smallest when compared from its last label backwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import ParamBlock, logsumexp


def _check_scores(emissions, transitions, start, end):
    emissions = np.asarray(emissions, dtype=np.float64)
    transitions = np.asarray(transitions, dtype=np.float64)
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise ConfigError(f"emissions must be (t, n_labels), got {emissions.shape}")
    n = emissions.shape[1]
    if transitions.shape != (n, n):
        raise ConfigError(
            f"transitions {transitions.shape} do not match {n} labels"
        )
    if start.shape != (n,) or end.shape != (n,):
        raise ConfigError("start/end must be (n_labels,) vectors")
    for name, arr in (("emissions", emissions), ("transitions", transitions),
                      ("start", start), ("end", end)):
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"non-finite entries in {name}")
    return emissions, transitions, start, end


def _check_labels(labels, t, n):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (t,):
        raise ConfigError(f"labels shape {labels.shape} does not match t={t}")
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ConfigError(f"label codes outside 0..{n - 1}")
    return labels


def path_score(emissions, labels, transitions, start, end) -> float:
    emissions, transitions, start, end = _check_scores(emissions, transitions, start, end)
    labels = _check_labels(labels, emissions.shape[0], emissions.shape[1])
    score = start[labels[0]] + emissions[0, labels[0]]
    for t in range(1, len(labels)):
        score += transitions[labels[t - 1], labels[t]] + emissions[t, labels[t]]
    return float(score + end[labels[-1]])


def log_partition(emissions, transitions, start, end) -> float:
    """Forward recursion with logsumexp."""
    emissions, transitions, start, end = _check_scores(emissions, transitions, start, end)
    alpha = start + emissions[0]
    for t in range(1, emissions.shape[0]):
        alpha = emissions[t] + logsumexp(alpha[:, None] + transitions, axis=0)
    return float(logsumexp(alpha + end, axis=0))


def crf_nll(emissions, labels, transitions, start, end) -> float:
    """Negative log-likelihood of the gold path; always >= 0."""
    return log_partition(emissions, transitions, start, end) - path_score(
        emissions, labels, transitions, start, end
    )


def crf_nll_grad(emissions, labels, transitions, start, end):
    """NLL and its gradients via the forward-backward recursions.

    Returns
    -------
    (nll, d_emissions, d_transitions, d_start, d_end)
        Gradients are posterior marginals minus gold indicators.
    """
    emissions, transitions, start, end = _check_scores(emissions, transitions, start, end)
    t_len, n = emissions.shape
    labels = _check_labels(labels, t_len, n)

    alpha = np.empty((t_len, n))
    alpha[0] = start + emissions[0]
    for t in range(1, t_len):
        alpha[t] = emissions[t] + logsumexp(alpha[t - 1][:, None] + transitions, axis=0)
    log_z = float(logsumexp(alpha[-1] + end, axis=0))

    beta = np.empty((t_len, n))
    beta[-1] = end
    for t in range(t_len - 2, -1, -1):
        beta[t] = logsumexp(transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)

    marginal = np.exp(alpha + beta - log_z)                # (t, n)
    d_emissions = marginal.copy()
    d_emissions[np.arange(t_len), labels] -= 1.0
    d_start = marginal[0].copy()
    d_start[labels[0]] -= 1.0
    d_end = marginal[-1].copy()
    d_end[labels[-1]] -= 1.0
    d_transitions = np.zeros_like(transitions)
    for t in range(t_len - 1):
        pair = np.exp(
            alpha[t][:, None] + transitions
            + (emissions[t + 1] + beta[t + 1])[None, :] - log_z
        )
        d_transitions += pair
    for t in range(t_len - 1):
        d_transitions[labels[t], labels[t + 1]] -= 1.0

    gold = path_score(emissions, labels, transitions, start, end)
    return log_z - gold, d_emissions, d_transitions, d_start, d_end


def viterbi(emissions, transitions, start, end) -> np.ndarray:
    """Maximum-score label path with ties broken toward lower codes."""
    emissions, transitions, start, end = _check_scores(emissions, transitions, start, end)
    t_len, n = emissions.shape
    delta = start + emissions[0]
    back = np.empty((t_len, n), dtype=np.int64)
    for t in range(1, t_len):
        scores = delta[:, None] + transitions          # [prev, cur]
        back[t] = np.argmax(scores, axis=0)            # first max = lowest code
        delta = emissions[t] + scores[back[t], np.arange(n)]
    path = np.empty(t_len, dtype=np.int64)
    path[-1] = int(np.argmax(delta + end))
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


@dataclass(frozen=True)
class BruteForceResult:
    log_partition: float
    best_path: np.ndarray
    best_score: float
    nll: float | None


def brute_force_reference(emissions, transitions, start, end,
                          labels=None, max_paths: int = 1_000_000) -> BruteForceResult:
    """Recompute log-partition, argmax path and optionally the NLL by
    enumerating all label paths. Test oracle; cost is n_labels ** t."""
    emissions, transitions, start, end = _check_scores(emissions, transitions, start, end)
    t_len, n = emissions.shape
    n_paths = n ** t_len
    if n_paths > max_paths:
        raise ConfigError(f"{n_paths} paths exceed the enumeration budget {max_paths}")
    paths = np.indices((n,) * t_len).reshape(t_len, n_paths).T  # (n_paths, t)
    scores = start[paths[:, 0]] + emissions[0, paths[:, 0]]
    for t in range(1, t_len):
        scores = scores + transitions[paths[:, t - 1], paths[:, t]]
        scores = scores + emissions[t, paths[:, t]]
    scores = scores + end[paths[:, -1]]
    m = scores.max()
    log_z = float(np.log(np.exp(scores - m).sum()) + m)
    best = paths[scores == scores.max()]
    # smallest path comparing the last label first, then the one before, ...
    order = np.lexsort(tuple(best[:, t] for t in range(t_len)))
    best_path = best[order[0]].copy()
    nll = None
    if labels is not None:
        labels = _check_labels(labels, t_len, n)
        gold = start[labels[0]] + emissions[0, labels[0]]
        for t in range(1, t_len):
            gold += transitions[labels[t - 1], labels[t]] + emissions[t, labels[t]]
        gold += end[labels[-1]]
        nll = log_z - float(gold)
    return BruteForceResult(
        log_partition=log_z,
        best_path=best_path,
        best_score=float(scores.max()),
        nll=nll,
    )


class LinearChainCrf:
    """Trainable CRF output layer.

    Transitions and the start/end vectors initialize to zero. The
    gradient of the sequence NLL with respect to the emissions is
    returned so the upstream network can continue backpropagation;
    gradients for the CRF's own parameters accumulate on its blocks.
    """

    def __init__(self, n_labels: int, dtype=np.float32, name: str = "crf"):
        if n_labels < 2:
            raise ConfigError(f"need at least 2 labels, got {n_labels}")
        self.n_labels = n_labels
        self.transitions = ParamBlock(
            f"{name}.transitions", np.zeros((n_labels, n_labels), dtype=dtype)
        )
        self.start = ParamBlock(f"{name}.start", np.zeros(n_labels, dtype=dtype))
        self.end = ParamBlock(f"{name}.end", np.zeros(n_labels, dtype=dtype))

    def params(self) -> list[ParamBlock]:
        return [self.transitions, self.start, self.end]

    def nll(self, emissions, labels) -> float:
        return crf_nll(emissions, labels, self.transitions.value,
                       self.start.value, self.end.value)

    def nll_backward(self, emissions, labels, scale: float = 1.0):
        """Accumulate parameter gradients; return (nll, d_emissions)."""
        nll, d_e, d_t, d_s, d_end = crf_nll_grad(
            emissions, labels, self.transitions.value,
            self.start.value, self.end.value,
        )
        dtype = self.transitions.value.dtype
        self.transitions.grad += (scale * d_t).astype(dtype)
        self.start.grad += (scale * d_s).astype(dtype)
        self.end.grad += (scale * d_end).astype(dtype)
        return nll, (scale * d_e).astype(np.asarray(emissions).dtype)

    def decode(self, emissions) -> np.ndarray:
        return viterbi(emissions, self.transitions.value,
                       self.start.value, self.end.value)
