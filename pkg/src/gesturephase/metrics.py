"""Window-level evaluation: per-class counts, confusion matrices,
gesture-unit merging and cross-fold aggregation.

Conventions on empty denominators: precision, recall and F1 fall back to
0; IoU of a class absent from both gold and prediction is 1. For any
class with tp + fp + fn > 0 the identity f1 = 2 * iou / (1 + iou) holds
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import windows as W
from .errors import ConfigError

UNIT_N = 0
UNIT_G = 1


@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    iou: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "ClassMetrics":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        iou = tp / (tp + fp + fn) if tp + fp + fn else 1.0
        return cls(tp=int(tp), fp=int(fp), fn=int(fn), precision=precision,
                   recall=recall, f1=f1, iou=iou)


def _check_pair(gold, pred, n_labels):
    gold = np.asarray(gold, dtype=np.int64).ravel()
    pred = np.asarray(pred, dtype=np.int64).ravel()
    if gold.shape != pred.shape:
        raise ConfigError(f"gold {gold.shape} and pred {pred.shape} differ in length")
    for name, arr in (("gold", gold), ("pred", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_labels):
            raise ConfigError(f"{name} labels outside 0..{n_labels - 1}")
    return gold, pred


def count_class(gold, pred, target: int, n_labels: int) -> tuple[int, int, int]:
    gold, pred = _check_pair(gold, pred, n_labels)
    tp = int(np.sum((gold == target) & (pred == target)))
    fp = int(np.sum((gold != target) & (pred == target)))
    fn = int(np.sum((gold == target) & (pred != target)))
    return tp, fp, fn


def per_class_metrics(gold, pred, n_labels: int) -> dict[int, ClassMetrics]:
    return {
        c: ClassMetrics.from_counts(*count_class(gold, pred, c, n_labels))
        for c in range(n_labels)
    }


def confusion_matrix(gold, pred, n_labels: int, normalize: bool = True) -> np.ndarray:
    """Rows are gold labels, columns predictions. Normalized rows sum to
    1; rows with zero support stay all-zero."""
    gold, pred = _check_pair(gold, pred, n_labels)
    m = np.zeros((n_labels, n_labels), dtype=np.float64)
    np.add.at(m, (gold, pred), 1.0)
    if normalize:
        support = m.sum(axis=1, keepdims=True)
        np.divide(m, support, out=m, where=support > 0)
    return m


def merge_to_units(labels, neutral: int = int(W.Phase.N)) -> np.ndarray:
    """Collapse phase labels to gesture-unit presence: G for any
    non-neutral phase, N otherwise."""
    labels = np.asarray(labels, dtype=np.int64)
    return np.where(labels == neutral, UNIT_N, UNIT_G).astype(np.int64)


def evaluate_labels(gold_sequences, pred_sequences, scheme: str) -> dict:
    """Pool windows from all sequences and build one evaluation report.

    ``gold_sequences`` and ``pred_sequences`` are aligned lists of label
    code arrays in the given scheme. The report is JSON-ready with a
    fixed key layout.
    """
    names = W.scheme_labels(scheme)
    n = len(names)
    if len(gold_sequences) != len(pred_sequences):
        raise ConfigError("gold and prediction sequence counts differ")
    for g, p in zip(gold_sequences, pred_sequences):
        if len(g) != len(p):
            raise ConfigError("a sequence pair differs in length")
    gold = (np.concatenate([np.asarray(g) for g in gold_sequences])
            if gold_sequences else np.zeros(0, dtype=np.int64))
    pred = (np.concatenate([np.asarray(p) for p in pred_sequences])
            if pred_sequences else np.zeros(0, dtype=np.int64))
    per_class = per_class_metrics(gold, pred, n)
    report_classes = ("P", "S", "R") if scheme == W.MULTI_PHASE else ("S",)
    report = {
        "scheme": scheme,
        "n_windows": int(gold.size),
        "per_class": {
            name: asdict(per_class[names.index(name)]) for name in report_classes
        },
        "confusion_labels": list(names),
        "confusion": confusion_matrix(gold, pred, n).tolist(),
        "unit": None,
    }
    if scheme == W.MULTI_PHASE:
        ug = merge_to_units(gold)
        up = merge_to_units(pred)
        tp, fp, fn = count_class(ug, up, UNIT_G, 2)
        report["unit"] = asdict(ClassMetrics.from_counts(tp, fp, fn))
    return report


def _aggregate(values: list):
    first = values[0]
    if isinstance(first, dict):
        for v in values[1:]:
            if set(v) != set(first):
                raise ConfigError("fold reports have mismatched keys")
        return {k: _aggregate([v[k] for v in values]) for k in first}
    if isinstance(first, bool) or first is None or isinstance(first, str):
        if any(v != first for v in values[1:]):
            raise ConfigError(f"non-numeric report fields differ: {values}")
        return first
    if isinstance(first, (int, float)):
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return {"mean": float(arr.mean()), "std": std}
    if isinstance(first, list):
        lengths = {len(v) for v in values}
        if len(lengths) != 1:
            raise ConfigError("fold reports have mismatched list lengths")
        return [_aggregate([v[i] for v in values]) for i in range(len(first))]
    raise ConfigError(f"cannot aggregate value of type {type(first).__name__}")


def aggregate_folds(reports: list[dict]) -> dict:
    """Combine per-fold reports into mean and sample standard deviation
    (ddof 1; a single fold reports std 0) for every numeric leaf."""
    if not reports:
        raise ConfigError("no fold reports to aggregate")
    out = _aggregate(list(reports))
    out["n_folds"] = len(reports)
    return out
