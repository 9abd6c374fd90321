"""Evaluation metrics: counts, derived scores, confusion matrices,
gesture-unit merging and fold aggregation.

The worked example used throughout:
    gold [N, P, S, S, R, N]
    pred [N, S, S, S, N, N]
S has tp=2 fp=1 fn=0, so precision 2/3, recall 1, F1 0.8, IoU 2/3.
Merging to units turns gold windows 1..4 and predicted windows 1..3
into G, giving unit tp=3 fp=0 fn=1.
"""

import numpy as np
import pytest

from gesturephase import metrics as M
from gesturephase.errors import ConfigError

GOLD = np.array([3, 0, 1, 1, 2, 3])
PRED = np.array([3, 1, 1, 1, 3, 3])


def test_stroke_counts_on_worked_example():
    tp, fp, fn = M.count_class(GOLD, PRED, target=1, n_labels=4)
    assert (tp, fp, fn) == (2, 1, 0)


def test_stroke_scores_on_worked_example():
    cm = M.ClassMetrics.from_counts(2, 1, 0)
    assert cm.precision == pytest.approx(2 / 3)
    assert cm.recall == 1.0
    assert cm.f1 == pytest.approx(0.8)
    assert cm.iou == pytest.approx(2 / 3)


def test_zero_denominator_conventions():
    empty = M.ClassMetrics.from_counts(0, 0, 0)
    assert empty.precision == 0.0
    assert empty.recall == 0.0
    assert empty.f1 == 0.0
    assert empty.iou == 1.0  # class absent on both sides
    only_fn = M.ClassMetrics.from_counts(0, 0, 3)
    assert only_fn.recall == 0.0
    assert only_fn.iou == 0.0


def test_f1_iou_identity_fuzz():
    rng = np.random.default_rng(0)
    for _ in range(300):
        tp = int(rng.integers(0, 20))
        fp = int(rng.integers(0, 20))
        fn = int(rng.integers(0, 20))
        if tp + fp + fn == 0:
            continue
        cm = M.ClassMetrics.from_counts(tp, fp, fn)
        assert cm.f1 == pytest.approx(2 * cm.iou / (1 + cm.iou), abs=1e-12)


def test_confusion_matrix_rows_normalize():
    m = M.confusion_matrix(GOLD, PRED, 4)
    assert m.shape == (4, 4)
    sums = m.sum(axis=1)
    # P and R rows have support, N and S too; all rows here have support
    assert np.allclose(sums, 1.0, atol=1e-9)
    # gold P was predicted S
    assert m[0, 1] == 1.0
    assert m[1, 1] == 1.0


def test_confusion_matrix_zero_support_row():
    m = M.confusion_matrix([1, 1], [0, 1], 3)
    assert np.allclose(m[2], 0.0)
    raw = M.confusion_matrix([1, 1], [0, 1], 3, normalize=False)
    assert raw[1].tolist() == [1.0, 1.0, 0.0]


def test_counts_match_set_recomputation():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(1, 60))
        gold = rng.integers(0, 4, n)
        pred = rng.integers(0, 4, n)
        for c in range(4):
            tp, fp, fn = M.count_class(gold, pred, c, 4)
            g = {i for i in range(n) if gold[i] == c}
            p = {i for i in range(n) if pred[i] == c}
            assert tp == len(g & p)
            assert fp == len(p - g)
            assert fn == len(g - p)


def test_merge_to_units():
    assert M.merge_to_units(GOLD).tolist() == [0, 1, 1, 1, 1, 0]
    assert M.merge_to_units(PRED).tolist() == [0, 1, 1, 1, 0, 0]


def test_unit_scores_on_worked_example():
    report = M.evaluate_labels([GOLD], [PRED], "multi-phase")
    unit = report["unit"]
    assert (unit["tp"], unit["fp"], unit["fn"]) == (3, 0, 1)
    assert unit["recall"] == pytest.approx(0.75)
    assert unit["precision"] == 1.0


def test_report_layout_multi_phase():
    report = M.evaluate_labels([GOLD], [PRED], "multi-phase")
    assert report["scheme"] == "multi-phase"
    assert report["n_windows"] == 6
    assert set(report["per_class"]) == {"P", "S", "R"}
    assert report["confusion_labels"] == ["P", "S", "R", "N"]
    assert len(report["confusion"]) == 4
    assert report["per_class"]["S"]["f1"] == pytest.approx(0.8)
    assert report["per_class"]["P"]["recall"] == 0.0


def test_report_layout_binary():
    gold = [np.array([0, 1, 1, 0])]
    pred = [np.array([0, 1, 0, 0])]
    report = M.evaluate_labels(gold, pred, "binary")
    assert set(report["per_class"]) == {"S"}
    assert report["unit"] is None
    assert report["per_class"]["S"]["recall"] == pytest.approx(0.5)


def test_evaluate_pools_across_sequences():
    report = M.evaluate_labels([GOLD[:3], GOLD[3:]], [PRED[:3], PRED[3:]],
                               "multi-phase")
    assert report["n_windows"] == 6
    assert report["per_class"]["S"]["f1"] == pytest.approx(0.8)


def test_evaluate_validates_alignment():
    with pytest.raises(ConfigError):
        M.evaluate_labels([GOLD], [PRED, PRED], "multi-phase")
    with pytest.raises(ConfigError):
        M.evaluate_labels([GOLD], [PRED[:-1]], "multi-phase")
    with pytest.raises(ConfigError):
        M.evaluate_labels([np.array([0, 9])], [np.array([0, 1])], "multi-phase")


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(2)
    gold = rng.integers(0, 4, 50)
    pred = rng.integers(0, 4, 50)
    perm = rng.permutation(50)
    a = M.evaluate_labels([gold], [pred], "multi-phase")
    b = M.evaluate_labels([gold[perm]], [pred[perm]], "multi-phase")
    assert a["per_class"] == b["per_class"]
    assert a["confusion"] == b["confusion"]


# fold aggregation

def test_aggregate_two_folds_mean_and_std():
    r1 = {"scheme": "binary", "x": 50.0}
    r2 = {"scheme": "binary", "x": 60.0}
    agg = M.aggregate_folds([r1, r2])
    assert agg["x"]["mean"] == pytest.approx(55.0)
    assert agg["x"]["std"] == pytest.approx(7.0710678118654755)
    assert agg["scheme"] == "binary"
    assert agg["n_folds"] == 2


def test_aggregate_single_fold_std_zero():
    agg = M.aggregate_folds([{"x": 3.5}])
    assert agg["x"] == {"mean": 3.5, "std": 0.0}
    assert agg["n_folds"] == 1


def test_aggregate_recurses_into_reports():
    reports = []
    for pred in ([3, 1, 1, 1, 3, 3], [3, 0, 1, 1, 2, 3]):
        reports.append(M.evaluate_labels([GOLD], [np.array(pred)], "multi-phase"))
    agg = M.aggregate_folds(reports)
    f1s = [r["per_class"]["S"]["f1"] for r in reports]
    assert agg["per_class"]["S"]["f1"]["mean"] == pytest.approx(np.mean(f1s))
    assert agg["n_windows"]["mean"] == 6.0
    # nested lists (confusion) aggregate elementwise
    assert agg["confusion"][1][1]["mean"] == pytest.approx(1.0)


def test_aggregate_rejects_mismatched_reports():
    with pytest.raises(ConfigError):
        M.aggregate_folds([{"a": 1}, {"b": 2}])
    with pytest.raises(ConfigError):
        M.aggregate_folds([{"s": "x"}, {"s": "y"}])
    with pytest.raises(ConfigError):
        M.aggregate_folds([])
