"""Release acceptance gates.

Each test covers one numbered criterion and prints a single PASS/FAIL
verdict line with the measured quantities, then asserts. The learning
criteria (6 and 7) share one module-scoped bundle of trained models so
the suite trains each (variant, seed) combination exactly once.
"""

from __future__ import annotations

import itertools
import json
import time

import numpy as np
import pytest

from gesturephase import crf, windows as W
from gesturephase.cli import main
from gesturephase.diagnostics import CASES, run_gradient_checks
from gesturephase.graph import default_graph
from gesturephase.metrics import evaluate_labels
from gesturephase.model import ModelConfig, ModelVariant
from gesturephase.pipeline import (
    TrainConfig,
    make_folds,
    predict_sequences,
    scheme_sequences,
    train,
)
from gesturephase.pose import SkeletonSequence, StrokeAnnotation, normalize_coords
from gesturephase.synth import SynthConfig, generate

# Frozen learning setup for criteria 6 and 7. Dense gesturing keeps the
# boundary classes well sampled; the rest is the shared training recipe.
ACCEPT_SYNTH = SynthConfig(
    n_subjects=8,
    frames_per_subject=3600,
    gesture_rate=28.0,
    noise_sigma=1.0,
)
ACCEPT_MODEL = ModelConfig(
    channels=(8, 24),
    head_hidden=32,
    encoder_layers=2,
    ffn_width=64,
)
ACCEPT_TRAIN = TrainConfig(
    epochs=20,
    batch_size=4,
    base_lr=0.05,
    warmup_epochs=3,
    decay_epoch=16,
)
ACCEPT_FOLDS = 2
ACCEPT_SEEDS = (0, 1, 2)

MP_VARIANT = ModelVariant()
BIN_VARIANT = ModelVariant(labeling="binary", prediction="classification")


def _verdict(capsys, num: int, name: str, ok: bool, detail: str) -> str:
    flag = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(f"[{flag}] criterion {num} ({name}): {detail}", flush=True)
    return detail


# --------------------------------------------------------------------
# criterion 1: exact CRF inference against full path enumeration


def _enumerate_paths(emissions, transitions, start, end):
    """Independent oracle: score every path explicitly."""
    t, n = emissions.shape
    log_terms = []
    best_score = -np.inf
    best_paths = []
    for path in itertools.product(range(n), repeat=t):
        score = start[path[0]] + emissions[0, path[0]]
        for i in range(1, t):
            score += transitions[path[i - 1], path[i]] + emissions[i, path[i]]
        score += end[path[-1]]
        log_terms.append(score)
        if score > best_score:
            best_score, best_paths = score, [path]
        elif score == best_score:
            best_paths.append(path)
    m = max(log_terms)
    log_z = m + np.log(sum(np.exp(s - m) for s in log_terms))
    # tie order: smallest path when read from the last label backwards
    best = min(best_paths, key=lambda p: tuple(reversed(p)))
    return float(log_z), np.asarray(best, dtype=np.int64)


def test_criterion_1_crf_oracle(capsys):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = 0.0
    mismatches = 0
    for trial in range(200):
        t = int(rng.integers(1, 7))
        n = int(rng.choice([2, 4]))
        emissions = rng.normal(size=(t, n)) * 2.0
        transitions = rng.normal(size=(n, n))
        start = rng.normal(size=n)
        end = rng.normal(size=n)
        if trial % 3 == 0:
            # integer scores force score ties so the tie rule is exercised
            emissions = np.round(emissions)
            transitions = np.round(transitions)
            start = np.round(start)
            end = np.round(end)
        log_z = crf.log_partition(emissions, transitions, start, end)
        path = crf.viterbi(emissions, transitions, start, end)
        ref_z, ref_path = _enumerate_paths(emissions, transitions, start, end)
        worst = max(worst, abs(log_z - ref_z))
        mismatches += int(not np.array_equal(path, ref_path))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and mismatches == 0 and elapsed < 5.0
    detail = _verdict(
        capsys, 1, "crf matches path enumeration", ok,
        f"max |logZ err| {worst:.3g}, path mismatches {mismatches}/200, "
        f"{elapsed:.1f}s",
    )
    assert ok, detail


# --------------------------------------------------------------------
# criterion 2: analytic gradients for every layer type


def test_criterion_2_gradient_fidelity(capsys):
    t0 = time.perf_counter()
    worst = run_gradient_checks(n_seeds=20, tolerance=1e-5)
    elapsed = time.perf_counter() - t0
    top = max(worst.values())
    ok = len(worst) == len(CASES) and top <= 1e-5 and elapsed < 60.0
    detail = _verdict(
        capsys, 2, "gradient checks", ok,
        f"{len(worst)} layer cases x 20 seeds, max rel err {top:.2e}, "
        f"{elapsed:.1f}s",
    )
    assert ok, detail


# --------------------------------------------------------------------
# criterion 3: window labeling fixture table
#
# Hand-computed labels for 18-frame windows. Overlap fractions worked
# out per case; the center rule uses doubled distances to stay integer.

LABEL_CASES = [
    # windows clearly past half overlap
    ((0, [(6, 30)]), W.Phase.S),       # overlap 12/18
    ((0, [(8, 26)]), W.Phase.S),       # overlap 10/18
    ((20, [(10, 50)]), W.Phase.S),     # window inside stroke, 18/18
    ((3, [(0, 21)]), W.Phase.S),       # stroke covers window exactly
    ((100, [(94, 112)]), W.Phase.S),   # offset start frames, overlap 12/18
    ((10, [(0, 20), (24, 26)]), W.Phase.S),  # larger of two overlaps is 10
    # exactly half overlap counts as stroke
    ((0, [(9, 27)]), W.Phase.S),       # overlap 9/18 at stroke start
    ((0, [(0, 9)]), W.Phase.S),        # overlap 9/18 at stroke end
    ((10, [(1, 19)]), W.Phase.S),      # overlap 9/18 spanning the start
    ((0, [(0, 9), (9, 27)]), W.Phase.S),  # adjacent strokes, both at 9/18
    # under half, window covers the stroke start
    ((0, [(12, 40)]), W.Phase.P),      # overlap 6/18
    ((0, [(10, 28)]), W.Phase.P),      # overlap 8/18
    ((0, [(17, 40)]), W.Phase.P),      # overlap 1/18
    ((40, [(52, 70)]), W.Phase.P),     # overlap 6/18
    ((100, [(112, 130)]), W.Phase.P),  # offset frames, overlap 6/18
    ((10, [(0, 14), (22, 40)]), W.Phase.P),  # overlaps 4 vs 6, larger wins
    ((10, [(0, 12), (14, 16), (20, 40)]), W.Phase.P),  # overlaps 2,2,8
    # under half, window covers the stroke end
    ((34, [(12, 40)]), W.Phase.R),     # overlap 6/18
    ((12, [(0, 20)]), W.Phase.R),      # overlap 8/18
    ((2, [(0, 10)]), W.Phase.R),       # overlap 8/18
    ((10, [(0, 16), (24, 40)]), W.Phase.R),  # overlaps 6 vs 4, larger wins
    # no overlap at all; half-open windows exclude the end frame
    ((0, []), W.Phase.N),
    ((0, [(18, 30)]), W.Phase.N),      # stroke begins where the window ends
    ((18, [(0, 18)]), W.Phase.N),      # stroke ends where the window begins
    # equal overlaps from two strokes resolve to preparation
    ((0, [(0, 4), (14, 40)]), W.Phase.P),    # 4 vs 4
    ((6, [(0, 10), (20, 40)]), W.Phase.P),   # 4 vs 4
    # stroke strictly inside the window: nearer boundary to center wins
    ((0, [(4, 12)]), W.Phase.R),       # distances 10 vs 6, end nearer
    ((0, [(6, 14)]), W.Phase.P),       # distances 6 vs 10, start nearer
    ((0, [(5, 13)]), W.Phase.P),       # distances 8 vs 8, tie is P
    ((0, [(9, 11)]), W.Phase.P),       # start sits on the center
    ((0, [(7, 9)]), W.Phase.R),        # end sits on the center
    ((0, [(0, 1)]), W.Phase.R),        # distances 18 vs 16
]


def test_criterion_3_labeling_fixture(capsys):
    wrong = []
    for (start, strokes), expected in LABEL_CASES:
        anns = [StrokeAnnotation(a, b) for a, b in strokes]
        got = W.label_window(start, 18, anns)
        if got != expected:
            wrong.append((start, strokes, expected.letter, got.letter))
        binary = W.label_window_binary(start, 18, anns)
        want_binary = (W.BinaryLabel.S if expected == W.Phase.S
                       else W.BinaryLabel.O)
        if binary != want_binary:
            wrong.append((start, strokes, "binary", binary.name))
    ok = not wrong and len(LABEL_CASES) >= 25
    detail = _verdict(
        capsys, 3, "labeling fixture table", ok,
        f"{len(LABEL_CASES)} hand-computed cases, {len(wrong)} mismatches"
        + (f" {wrong[:3]}" if wrong else ""),
    )
    assert ok, detail


# --------------------------------------------------------------------
# criterion 4: metric identities on fuzzed label pairs


def test_criterion_4_metric_identities(capsys):
    rng = np.random.default_rng(4)
    names = W.scheme_labels(W.MULTI_PHASE)
    worst_f1 = worst_row = worst_count = 0.0
    for _ in range(1000):
        t = int(rng.integers(1, 120))
        gold = rng.integers(0, 4, size=t)
        pred = rng.integers(0, 4, size=t)
        report = evaluate_labels([gold], [pred], W.MULTI_PHASE)
        # set-based recomputation per class
        for name in ("P", "S", "R"):
            c = names.index(name)
            gset = {i for i in range(t) if gold[i] == c}
            pset = {i for i in range(t) if pred[i] == c}
            tp, fp, fn = len(gset & pset), len(pset - gset), len(gset - pset)
            m = report["per_class"][name]
            worst_count = max(worst_count, abs(m["tp"] - tp),
                              abs(m["fp"] - fp), abs(m["fn"] - fn))
            if tp + fp + fn:
                f1 = 2 * tp / (2 * tp + fp + fn)
                iou = tp / (tp + fp + fn)
                worst_f1 = max(worst_f1,
                               abs(m["f1"] - f1),
                               abs(m["f1"] - 2 * m["iou"] / (1 + m["iou"])))
                worst_count = max(worst_count, abs(m["iou"] - iou))
        conf = np.asarray(report["confusion"])
        for c in range(4):
            row_sum = conf[c].sum()
            want = 1.0 if np.any(gold == c) else 0.0
            worst_row = max(worst_row, abs(row_sum - want))
    ok = worst_f1 <= 1e-12 and worst_row <= 1e-12 and worst_count == 0.0
    detail = _verdict(
        capsys, 4, "metric identities", ok,
        f"1000 pairs: count dev {worst_count:g}, f1/iou identity dev "
        f"{worst_f1:.2g}, confusion row dev {worst_row:.2g}",
    )
    assert ok, detail


# --------------------------------------------------------------------
# criterion 5: subject-disjoint folds


def test_criterion_5_fold_disjointness(capsys):
    rng = np.random.default_rng(5)
    bad = 0
    for trial in range(100):
        k = int(rng.choice([2, 5]))
        n = int(rng.integers(k, 40))
        subjects = [f"s{i:03d}" for i in rng.choice(1000, size=n, replace=False)]
        plans = make_folds(subjects, k, int(rng.integers(1 << 30)))
        tests = [set(p.test_subjects) for p in plans]
        covered = set().union(*tests)
        sizes = sorted(len(s) for s in tests)
        disjoint = sum(len(s) for s in tests) == len(covered)
        if not (disjoint and covered == set(subjects)
                and sizes[-1] - sizes[0] <= 1
                and all(set(p.train_subjects) == set(subjects) - t
                        for p, t in zip(plans, tests))):
            bad += 1
    ok = bad == 0
    detail = _verdict(
        capsys, 5, "subject-disjoint folds", ok,
        f"100 subject sets, k in {{2,5}}: {bad} violations",
    )
    assert ok, detail


# --------------------------------------------------------------------
# criteria 6 and 7: learning on the frozen synthetic corpus


@pytest.fixture(scope="module")
def learning_runs():
    graph = default_graph()
    t0 = time.perf_counter()
    sequences, truth = generate(ACCEPT_SYNTH, 0)
    annotations = truth.annotations()
    per_subject = {}
    for seq in sequences:
        wins = W.slide_windows(normalize_coords(seq))
        W.label_windows(wins, annotations[seq.subject_id])
        per_subject[seq.subject_id] = W.group_into_sequences(seq.subject_id, wins)
    plans = make_folds(sorted(per_subject), ACCEPT_FOLDS, 0)
    prep_elapsed = time.perf_counter() - t0

    runs = {}
    for variant in (MP_VARIANT, BIN_VARIANT):
        for seed in ACCEPT_SEEDS:
            t1 = time.perf_counter()
            golds, preds = [], []
            for plan in plans:
                tr = scheme_sequences(
                    [s for sid in plan.train_subjects for s in per_subject[sid]],
                    variant.labeling,
                )
                te = scheme_sequences(
                    [s for sid in plan.test_subjects for s in per_subject[sid]],
                    variant.labeling,
                )
                model, _ = train(tr, variant, graph, ACCEPT_MODEL,
                                 ACCEPT_TRAIN, seed)
                preds.extend(predict_sequences(model, te))
                golds.extend(s.labels for s in te)
            report = evaluate_labels(golds, preds, variant.labeling)
            runs[(variant.slug(), seed)] = {
                "stroke_f1": report["per_class"]["S"]["f1"],
                "elapsed": time.perf_counter() - t1,
            }
    return {
        "runs": runs,
        "gestures": truth.gesture_count(),
        "prep_elapsed": prep_elapsed,
    }


def test_criterion_6_synthetic_learning(capsys, learning_runs):
    run = learning_runs["runs"][(MP_VARIANT.slug(), 0)]
    gestures = learning_runs["gestures"]
    elapsed = learning_runs["prep_elapsed"] + run["elapsed"]
    f1 = run["stroke_f1"]
    ok = (gestures >= 300 and ACCEPT_TRAIN.epochs <= 20
          and f1 >= 0.80 and elapsed < 900.0)
    detail = _verdict(
        capsys, 6, "synthetic learning", ok,
        f"{gestures} gestures, {ACCEPT_FOLDS}-fold crossval, "
        f"held-out stroke F1 {f1:.4f} (>= 0.80), {elapsed:.0f}s",
    )
    assert ok, detail


def test_criterion_7_crf_beats_binary(capsys, learning_runs):
    runs = learning_runs["runs"]
    mp = [runs[(MP_VARIANT.slug(), s)]["stroke_f1"] for s in ACCEPT_SEEDS]
    bn = [runs[(BIN_VARIANT.slug(), s)]["stroke_f1"] for s in ACCEPT_SEEDS]
    margin = float(np.mean(mp) - np.mean(bn))
    ok = margin >= 0.0
    detail = _verdict(
        capsys, 7, "phase-structured crf vs binary baseline", ok,
        f"mean stroke F1 over seeds {ACCEPT_SEEDS}: "
        f"{MP_VARIANT.slug()} {np.mean(mp):.4f} {np.round(mp, 4).tolist()} vs "
        f"{BIN_VARIANT.slug()} {np.mean(bn):.4f} {np.round(bn, 4).tolist()}, "
        f"margin {margin:+.4f}",
    )
    assert ok, detail


# --------------------------------------------------------------------
# criterion 8: bit-identical repeated runs


def test_criterion_8_determinism(capsys, tmp_path):
    config = {
        "seed": 0,
        "folds": 2,
        "model": {"channels": [4], "encoder_layers": 1, "attention_heads": 2,
                  "ffn_width": 8, "head_hidden": 8},
        "train": {"epochs": 2, "batch_size": 2, "base_lr": 0.05,
                  "warmup_epochs": 1, "decay_epoch": 2},
        "synth": {"n_subjects": 3, "frames_per_subject": 500,
                  "gesture_rate": 19.0, "noise_sigma": 1.0},
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    corpus = tmp_path / "corpus"
    dataset = tmp_path / "dataset"
    assert main(["synth", "--config", str(cfg), "--out", str(corpus)]) == 0
    assert main(["prepare",
                 "--poses", str(corpus / "poses.jsonl"),
                 "--annotations", str(corpus / "annotations.csv"),
                 "--out", str(dataset), "--config", str(cfg)]) == 0
    outs = []
    for name in ("runA", "runB"):
        out = tmp_path / name
        code = main(["crossval", "--config", str(cfg), "--data",
                     str(dataset), "--out", str(out)])
        assert code == 0
        outs.append(out)
    files_a = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                     if p.is_file())
    files_b = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*")
                     if p.is_file())
    same_names = files_a == files_b
    diff = [str(rel) for rel in files_a
            if (outs[0] / rel).read_bytes() != (outs[1] / rel).read_bytes()]
    ok = same_names and not diff and len(files_a) > 0
    detail = _verdict(
        capsys, 8, "repeat-run determinism", ok,
        f"{len(files_a)} report files compared, "
        + ("all bit-identical" if ok else f"differences: {diff or 'layout'}"),
    )
    assert ok, detail


# --------------------------------------------------------------------
# criterion 9: window-count arithmetic


def test_criterion_9_window_arithmetic(capsys):
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(18, 5000))
        naive = len(range(0, n - 18 + 1, 2))
        if W.window_count(n) != naive:
            bad += 1
    # spot-check the generator itself against the arithmetic
    data = rng.normal(size=(96, 27, 3))
    seq = SkeletonSequence(subject_id="s", data=data, first_frame=0)
    n96 = len(W.slide_windows(seq))
    ok = bad == 0 and W.window_count(96) == 40 and n96 == 40
    detail = _verdict(
        capsys, 9, "window-count arithmetic", ok,
        f"1000 lengths vs naive enumeration: {bad} mismatches; "
        f"96 frames -> {n96} windows",
    )
    assert ok, detail
