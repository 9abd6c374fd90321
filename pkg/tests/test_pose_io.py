"""Pose file parsing, annotation IO, joint selection and coordinate
normalization."""

import json

import numpy as np
import pytest

from gesturephase import pose as P
from gesturephase.errors import (AnnotationError, ConfigError, DegeneratePoseError,
                                 FrameGapError, FrameShapeError, PoseParseError)


def write_lines(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def record(sid, idx, n=4):
    kps = []
    for j in range(n):
        kps.extend([3.0 * j, 3.0 * j + 1.0, 0.5])
    return {"subject_id": sid, "frame_index": idx, "keypoints": kps}


def small_selection(n=4):
    return P.identity_selection(n)


def test_parse_round_trip(tmp_path):
    path = tmp_path / "poses.jsonl"
    write_lines(path, [record("a", 0), record("a", 1), record("b", 5)])
    seqs = P.parse_pose_file(path, small_selection(), fps=20.0)
    assert [s.subject_id for s in seqs] == ["a", "b"]
    assert seqs[0].n_frames == 2
    assert seqs[1].first_frame == 5
    assert seqs[0].data.shape == (2, 4, 3)
    assert seqs[0].fps == 20.0


def test_write_then_parse_is_identity(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(0, 10, (6, 4, 3))
    data[:, :, 2] = rng.uniform(0.0, 1.0, (6, 4))
    seq = P.SkeletonSequence(subject_id="s", data=data, first_frame=3, fps=20.0)
    path = tmp_path / "out.jsonl"
    P.write_pose_file(path, [seq])
    back = P.parse_pose_file(path, small_selection())
    assert back[0].first_frame == 3
    assert np.array_equal(back[0].data, data)


def test_selection_reorders_joints(tmp_path):
    path = tmp_path / "poses.jsonl"
    write_lines(path, [record("a", 0)])
    sel = P.JointSelection(indices=(2, 0), source_count=4)
    seqs = P.parse_pose_file(path, sel)
    assert seqs[0].data.shape == (1, 2, 3)
    assert seqs[0].data[0, 0, 0] == 6.0   # source joint 2, x value
    assert seqs[0].data[0, 1, 0] == 0.0


def test_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "poses.jsonl"
    path.write_text('{"subject_id": "a", "frame_index": 0, "keypoints": [0,0,0]}\nnot json\n')
    with pytest.raises(PoseParseError) as err:
        P.parse_pose_file(path, small_selection(1))
    assert "2" in str(err.value)


def test_parse_rejects_bad_records(tmp_path):
    sel = small_selection()
    cases = [
        {"frame_index": 0, "keypoints": [0.0] * 12},                     # no subject
        {"subject_id": "", "frame_index": 0, "keypoints": [0.0] * 12},   # empty subject
        {"subject_id": "a", "frame_index": -1, "keypoints": [0.0] * 12},
        {"subject_id": "a", "frame_index": 0, "keypoints": "zzz"},
        {"subject_id": "a", "frame_index": 0, "keypoints": ["x"] * 12},
    ]
    for rec in cases:
        path = tmp_path / "p.jsonl"
        write_lines(path, [rec])
        with pytest.raises(PoseParseError):
            P.parse_pose_file(path, sel)


def test_parse_rejects_wrong_keypoint_count(tmp_path):
    path = tmp_path / "p.jsonl"
    write_lines(path, [record("a", 0, n=3)])
    with pytest.raises(FrameShapeError):
        P.parse_pose_file(path, small_selection(4))


def test_parse_rejects_duplicate_and_gapped_frames(tmp_path):
    path = tmp_path / "p.jsonl"
    write_lines(path, [record("a", 0), record("a", 0)])
    with pytest.raises(PoseParseError):
        P.parse_pose_file(path, small_selection())
    write_lines(path, [record("a", 0), record("a", 2)])
    with pytest.raises(FrameGapError) as err:
        P.parse_pose_file(path, small_selection())
    assert "missing frame 1" in str(err.value)


def test_parse_empty_file_rejected(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text("\n\n")
    with pytest.raises(PoseParseError):
        P.parse_pose_file(path, small_selection())


def test_default_selection_has_27_joints():
    sel = P.default_selection()
    assert len(sel) == 27
    assert len(set(sel.indices)) == 27
    assert all(0 <= i < sel.source_count for i in sel.indices)


def test_selection_from_dict_validates():
    with pytest.raises(ConfigError):
        P.selection_from_dict({"indices": [0, 0], "source_count": 4})
    with pytest.raises(ConfigError):
        P.selection_from_dict({"indices": [5], "source_count": 4})
    with pytest.raises(ConfigError):
        P.selection_from_dict({"source_count": 4})


def test_load_selection(tmp_path):
    path = tmp_path / "sel.json"
    path.write_text(json.dumps({"indices": [1, 0, 3], "source_count": 4}))
    sel = P.load_selection(path)
    assert sel.indices == (1, 0, 3)
    with pytest.raises(ConfigError):
        P.load_selection(tmp_path / "nothing.json")


# annotations

def test_annotation_round_trip(tmp_path):
    path = tmp_path / "ann.csv"
    per_subject = {
        "a": [P.StrokeAnnotation(5, 10), P.StrokeAnnotation(20, 30)],
        "b": [P.StrokeAnnotation(0, 3)],
    }
    P.write_annotations(path, per_subject)
    back = P.read_annotations(path)
    assert back == per_subject


def test_annotations_sorted_on_read(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text("subject_id,start_frame,end_frame\na,20,30\na,5,10\n")
    back = P.read_annotations(path)
    assert back["a"] == [P.StrokeAnnotation(5, 10), P.StrokeAnnotation(20, 30)]


def test_overlapping_annotations_rejected(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text("subject_id,start_frame,end_frame\na,5,15\na,10,20\n")
    with pytest.raises(AnnotationError):
        P.read_annotations(path)


def test_touching_annotations_allowed():
    anns = [P.StrokeAnnotation(0, 5), P.StrokeAnnotation(5, 9)]
    assert P.validate_annotations(anns) == anns


def test_annotation_interval_validation():
    with pytest.raises(AnnotationError):
        P.StrokeAnnotation(10, 10)
    with pytest.raises(AnnotationError):
        P.StrokeAnnotation(-1, 5)


def test_annotation_header_and_rows_checked(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text("subject,begin,end\na,0,5\n")
    with pytest.raises(AnnotationError):
        P.read_annotations(path)
    path.write_text("subject_id,start_frame,end_frame\na,zero,5\n")
    with pytest.raises(AnnotationError):
        P.read_annotations(path)


# normalization

def make_seq(data, sid="s"):
    return P.SkeletonSequence(subject_id=sid, data=np.asarray(data, dtype=np.float64),
                              fps=20.0)


def test_normalize_centers_and_scales():
    # three joints; scale pair (1, 2) distances are 2 and 4 -> divisor 3
    data = np.zeros((2, 3, 3))
    data[0, :, 0] = [0.0, 1.0, 3.0]   # frame 0 xs; dist(1,2) = 2
    data[1, :, 0] = [0.0, 2.0, 6.0]   # frame 1 xs; dist(1,2) = 4
    data[:, :, 2] = 0.5
    seq = make_seq(data)
    out = P.normalize_coords(seq, center=0, scale_pair=(1, 2))
    assert np.allclose(out.data[0, :, 0], [0.0, 1 / 3, 1.0])
    assert np.allclose(out.data[1, :, 0], [0.0, 2 / 3, 2.0])
    # confidences untouched
    assert np.allclose(out.data[:, :, 2], 0.5)


def test_normalize_midpoint_center():
    data = np.zeros((1, 3, 3))
    data[0, :, 0] = [0.0, 2.0, 4.0]
    data[0, :, 1] = [0.0, 0.0, 0.0]
    seq = make_seq(data)
    out = P.normalize_coords(seq, center=(0, 2), scale_pair=(0, 2))
    # midpoint x=2 subtracted, divided by distance 4
    assert np.allclose(out.data[0, :, 0], [-0.5, 0.0, 0.5])


def test_normalize_idempotent_up_to_roundoff():
    rng = np.random.default_rng(1)
    data = rng.normal(0, 30, (5, 4, 3))
    data[:, :, 2] = 0.5
    seq = make_seq(data)
    once = P.normalize_coords(seq, center=0, scale_pair=(1, 2))
    twice = P.normalize_coords(once, center=0, scale_pair=(1, 2))
    assert np.allclose(once.data[:, :, :2], twice.data[:, :, :2], atol=1e-12)


def test_normalize_rejects_degenerate_scale():
    data = np.zeros((2, 3, 3))
    with pytest.raises(DegeneratePoseError):
        P.normalize_coords(make_seq(data), center=0, scale_pair=(1, 2))


def test_normalize_validates_indices():
    data = np.zeros((1, 3, 3))
    with pytest.raises(ConfigError):
        P.normalize_coords(make_seq(data), center=9, scale_pair=(1, 2))


# sequence container

def test_sequence_validation():
    with pytest.raises(FrameShapeError):
        P.SkeletonSequence(subject_id="s", data=np.zeros((4, 3)), fps=20.0)
    with pytest.raises(ConfigError):
        P.SkeletonSequence(subject_id="s", data=np.zeros((4, 3, 3)), fps=0.0)
    with pytest.raises(PoseParseError):
        bad = np.zeros((4, 3, 3))
        bad[0, 0, 0] = np.nan
        P.SkeletonSequence(subject_id="s", data=bad, fps=20.0)
    with pytest.raises(PoseParseError):
        bad = np.zeros((4, 3, 3))
        bad[0, 0, 2] = 1.5
        P.SkeletonSequence(subject_id="s", data=bad, fps=20.0)
    seq = make_seq(np.zeros((4, 3, 3)))
    assert seq.n_frames == 4
    assert seq.n_joints == 3


def test_frame_accessor():
    data = np.arange(2 * 3 * 3, dtype=np.float64).reshape(2, 3, 3)
    data[:, :, 2] = 0.5
    seq = P.SkeletonSequence(subject_id="s", data=data, first_frame=10, fps=20.0)
    fr = seq.frame(11)
    assert fr.frame_index == 11
    assert fr.joints[0].x == data[1, 0, 0]
    assert fr.joints[0].y == data[1, 0, 1]
    with pytest.raises(IndexError):
        seq.frame(9)
