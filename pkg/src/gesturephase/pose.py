"""Skeleton keypoint input/output.

Pose files are newline-delimited JSON records, one per frame:

    {"subject_id": "s0", "frame_index": 0, "keypoints": [x0, y0, c0, x1, y1, c1, ...]}

where ``keypoints`` is a flat list of ``3 * source_count`` numbers (an
[x, y, confidence] triple per source keypoint, 133 sources by default).
Stroke annotations are CSV rows of subject_id, start_frame (inclusive),
end_frame (exclusive).
"""

from __future__ import annotations

import csv
import functools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    AnnotationError,
    ConfigError,
    DegeneratePoseError,
    FrameGapError,
    FrameShapeError,
    PoseParseError,
)

DEFAULT_FPS = 29.97
DEFAULT_SOURCE_COUNT = 133


@dataclass(frozen=True)
class Joint:
    x: float
    y: float
    confidence: float


@dataclass(frozen=True)
class SkeletonFrame:
    frame_index: int
    joints: tuple[Joint, ...]


@dataclass(frozen=True)
class JointSelection:
    """Maps source keypoint indices onto the model's joint order.

    Output joint order is exactly ``indices`` order. Indices must be
    distinct and fall inside ``[0, source_count)``.
    """

    indices: tuple[int, ...]
    source_count: int = DEFAULT_SOURCE_COUNT
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.source_count < 1:
            raise ConfigError(f"source_count must be positive, got {self.source_count}")
        if len(self.indices) == 0:
            raise ConfigError("joint selection is empty")
        if len(set(self.indices)) != len(self.indices):
            raise ConfigError("joint selection contains duplicate indices")
        bad = [i for i in self.indices if not 0 <= i < self.source_count]
        if bad:
            raise ConfigError(
                f"selection indices {bad} outside [0, {self.source_count})"
            )
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))
            if len(self.names) != len(self.indices):
                raise ConfigError("selection names do not match indices length")

    def __len__(self):
        return len(self.indices)


def selection_from_dict(raw: dict) -> JointSelection:
    try:
        return JointSelection(
            indices=tuple(raw["indices"]),
            source_count=int(raw["source_count"]),
            names=tuple(raw["names"]) if raw.get("names") else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad joint selection: {e}") from e


@functools.lru_cache(maxsize=1)
def default_selection() -> JointSelection:
    """27 upper-body joints (nose, shoulders, elbows, wrists, 10 per hand)
    picked from the 133-keypoint whole-body layout."""
    raw = json.loads(
        resources.files("gesturephase.data").joinpath("selection_133_27.json").read_text()
    )
    return selection_from_dict(raw)


def load_selection(path) -> JointSelection:
    """Joint selection from a JSON file with indices/source_count/names."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"selection file {path} does not exist")
    except json.JSONDecodeError as e:
        raise ConfigError(f"selection file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"selection file {path} must hold an object")
    return selection_from_dict(raw)


@dataclass(frozen=True)
class SkeletonSequence:
    """Contiguous run of skeleton frames for one subject.

    ``data`` has shape (n_frames, n_joints, 3) holding [x, y, confidence]
    per joint; frame ``i`` of the recording is ``first_frame + i``.
    """

    subject_id: str
    data: np.ndarray
    first_frame: int = 0
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", d)
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1:
            raise FrameShapeError(
                f"subject {self.subject_id!r}: expected (n_frames, n_joints, 3), got {d.shape}"
            )
        if not np.all(np.isfinite(d[:, :, :2])):
            raise PoseParseError(f"subject {self.subject_id!r}: non-finite coordinates")
        conf = d[:, :, 2]
        if not np.all((conf >= 0.0) & (conf <= 1.0)):
            raise PoseParseError(
                f"subject {self.subject_id!r}: confidence outside [0, 1]"
            )
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_joints(self) -> int:
        return self.data.shape[1]

    def frame(self, frame_index: int) -> SkeletonFrame:
        i = frame_index - self.first_frame
        if not 0 <= i < self.n_frames:
            raise IndexError(f"frame {frame_index} outside recording")
        joints = tuple(Joint(*row) for row in self.data[i])
        return SkeletonFrame(frame_index=frame_index, joints=joints)


@dataclass(frozen=True, order=True)
class StrokeAnnotation:
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame <= self.start_frame:
            raise AnnotationError(
                f"bad stroke interval [{self.start_frame}, {self.end_frame})"
            )


def validate_annotations(annotations: list[StrokeAnnotation]) -> list[StrokeAnnotation]:
    """Sort strokes and reject overlapping ones."""
    out = sorted(annotations)
    for a, b in zip(out, out[1:]):
        if b.start_frame < a.end_frame:
            raise AnnotationError(
                f"overlapping strokes [{a.start_frame}, {a.end_frame}) and "
                f"[{b.start_frame}, {b.end_frame})"
            )
    return out


def _parse_record(line: str, line_number: int, source_count: int):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise PoseParseError(f"invalid JSON ({e.msg})", line_number) from e
    if not isinstance(rec, dict):
        raise PoseParseError("record is not an object", line_number)
    sid = rec.get("subject_id")
    idx = rec.get("frame_index")
    kps = rec.get("keypoints")
    if not isinstance(sid, str) or not sid:
        raise PoseParseError("missing or invalid subject_id", line_number)
    if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
        raise PoseParseError("missing or invalid frame_index", line_number)
    if not isinstance(kps, list):
        raise PoseParseError("missing keypoints list", line_number)
    if len(kps) != 3 * source_count:
        raise FrameShapeError(
            f"line {line_number}: frame {idx} of subject {sid!r} has "
            f"{len(kps)} values for {len(kps) / 3:g} keypoints, expected {source_count}"
        )
    try:
        arr = np.asarray(kps, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise PoseParseError("keypoints must be numeric", line_number) from e
    if arr.shape != (3 * source_count,):
        raise PoseParseError("keypoints must be a flat numeric list", line_number)
    return sid, idx, arr.reshape(source_count, 3)


def parse_pose_file(path, selection: JointSelection | None = None,
                    fps: float = DEFAULT_FPS) -> list[SkeletonSequence]:
    """Read a pose file and return one SkeletonSequence per subject.

    Parameters
    ----------
    path : str or Path
        Newline-delimited JSON pose records.
    selection : JointSelection, optional
        Which source keypoints to keep, in which order. Defaults to the
        shipped 27-joint upper-body selection.
    fps : float
        Nominal frame rate stamped on the sequences.

    Returns
    -------
    list of SkeletonSequence, in order of first appearance in the file.

    Raises
    ------
    PoseParseError
        Malformed record, with the offending line number.
    FrameShapeError
        Keypoint count differs from ``selection.source_count``.
    FrameGapError
        Frame indices of a subject are not contiguous.
    """
    if selection is None:
        selection = default_selection()
    sel = np.asarray(selection.indices, dtype=np.intp)
    per_subject: dict[str, dict[int, np.ndarray]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            sid, idx, kp = _parse_record(line, line_number, selection.source_count)
            frames = per_subject.setdefault(sid, {})
            if idx in frames:
                raise PoseParseError(
                    f"duplicate frame {idx} for subject {sid!r}", line_number
                )
            frames[idx] = kp[sel]
    if not per_subject:
        raise PoseParseError(f"no pose records in {path}")
    sequences = []
    for sid, frames in per_subject.items():
        indices = sorted(frames)
        lo, hi = indices[0], indices[-1]
        if len(indices) != hi - lo + 1:
            present = set(indices)
            missing = next(i for i in range(lo, hi + 1) if i not in present)
            raise FrameGapError(
                f"subject {sid!r}: missing frame {missing} (have {lo}..{hi})"
            )
        data = np.stack([frames[i] for i in indices])
        sequences.append(
            SkeletonSequence(subject_id=sid, data=data, first_frame=lo, fps=fps)
        )
    return sequences


def write_pose_file(path, sequences: list[SkeletonSequence]) -> None:
    """Serialize sequences as newline-delimited JSON pose records.

    The keypoint count of the written records equals the sequences' joint
    count, so a file written from selected joints re-parses (with an
    identity selection) to bit-identical values.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            for i in range(seq.n_frames):
                rec = {
                    "subject_id": seq.subject_id,
                    "frame_index": seq.first_frame + i,
                    "keypoints": [float(v) for v in seq.data[i].ravel()],
                }
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def identity_selection(n_joints: int) -> JointSelection:
    return JointSelection(indices=tuple(range(n_joints)), source_count=n_joints)


_ANNOT_FIELDS = ["subject_id", "start_frame", "end_frame"]


def read_annotations(path) -> dict[str, list[StrokeAnnotation]]:
    """Read stroke annotations grouped by subject, sorted and overlap-checked."""
    per_subject: dict[str, list[StrokeAnnotation]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _ANNOT_FIELDS:
            raise AnnotationError(
                f"bad annotation header {reader.fieldnames}, expected {_ANNOT_FIELDS}"
            )
        for row_number, row in enumerate(reader, start=2):
            try:
                ann = StrokeAnnotation(int(row["start_frame"]), int(row["end_frame"]))
            except (TypeError, ValueError) as e:
                raise AnnotationError(f"row {row_number}: unparseable interval") from e
            sid = row["subject_id"]
            if not sid:
                raise AnnotationError(f"row {row_number}: empty subject_id")
            per_subject.setdefault(sid, []).append(ann)
    return {sid: validate_annotations(anns) for sid, anns in per_subject.items()}


def write_annotations(path, per_subject: dict[str, list[StrokeAnnotation]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ANNOT_FIELDS)
        for sid, anns in per_subject.items():
            for ann in validate_annotations(list(anns)):
                writer.writerow([sid, ann.start_frame, ann.end_frame])


DEFAULT_CENTER = (1, 2)       # shoulder midpoint in the 27-joint layout
DEFAULT_SCALE_PAIR = (1, 2)   # shoulder-to-shoulder distance


def normalize_coords(seq: SkeletonSequence,
                     center=DEFAULT_CENTER,
                     scale_pair=DEFAULT_SCALE_PAIR) -> SkeletonSequence:
    """Translate and scale a sequence into a body-relative frame.

    Each frame is translated so ``center`` (a joint index, or a pair of
    indices whose midpoint is used) sits at the origin, then all
    coordinates are divided by the mean distance between the
    ``scale_pair`` joints over the whole sequence. Confidences pass
    through unchanged. Applying the function twice is an identity up to
    floating-point round-off.
    """
    xy = seq.data[:, :, :2]
    n_joints = seq.n_joints
    if isinstance(center, (int, np.integer)):
        center_idx = (int(center),)
    else:
        center_idx = tuple(int(c) for c in center)
    i, j = (int(scale_pair[0]), int(scale_pair[1]))
    for k in (*center_idx, i, j):
        if not 0 <= k < n_joints:
            raise ConfigError(f"joint index {k} outside 0..{n_joints - 1}")
    dist = np.linalg.norm(xy[:, i, :] - xy[:, j, :], axis=1)
    divisor = float(dist.mean())
    if divisor == 0.0:
        raise DegeneratePoseError(
            f"subject {seq.subject_id!r}: zero mean distance between "
            f"scale pair ({i}, {j})"
        )
    origin = xy[:, center_idx, :].mean(axis=1, keepdims=True)
    out = seq.data.copy()
    out[:, :, :2] = (xy - origin) / divisor
    return SkeletonSequence(subject_id=seq.subject_id, data=out,
                            first_frame=seq.first_frame, fps=seq.fps)
