"""Sliding windows over skeleton sequences and phase label assignment.

A window of ``window_len`` frames starting at frame ``w`` covers the
half-open interval [w, w + window_len). Labels follow the overlap rules:

* S if the largest stroke overlap is at least half the window (an exact
  50% overlap counts as S),
* otherwise, with partial overlap, P when the overlap clips the stroke's
  start and R when it clips the stroke's end,
* N when no stroke is touched.

When a window touches two strokes the larger overlap decides; equal
overlaps resolve to P. A stroke lying strictly inside a window with at
most half overlap is classified by whichever stroke boundary lies nearer
the window center (equidistant resolves to P).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import SequenceTooShortError, ConfigError
from .pose import SkeletonSequence, StrokeAnnotation, validate_annotations

DEFAULT_WINDOW_LEN = 18
DEFAULT_STRIDE = 2
DEFAULT_SEQ_LEN = 40


class Phase(IntEnum):
    """Gesture phase codes. Order is fixed; serialized values rely on it."""

    P = 0  # preparation
    S = 1  # stroke
    R = 2  # retraction
    N = 3  # neutral

    @property
    def letter(self) -> str:
        return self.name


class BinaryLabel(IntEnum):
    O = 0  # anything but stroke
    S = 1  # stroke


MULTI_PHASE = "multi-phase"
BINARY = "binary"
SCHEMES = (MULTI_PHASE, BINARY)


def scheme_labels(scheme: str) -> tuple[str, ...]:
    if scheme == MULTI_PHASE:
        return ("P", "S", "R", "N")
    if scheme == BINARY:
        return ("O", "S")
    raise ConfigError(f"unknown labeling scheme {scheme!r}")


def neutral_code(scheme: str) -> int:
    return int(Phase.N) if scheme == MULTI_PHASE else int(BinaryLabel.O)


def to_binary(labels: np.ndarray) -> np.ndarray:
    """Map phase codes to the binary scheme: S stays S, all else O."""
    labels = np.asarray(labels)
    return (labels == int(Phase.S)).astype(np.int8)


@dataclass
class TimeWindow:
    """One fixed-length slice of a sequence; ``features`` is
    (window_len, n_joints, 3) and ``label`` a Phase code once assigned."""

    start_frame: int
    features: np.ndarray
    label: int | None = None

    @property
    def window_len(self) -> int:
        return self.features.shape[0]


@dataclass
class WindowSequence:
    """A run of consecutive windows fed to the model as one sequence.

    ``features`` is (t, window_len, n_joints, channels); ``labels`` is
    (t,) phase codes or None before labeling. ``partial`` marks a
    trailing group shorter than the configured sequence length.
    """

    subject_id: str
    features: np.ndarray
    labels: np.ndarray | None
    starts: np.ndarray
    partial: bool = False

    def __post_init__(self):
        if self.features.ndim != 4:
            raise ConfigError(f"features must be 4-d, got {self.features.shape}")
        t = self.features.shape[0]
        self.starts = np.asarray(self.starts, dtype=np.int64)
        if self.starts.shape != (t,):
            raise ConfigError("starts misaligned with features")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int8)
            if self.labels.shape != (t,):
                raise ConfigError("labels misaligned with features")

    def __len__(self):
        return self.features.shape[0]


def window_count(n_frames: int, window_len: int = DEFAULT_WINDOW_LEN,
                 stride: int = DEFAULT_STRIDE) -> int:
    """Number of windows in a sequence of ``n_frames`` frames."""
    if window_len < 1 or stride < 1:
        raise ConfigError("window_len and stride must be positive")
    if n_frames < window_len:
        raise SequenceTooShortError(
            f"{n_frames} frames is shorter than one {window_len}-frame window"
        )
    return (n_frames - window_len) // stride + 1


def slide_windows(seq: SkeletonSequence, window_len: int = DEFAULT_WINDOW_LEN,
                  stride: int = DEFAULT_STRIDE) -> list[TimeWindow]:
    """Cut a sequence into overlapping windows.

    Start frames are in recording coordinates (they honor
    ``seq.first_frame``), so stroke annotations line up directly.
    """
    count = window_count(seq.n_frames, window_len, stride)
    out = []
    for k in range(count):
        off = k * stride
        out.append(TimeWindow(
            start_frame=seq.first_frame + off,
            features=seq.data[off:off + window_len],
        ))
    return out


def _overlap_frames(start: int, window_len: int, stroke: StrokeAnnotation) -> int:
    lo = max(start, stroke.start_frame)
    hi = min(start + window_len, stroke.end_frame)
    return max(0, hi - lo)


def overlap_fraction(start: int, window_len: int, stroke: StrokeAnnotation) -> float:
    """Fraction of the window covered by the stroke."""
    if window_len < 1:
        raise ConfigError("window_len must be positive")
    return _overlap_frames(start, window_len, stroke) / window_len


def label_window(start: int, window_len: int,
                 annotations: list[StrokeAnnotation]) -> Phase:
    """Assign the phase label for the window [start, start + window_len).

    ``annotations`` are one subject's strokes; they are overlap-checked.
    """
    strokes = validate_annotations(list(annotations))
    overlaps = [(_overlap_frames(start, window_len, s), s) for s in strokes]
    overlaps = [(f, s) for f, s in overlaps if f > 0]
    if not overlaps:
        return Phase.N
    best = max(f for f, _ in overlaps)
    if 2 * best >= window_len:
        return Phase.S
    top = [s for f, s in overlaps if f == best]
    if len(top) > 1:
        return Phase.P
    stroke = top[0]
    end = start + window_len
    start_inside = start <= stroke.start_frame < end
    end_inside = start < stroke.end_frame <= end
    if start_inside and not end_inside:
        return Phase.P
    if end_inside and not start_inside:
        return Phase.R
    # Stroke strictly inside the window: both boundaries visible. Twice the
    # distance to the window center keeps the comparison in integers.
    d_start = abs(2 * stroke.start_frame - (start + end))
    d_end = abs(2 * stroke.end_frame - (start + end))
    return Phase.P if d_start <= d_end else Phase.R


def label_window_binary(start: int, window_len: int,
                        annotations: list[StrokeAnnotation]) -> BinaryLabel:
    """Binary scheme: S exactly when the multi-phase rule says S."""
    phase = label_window(start, window_len, annotations)
    return BinaryLabel.S if phase == Phase.S else BinaryLabel.O


def label_windows(windows: list[TimeWindow],
                  annotations: list[StrokeAnnotation]) -> list[TimeWindow]:
    """Assign multi-phase labels to every window in place."""
    strokes = validate_annotations(list(annotations))
    for w in windows:
        w.label = int(label_window(w.start_frame, w.window_len, strokes))
    return windows


def group_into_sequences(subject_id: str, windows: list[TimeWindow],
                         seq_len: int = DEFAULT_SEQ_LEN,
                         dtype=np.float32) -> list[WindowSequence]:
    """Pack consecutive windows into fixed-length sequences.

    The trailing group keeps whatever windows remain (at least one) and
    is flagged partial; training skips those, evaluation keeps them.
    """
    if seq_len < 1:
        raise ConfigError("seq_len must be positive")
    out = []
    for lo in range(0, len(windows), seq_len):
        chunk = windows[lo:lo + seq_len]
        labels = None
        if all(w.label is not None for w in chunk):
            labels = np.asarray([w.label for w in chunk], dtype=np.int8)
        out.append(WindowSequence(
            subject_id=subject_id,
            features=np.stack([w.features for w in chunk]).astype(dtype),
            labels=labels,
            starts=np.asarray([w.start_frame for w in chunk], dtype=np.int64),
            partial=len(chunk) < seq_len,
        ))
    return out


def label_distribution(sequences: list[WindowSequence],
                       scheme: str = MULTI_PHASE) -> dict[str, dict]:
    """Counts and percentages per label over a set of labeled sequences."""
    names = scheme_labels(scheme)
    counts = {name: 0 for name in names}
    total = 0
    for seq in sequences:
        if seq.labels is None:
            raise ConfigError(f"sequence for subject {seq.subject_id!r} is unlabeled")
        labels = seq.labels if scheme == MULTI_PHASE else to_binary(seq.labels)
        for code, n in zip(*np.unique(labels, return_counts=True)):
            counts[names[int(code)]] += int(n)
            total += int(n)
    return {
        name: {"count": counts[name],
               "percent": 100.0 * counts[name] / total if total else 0.0}
        for name in names
    }
