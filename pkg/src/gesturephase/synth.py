"""Synthetic skeleton corpus with known gesture phases.

Each subject is a rest pose plus gesture units placed along the
timeline with neutral gaps. A unit is a preparation ramp (hands rise), a
stroke (oscillation around the raised position) and a retraction ramp
back to rest. Phase durations come from clipped geometric draws around
the configured means; per-subject scale/offset and Gaussian coordinate
noise are applied on top. Only stroke intervals are exported as
annotations, mirroring how real corpora are labeled; the full phase
timeline is kept in the truth structure for diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import windows as W
from .errors import ConfigError, DataError
from .pose import (
    DEFAULT_FPS,
    JointSelection,
    SkeletonSequence,
    StrokeAnnotation,
    default_selection,
    write_annotations,
    write_pose_file,
)

_TAG_SUBJECT = 101

# Rest pose template in torso units, 27 joints, matching the shipped
# selection order (nose, shoulders, elbows, wrists, 10 per hand).
_BODY = [
    (0.00, 1.00),            # nose
    (-0.55, 0.55), (0.55, 0.55),   # shoulders
    (-0.80, -0.05), (0.80, -0.05),  # elbows
    (-0.85, -0.65), (0.85, -0.65),  # wrists
]
_HAND_LOCAL = [
    (-0.03, -0.08),          # hand root
    (-0.14, -0.13),          # thumb tip
    (-0.06, -0.17), (-0.08, -0.24),  # index base/tip
    (-0.02, -0.18), (-0.03, -0.26),  # middle base/tip
    (0.02, -0.17), (0.03, -0.25),    # ring base/tip
    (0.06, -0.15), (0.08, -0.22),    # pinky base/tip
]


def rest_pose_template() -> np.ndarray:
    """(27, 2) rest pose in torso units."""
    rows = list(_BODY)
    lw = _BODY[5]
    rows += [(lw[0] + dx, lw[1] + dy) for dx, dy in _HAND_LOCAL]
    rw = _BODY[6]
    rows += [(rw[0] - dx, rw[1] + dy) for dx, dy in _HAND_LOCAL]
    return np.asarray(rows, dtype=np.float64)


# Raised-hand displacement per joint in torso units (prep target), and
# how strongly the stroke oscillation moves each joint horizontally.
def _motion_profile() -> tuple[np.ndarray, np.ndarray]:
    lift = np.zeros((27, 2))
    wiggle = np.zeros(27)
    for j, weight in ((3, 0.35), (4, 0.35), (5, 1.0), (6, 1.0)):
        side = -1.0 if j % 2 == 1 else 1.0
        lift[j] = (side * -0.25, 0.95 * weight)
        wiggle[j] = weight
    for j in range(7, 17):      # left hand follows the left wrist
        lift[j] = (0.25, 0.95)
        wiggle[j] = 1.0
    for j in range(17, 27):     # right hand follows the right wrist
        lift[j] = (-0.25, 0.95)
        wiggle[j] = 1.0
    return lift, wiggle


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 8
    frames_per_subject: int = 4800
    fps: float = DEFAULT_FPS
    gesture_rate: float = 15.0          # gesture units per minute
    prep_mean: int = 8
    stroke_mean: int = 17               # round(0.58 s * 29.97 fps)
    retr_mean: int = 8
    min_gap: int = 1
    noise_sigma: float = 1.0            # coordinate units
    torso_scale: float = 100.0          # template unit -> coordinate units
    oscillation_amp: float = 0.18       # torso units
    oscillation_hz: float = 3.0
    subject_scale_jitter: float = 0.1
    subject_offset_jitter: float = 25.0

    def __post_init__(self):
        if self.n_subjects < 1 or self.frames_per_subject < 1:
            raise ConfigError("n_subjects and frames_per_subject must be positive")
        if min(self.prep_mean, self.stroke_mean, self.retr_mean) < 2:
            raise ConfigError("phase duration means must be at least 2 frames")
        if self.fps <= 0 or self.gesture_rate <= 0:
            raise ConfigError("fps and gesture_rate must be positive")
        if self.noise_sigma < 0 or self.min_gap < 1:
            raise ConfigError("need noise_sigma >= 0 and min_gap >= 1")
        slot = self.fps * 60.0 / self.gesture_rate
        mean_unit = self.prep_mean + self.stroke_mean + self.retr_mean
        if slot < mean_unit + self.min_gap + 1:
            raise ConfigError(
                f"gesture_rate {self.gesture_rate}/min leaves {slot:.1f} frames per "
                f"unit of mean length {mean_unit}; no room for neutral gaps"
            )


@dataclass(frozen=True)
class SynthUnit:
    prep: tuple[int, int]
    stroke: tuple[int, int]
    retr: tuple[int, int]


@dataclass
class SubjectTruth:
    subject_id: str
    units: list[SynthUnit]
    rest_pose: np.ndarray      # (27, 2) after the subject transform
    scale: float
    offset: tuple[float, float]


@dataclass
class SynthTruth:
    seed: int
    subjects: list[SubjectTruth] = field(default_factory=list)

    def annotations(self) -> dict[str, list[StrokeAnnotation]]:
        return {
            s.subject_id: [StrokeAnnotation(*u.stroke) for u in s.units]
            for s in self.subjects
        }

    def gesture_count(self) -> int:
        return sum(len(s.units) for s in self.subjects)


def _clipped_geometric(rng: np.random.Generator, mean: float, low: int) -> int:
    draw = int(rng.geometric(1.0 / mean))
    return int(np.clip(draw, low, int(round(4 * mean))))


def _subject_units(rng, cfg: SynthConfig) -> list[SynthUnit]:
    slot = cfg.fps * 60.0 / cfg.gesture_rate
    mean_unit = cfg.prep_mean + cfg.stroke_mean + cfg.retr_mean
    gap_mean = max(float(cfg.min_gap), slot - mean_unit)
    units = []
    t = _clipped_geometric(rng, gap_mean, cfg.min_gap)
    while True:
        dp = _clipped_geometric(rng, cfg.prep_mean, 2)
        ds = _clipped_geometric(rng, cfg.stroke_mean, 2)
        dr = _clipped_geometric(rng, cfg.retr_mean, 2)
        if t + dp + ds + dr + cfg.min_gap > cfg.frames_per_subject:
            break
        units.append(SynthUnit(
            prep=(t, t + dp),
            stroke=(t + dp, t + dp + ds),
            retr=(t + dp + ds, t + dp + ds + dr),
        ))
        t = t + dp + ds + dr + _clipped_geometric(rng, gap_mean, cfg.min_gap)
    return units


def frame_phases(units: list[SynthUnit], n_frames: int) -> np.ndarray:
    """Per-frame phase codes for a subject's timeline."""
    phases = np.full(n_frames, int(W.Phase.N), dtype=np.int8)
    for u in units:
        phases[u.prep[0]:u.prep[1]] = int(W.Phase.P)
        phases[u.stroke[0]:u.stroke[1]] = int(W.Phase.S)
        phases[u.retr[0]:u.retr[1]] = int(W.Phase.R)
    return phases


def _synthesize_subject(subject_id: str, rng, cfg: SynthConfig):
    scale = 1.0 + rng.uniform(-cfg.subject_scale_jitter, cfg.subject_scale_jitter)
    offset = rng.uniform(-cfg.subject_offset_jitter, cfg.subject_offset_jitter, size=2)
    units = _subject_units(rng, cfg)

    template = rest_pose_template()
    lift, wiggle = _motion_profile()
    n = cfg.frames_per_subject
    pose = np.repeat(template[None, :, :], n, axis=0)   # (n, 27, 2) torso units

    for u in units:
        p0, p1 = u.prep
        s0, s1 = u.stroke
        r0, r1 = u.retr
        ramp = (np.arange(p0, p1) - p0 + 1) / (p1 - p0)
        pose[p0:p1] += ramp[:, None, None] * lift[None, :, :]
        pose[s0:s1] += lift[None, :, :]
        beat = cfg.oscillation_amp * np.sin(
            2.0 * math.pi * cfg.oscillation_hz * (np.arange(s0, s1) - s0) / cfg.fps
        )
        pose[s0:s1, :, 0] += beat[:, None] * wiggle[None, :]
        fall = 1.0 - (np.arange(r0, r1) - r0 + 1) / (r1 - r0)
        pose[r0:r1] += fall[:, None, None] * lift[None, :, :]

    coords = offset[None, None, :] + cfg.torso_scale * scale * pose
    if cfg.noise_sigma > 0:
        coords = coords + rng.normal(0.0, cfg.noise_sigma, size=coords.shape)
    conf = rng.uniform(0.5, 1.0, size=(n, 27))
    data = np.concatenate([coords, conf[:, :, None]], axis=2)
    seq = SkeletonSequence(subject_id=subject_id, data=data, first_frame=0, fps=cfg.fps)
    truth = SubjectTruth(
        subject_id=subject_id,
        units=units,
        rest_pose=offset[None, :] + cfg.torso_scale * scale * template,
        scale=float(scale),
        offset=(float(offset[0]), float(offset[1])),
    )
    return seq, truth


def generate(cfg: SynthConfig, seed: int) -> tuple[list[SkeletonSequence], SynthTruth]:
    """Generate the corpus. Bit-identical for identical (cfg, seed)."""
    sequences = []
    truth = SynthTruth(seed=int(seed))
    for i in range(cfg.n_subjects):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), _TAG_SUBJECT, i)))
        seq, sub = _synthesize_subject(f"s{i:02d}", rng, cfg)
        sequences.append(seq)
        truth.subjects.append(sub)
    return sequences, truth


def truth_labels(sub: SubjectTruth, starts, window_len: int,
                 n_frames: int) -> np.ndarray:
    """Diagnostic per-window labels from the full phase timeline.

    Majority phase over the window's frames; ties resolve in the
    precedence order S, P, R, N. The window grid must lie inside the
    subject's recording.
    """
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size and (starts.min() < 0 or starts.max() + window_len > n_frames):
        raise DataError("window grid extends outside the generated recording")
    phases = frame_phases(sub.units, n_frames)
    precedence = {int(W.Phase.S): 0, int(W.Phase.P): 1,
                  int(W.Phase.R): 2, int(W.Phase.N): 3}
    out = np.empty(starts.size, dtype=np.int8)
    for k, s in enumerate(starts):
        counts = np.bincount(phases[s:s + window_len], minlength=4)
        out[k] = max(range(4), key=lambda c: (counts[c], -precedence[c]))
    return out


def pad_to_source(seq: SkeletonSequence, selection: JointSelection) -> SkeletonSequence:
    """Embed a selected-joint sequence into full source keypoint records.

    Unmodeled source keypoints sit at the origin with confidence 0.5.
    """
    if seq.n_joints != len(selection):
        raise ConfigError(
            f"sequence has {seq.n_joints} joints, selection expects {len(selection)}"
        )
    full = np.zeros((seq.n_frames, selection.source_count, 3), dtype=np.float64)
    full[:, :, 2] = 0.5
    full[:, list(selection.indices), :] = seq.data
    return SkeletonSequence(subject_id=seq.subject_id, data=full,
                            first_frame=seq.first_frame, fps=seq.fps)


def write_corpus(out_dir, cfg: SynthConfig, seed: int,
                 selection: JointSelection | None = None) -> dict:
    """Generate and write poses.jsonl, annotations.csv and truth.json.

    Returns a small summary dict (also written as synth_manifest.json by
    the CLI, which adds the config hash).
    """
    from pathlib import Path

    if selection is None:
        selection = default_selection()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sequences, truth = generate(cfg, seed)
    write_pose_file(out / "poses.jsonl", [pad_to_source(s, selection) for s in sequences])
    write_annotations(out / "annotations.csv", truth.annotations())
    payload = {
        "seed": truth.seed,
        "config": asdict(cfg),
        "subjects": [
            {
                "subject_id": s.subject_id,
                "scale": s.scale,
                "offset": list(s.offset),
                "rest_pose": s.rest_pose.tolist(),
                "units": [
                    {"prep": list(u.prep), "stroke": list(u.stroke),
                     "retr": list(u.retr)}
                    for u in s.units
                ],
            }
            for s in truth.subjects
        ],
    }
    with open(out / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    return {
        "subjects": cfg.n_subjects,
        "frames_per_subject": cfg.frames_per_subject,
        "gestures": truth.gesture_count(),
    }
