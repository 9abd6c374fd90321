"""Prepared-dataset store: one container file per subject with the
windowed features, labels and sequence boundaries, plus a manifest
carrying the config hash, label counts and subject list."""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from . import windows as W
from .errors import DataError
from .util import dump_json, load_json, zip_writestr

MANIFEST_NAME = "manifest.json"
SUBJECT_DIR = "subjects"


def _pack_subject(path, subject_id: str, sequences: list[W.WindowSequence]) -> None:
    features = np.concatenate([s.features for s in sequences]).astype("<f4")
    labels = np.concatenate([s.labels for s in sequences]).astype(np.int8)
    starts = np.concatenate([s.starts for s in sequences]).astype("<i8")
    index = {
        "subject_id": subject_id,
        "feature_shape": list(features.shape),
        "seq_lengths": [len(s) for s in sequences],
        "partial": [bool(s.partial) for s in sequences],
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zip_writestr(zf, "index.json", json.dumps(index, sort_keys=True))
        zip_writestr(zf, "features.bin", features.tobytes())
        zip_writestr(zf, "labels.bin", labels.tobytes())
        zip_writestr(zf, "starts.bin", starts.tobytes())


def _unpack_subject(path) -> list[W.WindowSequence]:
    try:
        with zipfile.ZipFile(path, "r") as zf:
            index = json.loads(zf.read("index.json"))
            shape = tuple(index["feature_shape"])
            features = np.frombuffer(zf.read("features.bin"), dtype="<f4")
            features = features.reshape(shape).astype(np.float32, copy=True)
            labels = np.frombuffer(zf.read("labels.bin"), dtype=np.int8)
            starts = np.frombuffer(zf.read("starts.bin"), dtype="<i8")
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, ValueError) as e:
        raise DataError(f"unreadable subject file {path}: {e}") from e
    if labels.shape[0] != shape[0] or starts.shape[0] != shape[0]:
        raise DataError(f"{path}: window counts disagree across arrays")
    out = []
    lo = 0
    for length, partial in zip(index["seq_lengths"], index["partial"]):
        hi = lo + int(length)
        out.append(W.WindowSequence(
            subject_id=index["subject_id"],
            features=features[lo:hi],
            labels=labels[lo:hi].astype(np.int8, copy=True),
            starts=starts[lo:hi].astype(np.int64, copy=True),
            partial=bool(partial),
        ))
        lo = hi
    if lo != shape[0]:
        raise DataError(f"{path}: sequence lengths do not cover all windows")
    return out


def save_dataset(out_dir, per_subject: dict[str, list[W.WindowSequence]],
                 meta: dict) -> dict:
    """Write one container per subject plus the manifest; returns the
    manifest dict. ``meta`` must already carry config_hash etc."""
    out = Path(out_dir)
    (out / SUBJECT_DIR).mkdir(parents=True, exist_ok=True)
    all_sequences = [s for seqs in per_subject.values() for s in seqs]
    manifest = dict(meta)
    manifest["subjects"] = sorted(per_subject)
    manifest["label_counts"] = W.label_distribution(all_sequences)
    manifest["n_sequences"] = len(all_sequences)
    manifest["n_partial_sequences"] = sum(s.partial for s in all_sequences)
    manifest["n_windows"] = int(sum(len(s) for s in all_sequences))
    for sid in manifest["subjects"]:
        _pack_subject(out / SUBJECT_DIR / f"{sid}.zip", sid, per_subject[sid])
    dump_json(out / MANIFEST_NAME, manifest)
    return manifest


def load_dataset(data_dir):
    """Return (manifest, {subject_id: [WindowSequence, ...]})."""
    root = Path(data_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"no dataset manifest at {manifest_path}")
    manifest = load_json(manifest_path)
    per_subject = {}
    for sid in manifest.get("subjects", []):
        path = root / SUBJECT_DIR / f"{sid}.zip"
        if not path.is_file():
            raise DataError(f"dataset manifest lists {sid!r} but {path} is missing")
        per_subject[sid] = _unpack_subject(path)
    if not per_subject:
        raise DataError(f"dataset at {data_dir} has no subjects")
    return manifest, per_subject
