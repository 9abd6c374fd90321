"""Prepared-dataset store: per-subject containers plus manifest."""

import zipfile

import numpy as np
import pytest

from gesturephase import windows as W
from gesturephase.dataset import load_dataset, save_dataset
from gesturephase.errors import DataError


def make_sequences(subject_id, lengths, partial_last=False, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    frame = 0
    for i, t in enumerate(lengths):
        starts = frame + 2 * np.arange(t, dtype=np.int64)
        frame = int(starts[-1]) + 2
        out.append(W.WindowSequence(
            subject_id=subject_id,
            features=rng.normal(size=(t, 6, 4, 3)).astype(np.float32),
            labels=rng.integers(0, 4, size=t).astype(np.int8),
            starts=starts,
            partial=partial_last and i == len(lengths) - 1,
        ))
    return out


def sample_store(tmp_path, meta=None):
    per_subject = {
        "a": make_sequences("a", [5, 5, 3], partial_last=True, seed=1),
        "b": make_sequences("b", [5], seed=2),
    }
    manifest = save_dataset(tmp_path, per_subject,
                            meta or {"config_hash": "h", "seed": 4})
    return per_subject, manifest


def test_round_trip_exact(tmp_path):
    per_subject, _ = sample_store(tmp_path)
    _, loaded = load_dataset(tmp_path)
    assert set(loaded) == {"a", "b"}
    for sid, seqs in per_subject.items():
        got = loaded[sid]
        assert len(got) == len(seqs)
        for x, y in zip(seqs, got):
            assert y.subject_id == sid
            assert np.array_equal(x.features, y.features)
            assert np.array_equal(x.labels, y.labels)
            assert np.array_equal(x.starts, y.starts)
            assert x.partial == y.partial
            assert y.features.dtype == np.float32
            assert y.labels.dtype == np.int8
            assert y.starts.dtype == np.int64


def test_manifest_contents(tmp_path):
    _, manifest = sample_store(tmp_path)
    assert manifest["config_hash"] == "h"
    assert manifest["seed"] == 4
    assert manifest["subjects"] == ["a", "b"]
    assert manifest["n_sequences"] == 4
    assert manifest["n_partial_sequences"] == 1
    assert manifest["n_windows"] == 18
    counts = manifest["label_counts"]
    assert set(counts) == {"P", "S", "R", "N"}
    assert sum(row["count"] for row in counts.values()) == 18


def test_manifest_round_trips_from_disk(tmp_path):
    _, written = sample_store(tmp_path)
    loaded_manifest, _ = load_dataset(tmp_path)
    assert loaded_manifest == written


def test_identical_saves_identical_bytes(tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    sample_store(a_dir)
    sample_store(b_dir)
    for rel in ("manifest.json", "subjects/a.zip", "subjects/b.zip"):
        assert (a_dir / rel).read_bytes() == (b_dir / rel).read_bytes()


def test_missing_manifest_rejected(tmp_path):
    with pytest.raises(DataError, match="manifest"):
        load_dataset(tmp_path)


def test_missing_subject_file_rejected(tmp_path):
    sample_store(tmp_path)
    (tmp_path / "subjects" / "b.zip").unlink()
    with pytest.raises(DataError, match="missing"):
        load_dataset(tmp_path)


def test_corrupt_subject_file_rejected(tmp_path):
    sample_store(tmp_path)
    (tmp_path / "subjects" / "a.zip").write_bytes(b"garbage")
    with pytest.raises(DataError, match="unreadable"):
        load_dataset(tmp_path)


def test_empty_dataset_rejected(tmp_path):
    save_dataset(tmp_path, {}, {"config_hash": "h"})
    with pytest.raises(DataError, match="no subjects"):
        load_dataset(tmp_path)


def test_truncated_labels_rejected(tmp_path):
    sample_store(tmp_path)
    path = tmp_path / "subjects" / "b.zip"
    with zipfile.ZipFile(path) as zf:
        blobs = {n: zf.read(n) for n in zf.namelist()}
    blobs["labels.bin"] = blobs["labels.bin"][:-1]
    with zipfile.ZipFile(path, "w") as zf:
        for name, blob in blobs.items():
            zf.writestr(name, blob)
    with pytest.raises(DataError, match="disagree"):
        load_dataset(tmp_path)
