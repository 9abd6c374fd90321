"""Shared fixtures: a small synthetic corpus and model settings sized
for fast tests. Session scope keeps generation to one pass."""

import numpy as np
import pytest

from gesturephase.graph import default_graph
from gesturephase.model import ModelConfig
from gesturephase.synth import SynthConfig, generate


TINY_SYNTH = SynthConfig(
    n_subjects=4,
    frames_per_subject=600,
    gesture_rate=19.0,
    noise_sigma=0.8,
)


@pytest.fixture(scope="session")
def graph():
    return default_graph()


@pytest.fixture(scope="session")
def tiny_model_config():
    return ModelConfig(channels=(4, 8), encoder_layers=1, attention_heads=2,
                       ffn_width=16, head_hidden=8)


@pytest.fixture(scope="session")
def tiny_corpus():
    """(sequences, truth) pair: 4 subjects, 600 frames each, seed 7."""
    return generate(TINY_SYNTH, seed=7)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """A written-out corpus directory (poses.jsonl, annotations.csv,
    truth.json) for IO and CLI tests."""
    from gesturephase.synth import write_corpus

    out = tmp_path_factory.mktemp("corpus")
    write_corpus(out, TINY_SYNTH, seed=7)
    return out


def random_sequence(rng, n_frames=60, n_joints=27, subject_id="subj"):
    from gesturephase.pose import SkeletonSequence

    data = np.zeros((n_frames, n_joints, 3), dtype=np.float64)
    data[:, :, :2] = rng.normal(0.0, 50.0, size=(n_frames, n_joints, 2))
    data[:, :, 2] = rng.uniform(0.2, 1.0, size=(n_frames, n_joints))
    return SkeletonSequence(subject_id=subject_id, data=data, fps=20.0)
