"""Training and evaluation plumbing: subject-disjoint folds, per-epoch
class balancing, the SGD loop and fold orchestration.

Determinism contract: given the same sequences, configuration and seed,
training is bit-identical. All randomness flows from numpy SeedSequences
keyed by (seed, purpose tag, epoch/fold), and gradient reductions happen
in a fixed order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import windows as W
from .errors import ConfigError, DataError, DivergenceError
from .graph import SkeletonGraph
from .model import GestureModel, ModelConfig, ModelVariant
from .nn import LrSchedule, lr_at, sgd_step

# SeedSequence purpose tags; changing them invalidates reproducibility.
_TAG_INIT = 1
_TAG_BALANCE = 2
_TAG_FOLDS = 3


@dataclass(frozen=True)
class FoldPlan:
    fold_index: int
    train_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 16
    base_lr: float = 0.1
    warmup_epochs: int = 20
    decay_epoch: int = 50
    decay_factor: float = 10.0
    l2_weight: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.l2_weight < 0:
            raise ConfigError("l2_weight must be non-negative")
        self.schedule()  # validates the remaining fields

    def schedule(self) -> LrSchedule:
        total = max(self.epochs, self.decay_epoch)
        return LrSchedule(self.base_lr, self.warmup_epochs, self.decay_epoch,
                          self.decay_factor, total)


def derive_seed(seed: int, *keys: int) -> int:
    """Stable child seed for (seed, keys); keeps streams independent."""
    return int(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in keys))
               .generate_state(1)[0])


def make_folds(subject_ids, k: int, seed: int) -> list[FoldPlan]:
    """Subject-disjoint k-fold plan: seeded shuffle, round-robin assignment.

    Fold sizes differ by at most one; every subject appears in exactly
    one test fold.
    """
    ids = sorted(str(s) for s in subject_ids)
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate subject ids")
    if k < 2:
        raise ConfigError(f"need k >= 2 folds, got {k}")
    if k > len(ids):
        raise ConfigError(f"k={k} folds but only {len(ids)} subjects")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _TAG_FOLDS)))
    order = [ids[i] for i in rng.permutation(len(ids))]
    buckets = [order[f::k] for f in range(k)]
    plans = []
    for f, test in enumerate(buckets):
        train = tuple(s for s in order if s not in set(test))
        plans.append(FoldPlan(fold_index=f, train_subjects=train,
                              test_subjects=tuple(test)))
    return plans


def balance_epoch(sequences: list[W.WindowSequence], seed: int, epoch: int,
                  neutral: int) -> list[W.WindowSequence]:
    """Per-epoch training subset: every sequence with at least one
    non-neutral label, plus an equally sized fresh draw (without
    replacement) of all-neutral sequences. Short draw if there are fewer
    all-neutral sequences than that."""
    gesture, idle = [], []
    for seq in sequences:
        if seq.labels is None:
            raise DataError(f"unlabeled sequence for subject {seq.subject_id!r}")
        (gesture if np.any(seq.labels != neutral) else idle).append(seq)
    rng = np.random.default_rng(
        np.random.SeedSequence((int(seed), _TAG_BALANCE, int(epoch))))
    take = min(len(gesture), len(idle))
    subset = list(gesture)
    if take:
        for i in rng.choice(len(idle), size=take, replace=False):
            subset.append(idle[int(i)])
    order = rng.permutation(len(subset))
    return [subset[int(i)] for i in order]


def scheme_sequences(sequences: list[W.WindowSequence],
                     labeling: str) -> list[W.WindowSequence]:
    """Map stored multi-phase labels onto the variant's scheme."""
    if labeling == W.MULTI_PHASE:
        return list(sequences)
    out = []
    for seq in sequences:
        labels = None if seq.labels is None else W.to_binary(seq.labels)
        out.append(W.WindowSequence(seq.subject_id, seq.features, labels,
                                    seq.starts, seq.partial))
    return out


def _batches(items, size):
    for lo in range(0, len(items), size):
        yield items[lo:lo + size]


def train(sequences: list[W.WindowSequence], variant: ModelVariant,
          graph: SkeletonGraph, model_config: ModelConfig,
          train_config: TrainConfig, seed: int,
          log_hook=None) -> tuple[GestureModel, list[dict]]:
    """Train one variant from scratch on labeled window sequences.

    Partial sequences are excluded here but kept by evaluation. Returns
    the model and one log record per epoch (epoch, lr, mean loss over
    the balanced subset, wall seconds).
    """
    mapped = scheme_sequences(sequences, variant.labeling)
    full = [s for s in mapped if not s.partial]
    if not full:
        raise DataError("no complete sequences to train on")
    neutral = W.neutral_code(variant.labeling)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _TAG_INIT)))
    model = GestureModel(variant, graph, model_config, rng)
    schedule = train_config.schedule()
    params = model.params()
    log = []
    for epoch in range(train_config.epochs):
        started = time.monotonic()
        subset = balance_epoch(full, seed, epoch, neutral)
        if not subset:
            raise DataError("balanced subset is empty; no gesture sequences")
        lr = lr_at(schedule, epoch)
        total_loss = 0.0
        for batch in _batches(subset, train_config.batch_size):
            scale = 1.0 / len(batch)
            for seq in batch:
                total_loss += model.loss_backward(seq.features, seq.labels, scale)
            if not np.isfinite(total_loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}; lower the learning rate"
                )
            sgd_step(params, lr, train_config.l2_weight)
        record = {
            "epoch": epoch,
            "lr": lr,
            "loss": total_loss / len(subset),
            "sequences": len(subset),
            "seconds": time.monotonic() - started,
        }
        log.append(record)
        if log_hook is not None:
            log_hook(record)
    return model, log


def predict_sequences(model: GestureModel,
                      sequences: list[W.WindowSequence]) -> list[np.ndarray]:
    """Decoded label codes per sequence (partial sequences included)."""
    return [model.predict(seq.features) for seq in sequences]


def split_by_subject(sequences: list[W.WindowSequence],
                     subjects) -> list[W.WindowSequence]:
    wanted = set(subjects)
    out = [s for s in sequences if s.subject_id in wanted]
    missing = wanted - {s.subject_id for s in out}
    if missing:
        raise DataError(f"no sequences for subjects {sorted(missing)}")
    return out
