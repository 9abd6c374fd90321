"""Scikit-learn style wrapper around the full training pipeline.

The estimator consumes sequences rather than flat samples: ``X`` is a
list of (t_i, window_len, joints, channels) window-feature arrays and
``y`` a list of aligned label-code sequences, so it slots into
GroupKFold-style subject splits on the caller's side.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import windows as W
from .graph import default_graph
from .metrics import evaluate_labels
from .model import CRF, ModelConfig, ModelVariant
from .pipeline import TrainConfig, predict_sequences, train
from .validation import check_label_sequence, check_sequence_lists, check_window_features


class GesturePhaseLabeler(BaseEstimator):
    """Gesture phase sequence labeler (window embedder, optional
    sequence encoder, CRF or per-window classification).

    Parameters mirror the run configuration; ``fit`` trains from
    scratch with the given seed and is deterministic.
    """

    def __init__(self, labeling: str = W.MULTI_PHASE, prediction: str = CRF,
                 use_encoder: bool = True, channels: tuple[int, ...] = (16, 32, 64),
                 temporal_len: int = 5, encoder_layers: int = 4,
                 attention_heads: int = 4, ffn_width: int = 128,
                 head_hidden: int = 64, positional: str = "sinusoidal",
                 max_len: int = 64, precision: str = "float32",
                 epochs: int = 80, batch_size: int = 16, base_lr: float = 0.1,
                 warmup_epochs: int = 20, decay_epoch: int = 50,
                 decay_factor: float = 10.0, l2_weight: float = 1e-4,
                 graph=None, seed: int = 0):
        self.labeling = labeling
        self.prediction = prediction
        self.use_encoder = use_encoder
        self.channels = channels
        self.temporal_len = temporal_len
        self.encoder_layers = encoder_layers
        self.attention_heads = attention_heads
        self.ffn_width = ffn_width
        self.head_hidden = head_hidden
        self.positional = positional
        self.max_len = max_len
        self.precision = precision
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.warmup_epochs = warmup_epochs
        self.decay_epoch = decay_epoch
        self.decay_factor = decay_factor
        self.l2_weight = l2_weight
        self.graph = graph
        self.seed = seed

    def _variant(self) -> ModelVariant:
        return ModelVariant(labeling=self.labeling, prediction=self.prediction,
                            encoder_present=self.use_encoder)

    def _sequences(self, X, y):
        graph = self.graph if self.graph is not None else default_graph()
        variant = self._variant()
        out = []
        for i, x in enumerate(X):
            feats = check_window_features(x, n_joints=graph.n_nodes)
            labels = None
            if y is not None:
                # multi-phase codes are always accepted; binary variants
                # map them (or already-binary codes) onto {O, S}
                labels = check_label_sequence(y[i], feats.shape[0],
                                              len(W.scheme_labels(W.MULTI_PHASE)))
            out.append(W.WindowSequence(
                subject_id=str(i), features=feats,
                labels=None if labels is None else labels.astype(np.int8),
                starts=np.arange(feats.shape[0], dtype=np.int64),
                partial=False,
            ))
        return graph, variant, out

    def fit(self, X, y):
        """Train on labeled window sequences; returns self."""
        check_sequence_lists(X, y)
        if y is None:
            raise ValueError("y is required")
        graph, variant, sequences = self._sequences(X, y)
        model_config = ModelConfig(
            channels=tuple(self.channels), temporal_len=self.temporal_len,
            encoder_layers=self.encoder_layers, attention_heads=self.attention_heads,
            ffn_width=self.ffn_width, head_hidden=self.head_hidden,
            positional=self.positional, max_len=self.max_len,
            precision=self.precision,
        )
        train_config = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, base_lr=self.base_lr,
            warmup_epochs=self.warmup_epochs, decay_epoch=self.decay_epoch,
            decay_factor=self.decay_factor, l2_weight=self.l2_weight,
        )
        self.model_, self.train_log_ = train(
            sequences, variant, graph, model_config, train_config, self.seed
        )
        self.labels_ = W.scheme_labels(variant.labeling)
        self.n_labels_ = len(self.labels_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this GesturePhaseLabeler instance is not fitted yet"
            )

    def predict(self, X):
        """Decoded label codes, one array per input sequence."""
        self._check_fitted()
        check_sequence_lists(X)
        _, _, sequences = self._sequences(X, None)
        return predict_sequences(self.model_, sequences)

    def score(self, X, y) -> float:
        """Stroke F1 over the pooled windows of all sequences."""
        self._check_fitted()
        check_sequence_lists(X, y)
        pred = self.predict(X)
        scheme = self.model_.variant.labeling
        gold = [W.to_binary(g) if scheme == W.BINARY else np.asarray(g, dtype=np.int64)
                for g in y]
        report = evaluate_labels(gold, pred, scheme)
        return float(report["per_class"]["S"]["f1"])
