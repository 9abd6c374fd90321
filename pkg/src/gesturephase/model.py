"""The assembled labeler: window embedder, optional sequence encoder,
scoring head and either a CRF or independent per-window classification.

A model variant picks one cell of the 2 x 2 x 2 grid: label scheme
(multi-phase or binary), prediction layer (crf or classification) and
whether the sequence encoder is present. With the encoder absent the
window embeddings feed the head directly.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import windows as W
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .crf import LinearChainCrf
from .encoder import Encoder, Head, DEFAULT_MAX_LEN
from .errors import CheckpointError, ConfigError
from .graph import SkeletonGraph, graph_from_dict
from .nn import PRECISIONS, ParamBlock, assert_finite, check_unique_names, softmax
from .stgcn import WindowEmbedder

CRF = "crf"
CLASSIFICATION = "classification"
PREDICTIONS = (CRF, CLASSIFICATION)


@dataclass(frozen=True)
class ModelVariant:
    """One corner of the labeling/prediction/encoder grid."""

    labeling: str = W.MULTI_PHASE
    prediction: str = CRF
    encoder_present: bool = True

    def __post_init__(self):
        if self.labeling not in W.SCHEMES:
            raise ConfigError(f"labeling must be one of {W.SCHEMES}")
        if self.prediction not in PREDICTIONS:
            raise ConfigError(f"prediction must be one of {PREDICTIONS}")

    @property
    def n_labels(self) -> int:
        return len(W.scheme_labels(self.labeling))

    def slug(self) -> str:
        lab = "multiphase" if self.labeling == W.MULTI_PHASE else "binary"
        enc = "enc" if self.encoder_present else "noenc"
        return f"{lab}-{self.prediction}-{enc}"


def all_variants() -> list[ModelVariant]:
    out = []
    for labeling in W.SCHEMES:
        for prediction in PREDICTIONS:
            for enc in (False, True):
                out.append(ModelVariant(labeling, prediction, enc))
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions; the embedding dim is the last channel."""

    channels: tuple[int, ...] = (16, 32, 64)
    temporal_len: int = 5
    encoder_layers: int = 4
    attention_heads: int = 4
    ffn_width: int = 128
    head_hidden: int = 64
    positional: str = "sinusoidal"
    max_len: int = DEFAULT_MAX_LEN
    precision: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}")

    @property
    def embed_dim(self) -> int:
        return self.channels[-1]


class GestureModel:
    """End-to-end network for one variant.

    Construction consumes the given generator in a fixed order, so a
    fixed seed reproduces the exact initial parameters.
    """

    def __init__(self, variant: ModelVariant, graph: SkeletonGraph,
                 config: ModelConfig = ModelConfig(),
                 rng: np.random.Generator | None = None,
                 in_channels: int = 3):
        if rng is None:
            rng = np.random.default_rng(0)
        dtype = PRECISIONS[config.precision]
        self.variant = variant
        self.graph = graph
        self.config = config
        self.in_channels = in_channels
        self.embedder = WindowEmbedder(
            graph, in_channels, config.channels, config.temporal_len, rng, dtype
        )
        d = self.embedder.embed_dim
        self.encoder = None
        if variant.encoder_present:
            self.encoder = Encoder(
                d, config.attention_heads, config.ffn_width,
                config.encoder_layers, config.positional, config.max_len,
                rng, dtype,
            )
        self.head = Head(d, config.head_hidden, variant.n_labels, rng, dtype)
        self.crf = None
        if variant.prediction == CRF:
            self.crf = LinearChainCrf(variant.n_labels, dtype)
        check_unique_names(self.params())

    def params(self) -> list[ParamBlock]:
        out = list(self.embedder.params())
        if self.encoder is not None:
            out.extend(self.encoder.params())
        out.extend(self.head.params())
        if self.crf is not None:
            out.extend(self.crf.params())
        return out

    def forward_sequence(self, features: np.ndarray) -> np.ndarray:
        """(t, window_len, joints, channels) windows -> (t, n_labels) scores."""
        features = np.asarray(features)
        if features.ndim != 4:
            raise ConfigError(f"expected 4-d window features, got {features.shape}")
        dtype = PRECISIONS[self.config.precision]
        if features.dtype != dtype:
            features = features.astype(dtype)
        self._features = features
        h = self.embedder.forward(features)
        if self.encoder is not None:
            h = self.encoder.forward(h)
        return self.head.forward(h)

    def _backward_emissions(self, d_emissions: np.ndarray) -> None:
        d_h = self.head.backward(d_emissions)
        if self.encoder is not None:
            d_h = self.encoder.backward(d_h)
        self.embedder.backward(d_h)

    def loss_backward(self, features: np.ndarray, labels: np.ndarray,
                      scale: float = 1.0) -> float:
        """Sequence loss; gradients scaled by ``scale`` accumulate on the
        parameter blocks. Both variants report a per-window average (CRF
        NLL / t, classification cross-entropy mean) so a single learning
        rate covers them; the raw CRF objective is the sequence sum."""
        emissions = assert_finite("emissions", self.forward_sequence(features))
        labels = np.asarray(labels, dtype=np.int64)
        t = emissions.shape[0]
        if labels.shape != (t,):
            raise ConfigError(f"labels shape {labels.shape} does not match t={t}")
        if self.crf is not None:
            loss, d_emissions = self.crf.nll_backward(emissions, labels, scale / t)
            loss = loss / t
        else:
            probs = softmax(emissions.astype(np.float64), axis=1)
            picked = probs[np.arange(t), labels]
            loss = float(-np.log(picked).mean())
            d_emissions = probs
            d_emissions[np.arange(t), labels] -= 1.0
            d_emissions *= scale / t
            d_emissions = d_emissions.astype(emissions.dtype)
        self._backward_emissions(d_emissions)
        return float(loss)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Label codes for one window sequence."""
        emissions = self.forward_sequence(features)
        if self.crf is not None:
            return self.crf.decode(emissions)
        return np.argmax(emissions, axis=1).astype(np.int64)

    def transitions(self) -> np.ndarray | None:
        return None if self.crf is None else self.crf.transitions.value.copy()


def save_model(path, model: GestureModel, seed: int,
               config_snapshot: dict | None = None) -> None:
    """Write a self-contained checkpoint (architecture + graph + weights)."""
    snapshot = {
        "variant": asdict(model.variant),
        "model": asdict(model.config),
        "in_channels": model.in_channels,
        "graph": {
            "n_nodes": model.graph.n_nodes,
            "edges": [list(e) for e in model.graph.edges],
            "center": model.graph.center,
            "names": list(model.graph.names) if model.graph.names else None,
        },
        "run": config_snapshot or {},
    }
    save_checkpoint(path, model.params(), snapshot, seed,
                    extra={"graph_hash": model.graph.content_hash()})


def load_model(path) -> tuple[GestureModel, dict]:
    """Rebuild the model a checkpoint was saved from; returns (model, manifest)."""
    manifest, arrays = load_checkpoint(path)
    snap = manifest.get("config", {})
    try:
        variant = ModelVariant(**snap["variant"])
        config = ModelConfig(**{**snap["model"],
                                "channels": tuple(snap["model"]["channels"])})
        graph = graph_from_dict(snap["graph"])
        in_channels = int(snap.get("in_channels", 3))
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"incomplete config snapshot in {path}: {e}") from e
    recorded = manifest.get("graph_hash")
    if recorded is not None and recorded != graph.content_hash():
        raise CheckpointError("graph hash does not match the stored definition")
    model = GestureModel(variant, graph, config, np.random.default_rng(0), in_channels)
    restore_into(model.params(), arrays)
    return model, manifest
