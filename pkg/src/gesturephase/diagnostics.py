"""Gradient-check battery over every differentiable layer type.

Each case builds a tiny float64 instance, feeds it a random input and
checks the hand-derived backward pass against central differences. A
case redraws its input when any rectifier pre-activation sits too close
to the kink, where the finite-difference estimate itself is wrong.
"""

from __future__ import annotations

import zlib

import numpy as np

from .crf import LinearChainCrf, crf_nll_grad
from .encoder import (
    Encoder,
    EncoderLayer,
    FeedForward,
    Head,
    LayerNorm,
    MultiHeadSelfAttention,
)
from .errors import GradientCheckError
from .graph import SkeletonGraph
from .nn import ParamBlock, grad_check, softmax
from .stgcn import StgcnBlock, WindowEmbedder

GRAD_TOLERANCE = 1e-5
_KINK_MARGIN = 1e-3
_GRAD_FLOOR = 5e-4
_MAX_REDRAWS = 60


def _tiny_graph() -> SkeletonGraph:
    # 4-joint chain with a branch: 0-1, 1-2, 1-3, centered at 0
    return SkeletonGraph(n_nodes=4, edges=((0, 1), (1, 2), (1, 3)), center=0)


def _min_nonzero_grad(params) -> float:
    """Smallest nonzero |gradient| entry; exact zeros are structural
    (e.g. unused positional rows) and match the central difference
    exactly, so they are exempt from the floor."""
    gmin = np.inf
    for b in params:
        nz = np.abs(b.grad[b.grad != 0.0])
        if nz.size:
            gmin = min(gmin, float(nz.min()))
    return gmin


def _weighted_sum_case(layer, make_input, rng, preacts=lambda layer: ()):
    """Scalar loss = sum(w * layer(x)) at a well-conditioned test point.

    Redraws (x, w) while a rectifier input sits within the kink margin
    (central differences are wrong across the kink) or an analytic
    gradient entry falls below the magnitude floor (the difference
    quotient drowns in float64 roundoff there).
    """
    params = layer.params()
    for _ in range(_MAX_REDRAWS):
        x = make_input(rng)
        y = layer.forward(x)
        margins = [np.min(np.abs(p)) for p in preacts(layer)]
        if margins and min(margins) <= _KINK_MARGIN:
            continue
        w = rng.normal(size=y.shape)
        for b in params:
            b.zero_grad()
        layer.backward(w)
        conditioned = _min_nonzero_grad(params) > _GRAD_FLOOR
        for b in params:
            b.zero_grad()
        if conditioned:
            break
    else:
        raise GradientCheckError("could not find a well-conditioned test point")

    def forward():
        out = layer.forward(x)
        layer.backward(w)
        return float((out * w).sum())

    return forward, params


def _case_stgcn_block(rng):
    layer = StgcnBlock("blk", _tiny_graph(), c_in=2, c_out=3, temporal_len=3,
                       rng=rng, dtype=np.float64)
    make = lambda r: r.normal(size=(2, 4, 4, 2))
    return _weighted_sum_case(layer, make, rng,
                              preacts=lambda l: (l._cache[3],))


def _case_stgcn_residual(rng):
    layer = StgcnBlock("blk", _tiny_graph(), c_in=3, c_out=3, temporal_len=3,
                       rng=rng, dtype=np.float64, residual=True)
    make = lambda r: r.normal(size=(2, 4, 4, 3))
    return _weighted_sum_case(layer, make, rng,
                              preacts=lambda l: (l._cache[3],))


def _case_window_embedder(rng):
    layer = WindowEmbedder(_tiny_graph(), in_channels=2, channels=(3, 3),
                           temporal_len=3, rng=rng, dtype=np.float64)
    make = lambda r: r.normal(size=(3, 4, 4, 2))
    return _weighted_sum_case(layer, make, rng,
                              preacts=lambda l: tuple(b._cache[3] for b in l.blocks))


def _case_layer_norm(rng):
    layer = LayerNorm("ln", 6, dtype=np.float64)
    layer.gain.value[...] = rng.normal(size=6)
    layer.bias.value[...] = rng.normal(size=6)
    make = lambda r: r.normal(size=(4, 6))
    return _weighted_sum_case(layer, make, rng)


def _case_attention(rng):
    layer = MultiHeadSelfAttention("mhsa", d=6, heads=2, rng=rng, dtype=np.float64)
    make = lambda r: r.normal(size=(4, 6))
    return _weighted_sum_case(layer, make, rng)


def _case_feedforward(rng):
    layer = FeedForward("ffn", d=4, width=7, rng=rng, dtype=np.float64)
    layer.b1.value[...] = 0.1 * rng.normal(size=7)
    make = lambda r: r.normal(size=(3, 4))
    return _weighted_sum_case(layer, make, rng,
                              preacts=lambda l: (l._cache[1],))


def _case_encoder_layer(rng):
    layer = EncoderLayer("enc", d=6, heads=2, ffn_width=8, rng=rng, dtype=np.float64)
    make = lambda r: r.normal(size=(4, 6))
    return _weighted_sum_case(layer, make, rng,
                              preacts=lambda l: (l.ffn._cache[1],))


def _case_encoder_full(rng):
    layer = Encoder(d=6, heads=2, ffn_width=8, n_layers=2, positional="learned",
                    max_len=8, rng=rng, dtype=np.float64)
    make = lambda r: r.normal(size=(5, 6))
    return _weighted_sum_case(
        layer, make, rng,
        preacts=lambda l: tuple(e.ffn._cache[1] for e in l.layers),
    )


def _case_head(rng):
    layer = Head(d=5, hidden=6, n_labels=4, rng=rng, dtype=np.float64)
    layer.b1.value[...] = 0.1 * rng.normal(size=6)
    make = lambda r: r.normal(size=(3, 5))
    return _weighted_sum_case(layer, make, rng,
                              preacts=lambda l: (l._cache[1],))


def _case_crf(rng):
    t, n = 4, 3
    crf = LinearChainCrf(n, dtype=np.float64)
    crf.transitions.value[...] = 0.5 * rng.normal(size=(n, n))
    crf.start.value[...] = 0.5 * rng.normal(size=n)
    crf.end.value[...] = 0.5 * rng.normal(size=n)
    emissions = ParamBlock("emissions", rng.normal(size=(t, n)))
    labels = rng.integers(0, n, size=t)

    def forward():
        nll, d_e, d_t, d_s, d_end = crf_nll_grad(
            emissions.value, labels, crf.transitions.value,
            crf.start.value, crf.end.value,
        )
        emissions.grad += d_e
        crf.transitions.grad += d_t
        crf.start.grad += d_s
        crf.end.grad += d_end
        return nll

    return forward, [emissions, *crf.params()]


def _case_classification_loss(rng):
    t, n = 5, 4
    emissions = ParamBlock("emissions", rng.normal(size=(t, n)))
    labels = rng.integers(0, n, size=t)

    def forward():
        probs = softmax(emissions.value, axis=1)
        picked = probs[np.arange(t), labels]
        d = probs.copy()
        d[np.arange(t), labels] -= 1.0
        emissions.grad += d / t
        return float(-np.log(picked).mean())

    return forward, [emissions]


CASES = {
    "stgcn_block": _case_stgcn_block,
    "stgcn_block_residual": _case_stgcn_residual,
    "window_embedder": _case_window_embedder,
    "layer_norm": _case_layer_norm,
    "attention": _case_attention,
    "feedforward": _case_feedforward,
    "encoder_layer": _case_encoder_layer,
    "encoder_full": _case_encoder_full,
    "head": _case_head,
    "crf_nll": _case_crf,
    "classification_loss": _case_classification_loss,
}


def run_gradient_checks(n_seeds: int = 20, tolerance: float = GRAD_TOLERANCE,
                        cases: dict | None = None) -> dict[str, float]:
    """Max relative error per case over ``n_seeds`` seeded instances.

    Raises GradientCheckError if any case exceeds ``tolerance``.
    """
    cases = CASES if cases is None else cases
    worst = {}
    for name, builder in cases.items():
        errs = []
        for seed in range(n_seeds):
            rng = np.random.default_rng(
                np.random.SeedSequence((zlib.crc32(name.encode()), seed)))
            forward, params = builder(rng)
            errs.append(grad_check(forward, params))
        worst[name] = max(errs)
    breaches = {k: v for k, v in worst.items() if v > tolerance}
    if breaches:
        raise GradientCheckError(
            f"gradient check exceeded {tolerance:g}: "
            + ", ".join(f"{k}={v:.3g}" for k, v in sorted(breaches.items()))
        )
    return worst
