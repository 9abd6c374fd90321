"""Spatio-temporal graph convolution over skeleton windows.

A block applies the partitioned spatial step

    sum_k (A_hat_k * M_k) (x W_k) + b

followed by a rectifier and a temporal convolution of odd extent L with
same-length padding (plus a residual path when channel counts match).
Inputs are (batch, frames, joints, channels) arrays; a window embedding
is the last block's output averaged over frames and joints.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .graph import SkeletonGraph
from .nn import Layer, ParamBlock, uniform_init


class StgcnBlock(Layer):
    """One spatial-temporal unit.

    Parameters
    ----------
    name : str
        Prefix for the parameter block names.
    graph : SkeletonGraph
        Supplies the normalized partition stack (frozen, not trained).
    c_in, c_out : int
        Channel counts.
    temporal_len : int
        Temporal kernel extent, odd.
    rng : numpy Generator
        Weight init stream.
    residual : bool
        Add the block input to the output; requires c_in == c_out.
    activation : bool
        Apply the rectifier after the spatial step. Tests disable it to
        compose exact identities.
    """

    def __init__(self, name: str, graph: SkeletonGraph, c_in: int, c_out: int,
                 temporal_len: int = 5, rng: np.random.Generator | None = None,
                 dtype=np.float32, residual: bool = False, activation: bool = True):
        if temporal_len < 1 or temporal_len % 2 == 0:
            raise ConfigError(f"temporal_len must be odd and positive, got {temporal_len}")
        if c_in < 1 or c_out < 1:
            raise ConfigError("channel counts must be positive")
        if residual and c_in != c_out:
            raise ConfigError(f"residual needs c_in == c_out, got {c_in} != {c_out}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.name = name
        self.graph = graph
        self.c_in = c_in
        self.c_out = c_out
        self.temporal_len = temporal_len
        self.residual = residual
        self.activation = activation
        self.a_hat = graph.normalized_partitions().astype(dtype)
        k = self.a_hat.shape[0]
        self.w = ParamBlock(
            f"{name}.w",
            np.stack([uniform_init(rng, (c_in, c_out), c_in, c_out, dtype)
                      for _ in range(k)]),
        )
        self.mask = ParamBlock(f"{name}.mask", np.ones_like(self.a_hat))
        self.spatial_bias = ParamBlock(f"{name}.spatial_bias",
                                       np.zeros(c_out, dtype=dtype))
        fan = c_out * temporal_len
        self.kernel = ParamBlock(
            f"{name}.kernel",
            uniform_init(rng, (temporal_len, c_out, c_out), fan, fan, dtype),
        )
        self.temporal_bias = ParamBlock(f"{name}.temporal_bias",
                                        np.zeros(c_out, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.w, self.mask, self.spatial_bias, self.kernel,
                self.temporal_bias]

    def _check_input(self, x):
        if x.ndim != 4:
            raise ConfigError(f"expected (batch, frames, joints, channels), got {x.shape}")
        if x.shape[2] != self.graph.n_nodes:
            raise ConfigError(
                f"joint axis {x.shape[2]} does not match graph size {self.graph.n_nodes}"
            )
        if x.shape[3] != self.c_in:
            raise ConfigError(f"channel axis {x.shape[3]} does not match c_in {self.c_in}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check_input(x)
        a_eff = self.a_hat * self.mask.value                       # (K, V, V)
        xw = np.einsum("ntvc,kcd->kntvd", x, self.w.value, optimize=True)
        spatial = np.einsum("kuv,kntvd->ntud", a_eff, xw, optimize=True)
        pre_act = spatial + self.spatial_bias.value
        hidden = np.maximum(pre_act, 0) if self.activation else pre_act

        pad = (self.temporal_len - 1) // 2
        t = x.shape[1]
        padded = np.pad(hidden, ((0, 0), (pad, pad), (0, 0), (0, 0)))
        out = np.zeros(x.shape[:3] + (self.c_out,), dtype=x.dtype)
        for l in range(self.temporal_len):
            out += padded[:, l:l + t] @ self.kernel.value[l]
        out += self.temporal_bias.value
        if self.residual:
            out = out + x
        self._cache = (x, xw, a_eff, pre_act, padded)
        return out

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        x, xw, a_eff, pre_act, padded = self._cache
        pad = (self.temporal_len - 1) // 2
        t = x.shape[1]

        self.temporal_bias.grad += d_out.sum(axis=(0, 1, 2))
        d_padded = np.zeros_like(padded)
        for l in range(self.temporal_len):
            self.kernel.grad[l] += np.tensordot(
                padded[:, l:l + t], d_out, axes=([0, 1, 2], [0, 1, 2])
            )
            d_padded[:, l:l + t] += d_out @ self.kernel.value[l].T
        d_hidden = d_padded[:, pad:pad + t]

        d_pre = d_hidden * (pre_act > 0) if self.activation else d_hidden
        self.spatial_bias.grad += d_pre.sum(axis=(0, 1, 2))
        # d spatial wrt mask goes through a_eff = a_hat * mask
        self.mask.grad += self.a_hat * np.einsum(
            "ntud,kntvd->kuv", d_pre, xw, optimize=True
        )
        d_xw = np.einsum("kuv,ntud->kntvd", a_eff, d_pre, optimize=True)
        self.w.grad += np.einsum("ntvc,kntvd->kcd", x, d_xw, optimize=True)
        d_x = np.einsum("kntvd,kcd->ntvc", d_xw, self.w.value, optimize=True)
        if self.residual:
            d_x = d_x + d_out
        return d_x


class WindowEmbedder(Layer):
    """Block stack plus global average pooling over frames and joints.

    Maps (batch, frames, joints, in_channels) to (batch, embed_dim) where
    embed_dim is the last block's channel count.
    """

    def __init__(self, graph: SkeletonGraph, in_channels: int = 3,
                 channels: tuple[int, ...] = (16, 32, 64), temporal_len: int = 5,
                 rng: np.random.Generator | None = None, dtype=np.float32,
                 residual: bool = True):
        if len(channels) < 1:
            raise ConfigError("need at least one block")
        if rng is None:
            rng = np.random.default_rng(0)
        self.blocks = []
        c_prev = in_channels
        for i, c in enumerate(channels):
            self.blocks.append(StgcnBlock(
                f"stgcn{i}", graph, c_prev, c, temporal_len=temporal_len,
                rng=rng, dtype=dtype, residual=residual and c_prev == c,
            ))
            c_prev = c
        self.embed_dim = c_prev
        self._pool_denom = None

    def params(self):
        out = []
        for b in self.blocks:
            out.extend(b.params())
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for block in self.blocks:
            h = block.forward(h)
        self._pool_denom = h.shape[1] * h.shape[2]
        return h.mean(axis=(1, 2))

    def backward(self, d_embed: np.ndarray) -> np.ndarray:
        last = self.blocks[-1]
        t, v = last._cache[0].shape[1], last._cache[0].shape[2]
        d_h = np.broadcast_to(
            d_embed[:, None, None, :] / self._pool_denom,
            (d_embed.shape[0], t, v, d_embed.shape[1]),
        ).astype(d_embed.dtype)
        for block in reversed(self.blocks):
            d_h = block.backward(d_h)
        return d_h
