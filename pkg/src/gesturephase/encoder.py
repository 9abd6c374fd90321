"""Post-norm Transformer encoder over window embeddings, plus the
position-wise scoring head.

All forward/backward passes operate on one sequence at a time as a
(t, d) array. Attention mixes information across the t windows; the head
never does (it is a per-row MLP).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .nn import Layer, ParamBlock, softmax, uniform_init

POSITIONAL_KINDS = ("sinusoidal", "learned", "none")
DEFAULT_MAX_LEN = 64
LAYERNORM_EPS = 1e-5


def sinusoidal_table(max_len: int, d: int, dtype=np.float32) -> np.ndarray:
    """Fixed sine/cosine position table, (max_len, d)."""
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / d)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


class LayerNorm(Layer):
    def __init__(self, name: str, d: int, dtype=np.float32):
        self.gain = ParamBlock(f"{name}.gain", np.ones(d, dtype=dtype))
        self.bias = ParamBlock(f"{name}.bias", np.zeros(d, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.gain, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LAYERNORM_EPS)
        xhat = (x - mu) * inv_std
        self._cache = (xhat, inv_std)
        return xhat * self.gain.value + self.bias.value

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        xhat, inv_std = self._cache
        self.gain.grad += (d_out * xhat).sum(axis=0)
        self.bias.grad += d_out.sum(axis=0)
        d_xhat = d_out * self.gain.value
        m1 = d_xhat.mean(axis=-1, keepdims=True)
        m2 = (d_xhat * xhat).mean(axis=-1, keepdims=True)
        return inv_std * (d_xhat - m1 - xhat * m2)


class IdentityNorm(Layer):
    """Pass-through stand-in for LayerNorm, used to build exact-identity
    encoder configurations in tests."""

    def forward(self, x):
        return x

    def backward(self, d_out):
        return d_out


class MultiHeadSelfAttention(Layer):
    def __init__(self, name: str, d: int, heads: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if d % heads != 0:
            raise ConfigError(f"model dim {d} not divisible by {heads} heads")
        if rng is None:
            rng = np.random.default_rng(0)
        self.d = d
        self.heads = heads
        self.head_dim = d // heads
        self.wq = ParamBlock(f"{name}.wq", uniform_init(rng, (d, d), d, d, dtype))
        self.wk = ParamBlock(f"{name}.wk", uniform_init(rng, (d, d), d, d, dtype))
        self.wv = ParamBlock(f"{name}.wv", uniform_init(rng, (d, d), d, d, dtype))
        self.wo = ParamBlock(f"{name}.wo", uniform_init(rng, (d, d), d, d, dtype))
        self.last_attention = None
        self._cache = None

    def params(self):
        return [self.wq, self.wk, self.wv, self.wo]

    def _split(self, x):
        t = x.shape[0]
        return x.reshape(t, self.heads, self.head_dim).transpose(1, 0, 2)

    def forward(self, x: np.ndarray) -> np.ndarray:
        t = x.shape[0]
        q = self._split(x @ self.wq.value)                  # (h, t, dh)
        k = self._split(x @ self.wk.value)
        v = self._split(x @ self.wv.value)
        scores = q @ k.transpose(0, 2, 1) / math.sqrt(self.head_dim)
        attn = softmax(scores, axis=-1)                     # (h, t, t)
        ctx = (attn @ v).transpose(1, 0, 2).reshape(t, self.d)
        out = ctx @ self.wo.value
        self.last_attention = attn
        self._cache = (x, q, k, v, attn, ctx)
        return out

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        x, q, k, v, attn, ctx = self._cache
        t = x.shape[0]
        self.wo.grad += ctx.T @ d_out
        d_ctx = (d_out @ self.wo.value.T).reshape(t, self.heads, self.head_dim)
        d_ctx = d_ctx.transpose(1, 0, 2)                    # (h, t, dh)
        d_attn = d_ctx @ v.transpose(0, 2, 1)               # (h, t, t)
        d_v = attn.transpose(0, 2, 1) @ d_ctx
        d_scores = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True))
        d_scores /= math.sqrt(self.head_dim)
        d_q = d_scores @ k
        d_k = d_scores.transpose(0, 2, 1) @ q

        def merge(heads_arr):
            return heads_arr.transpose(1, 0, 2).reshape(t, self.d)

        d_q, d_k, d_v = merge(d_q), merge(d_k), merge(d_v)
        self.wq.grad += x.T @ d_q
        self.wk.grad += x.T @ d_k
        self.wv.grad += x.T @ d_v
        return d_q @ self.wq.value.T + d_k @ self.wk.value.T + d_v @ self.wv.value.T


class FeedForward(Layer):
    def __init__(self, name: str, d: int, width: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if rng is None:
            rng = np.random.default_rng(0)
        self.w1 = ParamBlock(f"{name}.w1", uniform_init(rng, (d, width), d, width, dtype))
        self.b1 = ParamBlock(f"{name}.b1", np.zeros(width, dtype=dtype))
        self.w2 = ParamBlock(f"{name}.w2", uniform_init(rng, (width, d), width, d, dtype))
        self.b2 = ParamBlock(f"{name}.b2", np.zeros(d, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: np.ndarray) -> np.ndarray:
        pre = x @ self.w1.value + self.b1.value
        hidden = np.maximum(pre, 0)
        self._cache = (x, pre, hidden)
        return hidden @ self.w2.value + self.b2.value

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        x, pre, hidden = self._cache
        self.w2.grad += hidden.T @ d_out
        self.b2.grad += d_out.sum(axis=0)
        d_hidden = (d_out @ self.w2.value.T) * (pre > 0)
        self.w1.grad += x.T @ d_hidden
        self.b1.grad += d_hidden.sum(axis=0)
        return d_hidden @ self.w1.value.T


class EncoderLayer(Layer):
    """Post-norm: norm(x + attention(x)), then norm(. + feedforward(.))."""

    def __init__(self, name: str, d: int, heads: int, ffn_width: int,
                 rng: np.random.Generator | None = None, dtype=np.float32,
                 norm: str = "layer"):
        self.mhsa = MultiHeadSelfAttention(f"{name}.mhsa", d, heads, rng, dtype)
        self.ffn = FeedForward(f"{name}.ffn", d, ffn_width, rng, dtype)
        if norm == "layer":
            self.norm1 = LayerNorm(f"{name}.norm1", d, dtype)
            self.norm2 = LayerNorm(f"{name}.norm2", d, dtype)
        elif norm == "identity":
            self.norm1 = IdentityNorm()
            self.norm2 = IdentityNorm()
        else:
            raise ConfigError(f"unknown norm {norm!r}")

    def params(self):
        return (self.mhsa.params() + self.norm1.params()
                + self.ffn.params() + self.norm2.params())

    def forward(self, x: np.ndarray) -> np.ndarray:
        x1 = self.norm1.forward(x + self.mhsa.forward(x))
        return self.norm2.forward(x1 + self.ffn.forward(x1))

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        d_sum2 = self.norm2.backward(d_out)
        d_x1 = d_sum2 + self.ffn.backward(d_sum2)
        d_sum1 = self.norm1.backward(d_x1)
        return d_sum1 + self.mhsa.backward(d_sum1)


class Encoder(Layer):
    """Positional encoding plus a stack of encoder layers.

    ``positional`` is one of "sinusoidal" (fixed table), "learned"
    (trainable table) or "none".
    """

    def __init__(self, d: int = 64, heads: int = 4, ffn_width: int = 128,
                 n_layers: int = 4, positional: str = "sinusoidal",
                 max_len: int = DEFAULT_MAX_LEN,
                 rng: np.random.Generator | None = None, dtype=np.float32,
                 norm: str = "layer"):
        if positional not in POSITIONAL_KINDS:
            raise ConfigError(f"positional must be one of {POSITIONAL_KINDS}")
        if n_layers < 1:
            raise ConfigError("need at least one encoder layer")
        if max_len < 1:
            raise ConfigError("max_len must be positive")
        if rng is None:
            rng = np.random.default_rng(0)
        self.d = d
        self.max_len = max_len
        self.positional = positional
        self.pos_table = None
        self.pos_param = None
        if positional == "sinusoidal":
            self.pos_table = sinusoidal_table(max_len, d, dtype)
        elif positional == "learned":
            self.pos_param = ParamBlock(
                "encoder.positions", uniform_init(rng, (max_len, d), max_len, d, dtype)
            )
        self.layers = [
            EncoderLayer(f"encoder.layer{i}", d, heads, ffn_width, rng, dtype, norm)
            for i in range(n_layers)
        ]
        self._t = None

    def params(self):
        out = [] if self.pos_param is None else [self.pos_param]
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def position_rows(self, t: int) -> np.ndarray:
        if self.positional == "sinusoidal":
            return self.pos_table[:t]
        if self.positional == "learned":
            return self.pos_param.value[:t]
        return 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ConfigError(f"expected (t, {self.d}) embeddings, got {x.shape}")
        t = x.shape[0]
        if t > self.max_len:
            raise ConfigError(f"sequence length {t} exceeds max_len {self.max_len}")
        self._t = t
        h = x + self.position_rows(t)
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        d_h = d_out
        for layer in reversed(self.layers):
            d_h = layer.backward(d_h)
        if self.pos_param is not None:
            self.pos_param.grad[:self._t] += d_h
        return d_h


class Head(Layer):
    """Two affine maps with a rectifier: d -> hidden -> n_labels, applied
    independently to every row."""

    def __init__(self, d: int, hidden: int, n_labels: int,
                 rng: np.random.Generator | None = None, dtype=np.float32,
                 name: str = "head"):
        if hidden < 1 or n_labels < 2:
            raise ConfigError("head needs hidden >= 1 and n_labels >= 2")
        if rng is None:
            rng = np.random.default_rng(0)
        self.w1 = ParamBlock(f"{name}.w1", uniform_init(rng, (d, hidden), d, hidden, dtype))
        self.b1 = ParamBlock(f"{name}.b1", np.zeros(hidden, dtype=dtype))
        self.w2 = ParamBlock(f"{name}.w2",
                             uniform_init(rng, (hidden, n_labels), hidden, n_labels, dtype))
        self.b2 = ParamBlock(f"{name}.b2", np.zeros(n_labels, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: np.ndarray) -> np.ndarray:
        pre = x @ self.w1.value + self.b1.value
        hidden = np.maximum(pre, 0)
        self._cache = (x, pre, hidden)
        return hidden @ self.w2.value + self.b2.value

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        x, pre, hidden = self._cache
        self.w2.grad += hidden.T @ d_out
        self.b2.grad += d_out.sum(axis=0)
        d_hidden = (d_out @ self.w2.value.T) * (pre > 0)
        self.w1.grad += x.T @ d_hidden
        self.b1.grad += d_hidden.sum(axis=0)
        return d_hidden @ self.w1.value.T
