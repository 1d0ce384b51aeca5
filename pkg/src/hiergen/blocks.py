"""Transformer building blocks: multi-head attention, encoder/decoder
blocks (post-norm residual order), and learned positional embeddings.

All parameters are plain autodiff Tensors initialized uniform in
(-1/sqrt(h), 1/sqrt(h)). Blocks are immutable parameter holders after
construction; forward passes allocate per-call graph state only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    dropout,
    gather_rows,
    layer_norm,
    mask_fill,
    matmul,
    narrow,
    parameter,
    relu,
    softmax,
    transpose,
    uniform_init,
)


@dataclass(frozen=True)
class BlockConfig:
    hidden_dim: int
    num_heads: int
    ffn_dim: int = 0  # 0 -> 4 * hidden_dim
    dropout_p: float = 0.0
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.hidden_dim <= 0 or self.num_heads <= 0:
            raise ValueError("hidden_dim and num_heads must be positive")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.hidden_dim)

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads


def _maybe_dropout(x: Tensor, p: float, rng) -> Tensor:
    if rng is None or p == 0.0:
        return x
    return dropout(x, p, rng)


class MultiHeadAttention:
    """Split-head attention: per-head width h/num_heads, scaled by its sqrt.

    Query/key/value projections are stored fused as [h, h] matrices whose
    column blocks are the per-head weights; outputs are concatenated and
    projected by an output matrix.
    """

    def __init__(self, config: BlockConfig, rng: np.random.Generator):
        self.config = config
        h = config.hidden_dim
        bound = 1.0 / math.sqrt(h)
        self.w_query = uniform_init(rng, (h, h), bound)
        self.w_key = uniform_init(rng, (h, h), bound)
        self.w_value = uniform_init(rng, (h, h), bound)
        self.w_out = uniform_init(rng, (h, h), bound)

    def parameters(self) -> dict[str, Tensor]:
        return {
            "wq": self.w_query,
            "wk": self.w_key,
            "wv": self.w_value,
            "wo": self.w_out,
        }

    def forward(
        self,
        q_in: Tensor,
        k_in: Tensor,
        v_in: Tensor,
        mask: np.ndarray | None = None,
        return_weights: bool = False,
    ):
        """Inputs are [..., seq, h]; leading axes broadcast (batched calls
        share the projection weights). ``mask[..., i, j]`` True lets query
        row i see key row j."""
        h = self.config.hidden_dim
        if q_in.shape[-1] != h or k_in.shape[-1] != h or v_in.shape[-1] != h:
            raise ValueError(
                f"attention inputs must have width {h}, got "
                f"{q_in.shape}/{k_in.shape}/{v_in.shape}"
            )
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            expected = (q_in.shape[-2], k_in.shape[-2])
            if mask.shape[-2:] != expected:
                raise ValueError(
                    f"mask shape {mask.shape} does not match query/key rows {expected}"
                )
            if not mask.any(axis=-1).all():
                raise ValueError("some query row has every key masked out")

        d = self.config.head_dim
        q_all = matmul(q_in, self.w_query)
        k_all = matmul(k_in, self.w_key)
        v_all = matmul(v_in, self.w_value)
        heads = []
        weights = []
        for i in range(self.config.num_heads):
            q = narrow(q_all, -1, i * d, d)
            k = narrow(k_all, -1, i * d, d)
            v = narrow(v_all, -1, i * d, d)
            logits = matmul(q, transpose(k)) * (1.0 / math.sqrt(d))
            if mask is not None:
                logits = mask_fill(logits, mask)
            att = softmax(logits, axis=-1)
            heads.append(matmul(att, v))
            if return_weights:
                weights.append(att)
        out = matmul(concat(heads, axis=-1), self.w_out)
        if return_weights:
            return out, weights
        return out


class FeedForward:
    """Two-layer MLP with ReLU, widths h -> ffn_dim -> h."""

    def __init__(self, config: BlockConfig, rng: np.random.Generator):
        h, f = config.hidden_dim, config.ffn_dim
        bound = 1.0 / math.sqrt(h)
        self.w1 = uniform_init(rng, (h, f), bound)
        self.b1 = uniform_init(rng, (f,), bound)
        self.w2 = uniform_init(rng, (f, h), 1.0 / math.sqrt(f))
        self.b2 = uniform_init(rng, (h,), 1.0 / math.sqrt(f))

    def parameters(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def forward(self, x: Tensor) -> Tensor:
        return matmul(relu(matmul(x, self.w1) + self.b1), self.w2) + self.b2


class _NormPair:
    def __init__(self, h: int):
        self.gain = parameter(np.ones(h))
        self.bias = parameter(np.zeros(h))


class EncoderBlock:
    """Self-attention sublayer then FFN sublayer, each residual + layer norm."""

    def __init__(self, config: BlockConfig, rng: np.random.Generator):
        self.config = config
        self.attn = MultiHeadAttention(config, rng)
        self.ffn = FeedForward(config, rng)
        self.norm1 = _NormPair(config.hidden_dim)
        self.norm2 = _NormPair(config.hidden_dim)

    def parameters(self) -> dict[str, Tensor]:
        out = {f"attn.{k}": v for k, v in self.attn.parameters().items()}
        out.update({f"ffn.{k}": v for k, v in self.ffn.parameters().items()})
        out.update(
            {
                "norm1.gain": self.norm1.gain,
                "norm1.bias": self.norm1.bias,
                "norm2.gain": self.norm2.gain,
                "norm2.bias": self.norm2.bias,
            }
        )
        return out

    def forward(self, x: Tensor, mask: np.ndarray | None = None, dropout_rng=None) -> Tensor:
        cfg = self.config
        att = _maybe_dropout(self.attn.forward(x, x, x, mask), cfg.dropout_p, dropout_rng)
        z = layer_norm(x + att, self.norm1.gain, self.norm1.bias, cfg.epsilon)
        ff = _maybe_dropout(self.ffn.forward(z), cfg.dropout_p, dropout_rng)
        return layer_norm(z + ff, self.norm2.gain, self.norm2.bias, cfg.epsilon)


class DecoderBlock:
    """Self-attention, source attention over encoder views, then FFN.

    The label stream is the query; the proposal views supply keys and
    values for the source-attention sublayer.
    """

    def __init__(self, config: BlockConfig, rng: np.random.Generator):
        self.config = config
        self.self_attn = MultiHeadAttention(config, rng)
        self.src_attn = MultiHeadAttention(config, rng)
        self.ffn = FeedForward(config, rng)
        self.norm1 = _NormPair(config.hidden_dim)
        self.norm2 = _NormPair(config.hidden_dim)
        self.norm3 = _NormPair(config.hidden_dim)

    def parameters(self) -> dict[str, Tensor]:
        out = {f"self_attn.{k}": v for k, v in self.self_attn.parameters().items()}
        out.update({f"src_attn.{k}": v for k, v in self.src_attn.parameters().items()})
        out.update({f"ffn.{k}": v for k, v in self.ffn.parameters().items()})
        for i, norm in enumerate((self.norm1, self.norm2, self.norm3), start=1):
            out[f"norm{i}.gain"] = norm.gain
            out[f"norm{i}.bias"] = norm.bias
        return out

    def forward(
        self,
        s: Tensor,
        memory: Tensor,
        self_mask: np.ndarray | None = None,
        dropout_rng=None,
    ) -> Tensor:
        if memory.shape[-2] == 0:
            raise ValueError("decoder needs at least one encoder view as memory")
        cfg = self.config
        att = _maybe_dropout(
            self.self_attn.forward(s, s, s, self_mask), cfg.dropout_p, dropout_rng
        )
        s_hat = layer_norm(s + att, self.norm1.gain, self.norm1.bias, cfg.epsilon)
        src = _maybe_dropout(
            self.src_attn.forward(s_hat, memory, memory), cfg.dropout_p, dropout_rng
        )
        z = layer_norm(s_hat + src, self.norm2.gain, self.norm2.bias, cfg.epsilon)
        ff = _maybe_dropout(self.ffn.forward(z), cfg.dropout_p, dropout_rng)
        return layer_norm(z + ff, self.norm3.gain, self.norm3.bias, cfg.epsilon)


class PositionalEmbedding:
    """Learned position table; lookups are ordinary differentiable gathers."""

    def __init__(self, max_len: int, hidden_dim: int, rng: np.random.Generator):
        self.max_len = max_len
        self.table = uniform_init(rng, (max_len, hidden_dim), 1.0 / math.sqrt(hidden_dim))

    def parameters(self) -> dict[str, Tensor]:
        return {"table": self.table}

    def lookup(self, index: int) -> Tensor:
        if not 0 <= index < self.max_len:
            raise IndexError(f"position {index} outside table of length {self.max_len}")
        return gather_rows(self.table, [index])

    def lookup_range(self, length: int) -> Tensor:
        if length > self.max_len:
            raise IndexError(
                f"sequence length {length} exceeds position table {self.max_len}"
            )
        return gather_rows(self.table, np.arange(length))


def causal_mask(n: int) -> np.ndarray:
    """Boolean [n, n] mask where row i may attend to columns <= i."""
    return np.tril(np.ones((n, n), dtype=bool))


def padding_mask(n_queries: int, n_keys: int, n_real: int) -> np.ndarray:
    """All queries see the first ``n_real`` keys; padded keys are hidden."""
    mask = np.zeros((n_queries, n_keys), dtype=bool)
    mask[:, :n_real] = True
    return mask
