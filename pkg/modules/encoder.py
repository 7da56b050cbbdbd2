# coding: utf-8
"""
Transformer Encoder
===================
Pre-LN bidirectional encoder with learned position embeddings, built on
the numcore tensor ops.
"""

import logging
from typing import List

import numpy as np

from .config import EncoderConfig
from .errors import BadConfig, ShapeMismatch, VocabOverflow
from .numcore import (
    Dropout,
    Embedding,
    LayerNorm,
    Linear,
    Module,
    Tensor,
    mask_bias,
    matmul,
)
from .tokenizer import Encoding

logger = logging.getLogger(__name__)


class MultiHeadSelfAttention(Module):
    def __init__(self, hidden_dim: int, n_heads: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = hidden_dim // n_heads
        self.query = self.child('query', Linear(hidden_dim, hidden_dim, rng))
        self.key = self.child('key', Linear(hidden_dim, hidden_dim, rng, bias=False))
        self.value = self.child('value', Linear(hidden_dim, hidden_dim, rng))
        self.out = self.child('out', Linear(hidden_dim, hidden_dim, rng))
        self.attn_dropout = self.child('attn_dropout', Dropout(dropout))

    def __call__(self, x: Tensor, bias: np.ndarray) -> Tensor:
        batch, length, hidden = x.shape

        def split(t: Tensor) -> Tensor:
            return t.reshape(batch, length, self.n_heads, self.head_dim).transpose(0, 2, 1, 3)

        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.head_dim)) + bias
        weights = self.attn_dropout(scores.softmax(axis=-1))
        context = matmul(weights, v).transpose(0, 2, 1, 3).reshape(batch, length, hidden)
        return self.out(context)

    def contributions(self, x: Tensor, bias: np.ndarray, query: int = 0) -> np.ndarray:
        """
        Per-key share of the output at position ``query`` for one example,
        shape (L, H). Rows sum to that output minus the projection bias.
        """
        _, length, hidden = x.shape
        data = x.data[0]

        def split(t: np.ndarray) -> np.ndarray:
            return t.reshape(length, self.n_heads, self.head_dim).transpose(1, 0, 2)

        q = split(data @ self.query.weight.data + self.query.bias.data)
        k = split(data @ self.key.weight.data)
        v = split(data @ self.value.weight.data + self.value.bias.data)
        scores = np.einsum('hd,hld->hl', q[:, query, :], k) / np.sqrt(self.head_dim)
        scores = scores + np.asarray(bias).reshape(-1)
        weights = np.exp(scores - scores.max(axis=-1, keepdims=True))
        weights /= weights.sum(axis=-1, keepdims=True)
        per_key = (weights[:, :, None] * v).transpose(1, 0, 2).reshape(length, hidden)
        return per_key @ self.out.weight.data


class EncoderBlock(Module):
    """x + Attn(LN(x)), then x + FF(LN(x))."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        h = config.hidden_dim
        self.ln_attn = self.child('ln_attn', LayerNorm(h))
        self.attention = self.child('attention', MultiHeadSelfAttention(h, config.n_heads, config.dropout, rng))
        self.ln_ff = self.child('ln_ff', LayerNorm(h))
        self.ff_in = self.child('ff_in', Linear(h, config.ff_dim, rng))
        self.ff_out = self.child('ff_out', Linear(config.ff_dim, h, rng))
        self.dropout = self.child('dropout', Dropout(config.dropout))

    def __call__(self, x: Tensor, bias: np.ndarray) -> Tensor:
        x = x + self.dropout(self.attention(self.ln_attn(x), bias))
        return x + self.dropout(self.ff_out(self.ff_in(self.ln_ff(x)).gelu()))


class EncoderModel(Module):
    """
    Token + position embeddings followed by ``n_layers`` blocks and a final
    LayerNorm. Weights are drawn from N(0, 0.02); biases start at zero and
    LayerNorm gains at one.

    Args:
        config: Encoder shape
        seed: Initialization seed
    """

    def __init__(self, config: EncoderConfig, seed: int = 0):
        super().__init__()
        if config.hidden_dim % config.n_heads != 0:
            raise BadConfig(f"hidden_dim {config.hidden_dim} is not divisible by n_heads {config.n_heads}")
        self.config = config
        rng = np.random.default_rng(seed)
        self.token_embedding = self.child('token_embedding', Embedding(config.vocab_size, config.hidden_dim, rng))
        self.position_embedding = self.child('position_embedding', Embedding(config.max_len, config.hidden_dim, rng))
        self.embedding_dropout = self.child('embedding_dropout', Dropout(config.dropout))
        self.blocks: List[EncoderBlock] = [
            self.child(f'block_{i}', EncoderBlock(config, rng)) for i in range(config.n_layers)
        ]
        self.ln_final = self.child('ln_final', LayerNorm(config.hidden_dim))
        logger.debug(f"Encoder initialized: {self.n_parameters():,} parameters")

    def forward_batch(self, input_ids: np.ndarray, attention_mask: np.ndarray) -> Tensor:
        """(B, L) ids and mask -> (B, L, H) features."""
        x, bias = self._embed(input_ids, attention_mask)
        for block in self.blocks:
            x = block(x, bias)
        return self.ln_final(x)

    def bos_contributions(self, encoding: Encoding) -> np.ndarray:
        """
        Each token's share of the last attention layer's output at the bos
        position, scaled by the final LayerNorm statistics there. Shape (L, H).
        """
        x, bias = self._embed(encoding.input_ids[None, :], encoding.attention_mask[None, :])
        for block in self.blocks[:-1]:
            x = block(x, bias)
        last = self.blocks[-1]
        parts = last.attention.contributions(last.ln_attn(x), bias)
        bos = last(x, bias).data[0, 0]
        scale = self.ln_final.gamma.data / np.sqrt(bos.var() + self.ln_final.eps)
        return (parts - parts.mean(axis=-1, keepdims=True)) * scale

    def _embed(self, input_ids: np.ndarray, attention_mask: np.ndarray):
        input_ids = np.asarray(input_ids, dtype=np.int64)
        attention_mask = np.asarray(attention_mask)
        if input_ids.ndim != 2 or input_ids.shape != attention_mask.shape:
            raise ShapeMismatch(f"ids {input_ids.shape} and mask {attention_mask.shape} must both be (B, L)")
        length = input_ids.shape[1]
        if length > self.config.max_len:
            raise ShapeMismatch(f"sequence length {length} exceeds encoder max_len {self.config.max_len}")
        if input_ids.size and (input_ids.min() < 0 or input_ids.max() >= self.config.vocab_size):
            raise VocabOverflow(f"token id {int(input_ids.max())} outside encoder vocabulary of {self.config.vocab_size}")

        x = self.token_embedding(input_ids) + self.position_embedding(np.arange(length))
        x = self.embedding_dropout(x)
        bias = mask_bias(attention_mask)[:, None, None, :]
        return x, bias

    def forward(self, encoding: Encoding) -> Tensor:
        """Per-token features of one example, shape (L, H)."""
        features = self.forward_batch(encoding.input_ids[None, :], encoding.attention_mask[None, :])
        return features.reshape(encoding.max_len, self.config.hidden_dim)
