"""Causal transformer over flat token sequences.

Pre-norm blocks, exact GELU, learned absolute positions, no weight tying.
Conditioning arrives as part of the input sequence (a prefix), so the
model itself is a plain next-token predictor.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


class ModelError(ValueError):
    """Invalid model configuration or input."""


@dataclass(frozen=True)
class TransformerConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_seq_len: int = 1024
    dropout: float = 0.0

    def __post_init__(self) -> None:
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ModelError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"dropout {self.dropout} outside [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerConfig":
        return cls(**d)


class _Attention(nn.Module):
    def __init__(self, config: TransformerConfig):
        super().__init__()
        self.n_heads = config.n_heads
        self.head_dim = config.d_model // config.n_heads
        self.qkv = nn.Linear(config.d_model, 3 * config.d_model)
        self.proj = nn.Linear(config.d_model, config.d_model)
        self.dropout = config.dropout

    def forward(self, x: torch.Tensor, past: tuple | None = None):
        b, s, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (b, s, self.n_heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        if past is not None:
            pk, pv = past
            k = torch.cat([pk, k], dim=2)
            v = torch.cat([pv, v], dim=2)
        # with a cache the new queries sit after every cached key, so the
        # full-window attention is already causal
        causal = past is None and s > 1
        out = F.scaled_dot_product_attention(
            q, k, v, is_causal=causal, dropout_p=self.dropout if self.training else 0.0
        )
        out = out.transpose(1, 2).reshape(b, s, d)
        return self.proj(out), (k, v)


class _Block(nn.Module):
    def __init__(self, config: TransformerConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(config.d_model)
        self.attn = _Attention(config)
        self.ln2 = nn.LayerNorm(config.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(config.d_model, config.d_ff),
            nn.GELU(),
            nn.Linear(config.d_ff, config.d_model),
            nn.Dropout(config.dropout),
        )

    def forward(self, x: torch.Tensor, past: tuple | None = None):
        attn_out, present = self.attn(self.ln1(x), past)
        x = x + attn_out
        x = x + self.mlp(self.ln2(x))
        return x, present


class CausalTransformer(nn.Module):
    """Next-token predictor; forward returns [B x S x vocab_size] logits."""

    def __init__(self, config: TransformerConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.d_model)
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(_Block(config) for _ in range(config.n_layers))
        self.ln_f = nn.LayerNorm(config.d_model)
        self.lm_head = nn.Linear(config.d_model, config.vocab_size)

    def forward(
        self,
        tokens: torch.Tensor,
        cache: list | None = None,
        return_cache: bool = False,
    ):
        """Logits for each position; pass `cache` to continue a sequence.

        With a cache, `tokens` holds only the new positions and the cache
        is extended in place semantics-wise (a new cache list is returned).
        """
        if tokens.dim() == 1:
            tokens = tokens.unsqueeze(0)
        if tokens.dtype != torch.long:
            tokens = tokens.long()
        b, s = tokens.shape
        past_len = cache[0][0].shape[2] if cache else 0
        if past_len + s > self.config.max_seq_len:
            raise ModelError(
                f"sequence length {past_len + s} exceeds max_seq_len {self.config.max_seq_len}"
            )
        if tokens.numel() and (tokens.min() < 0 or tokens.max() >= self.config.vocab_size):
            raise ModelError("token id out of range")
        pos = torch.arange(past_len, past_len + s, device=tokens.device)
        x = self.drop(self.tok_emb(tokens) + self.pos_emb(pos))
        new_cache = []
        for i, block in enumerate(self.blocks):
            x, present = block(x, cache[i] if cache else None)
            new_cache.append(present)
        logits = self.lm_head(self.ln_f(x))
        if return_cache:
            return logits, new_cache
        return logits

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: TransformerConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> CausalTransformer:
    """Construct with seeded normal(0, 0.02) weights and zero biases."""
    model = CausalTransformer(config)
    gen = torch.Generator().manual_seed(seed & 0x7FFFFFFFFFFFFFFF)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if p.dim() >= 2 or "emb" in name:
                p.copy_(torch.randn(p.shape, generator=gen) * 0.02)
            elif "weight" in name:  # LayerNorm scale
                p.fill_(1.0)
            else:
                p.zero_()
    return model.to(dtype)
