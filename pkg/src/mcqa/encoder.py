"""A small deterministic pre-norm transformer encoder.

Stands in for the pretrained language model: it produces one hidden-state
matrix per layer (embeddings count as layer 0) so that layerwise pooling and
span pooling can read any of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .errors import ConfigError, SequenceLengthError, ShapeError
from .layout import TokenSequence

LN_EPS = 1e-6


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    dropout: float = 0.0

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class LayerStates:
    """Hidden states per layer: ``states[0]`` is the embedding output,
    ``states[-1]`` the final layer.  Matrices are (seq_len, d_model) or
    (batch, seq_len, d_model)."""

    states: tuple[torch.Tensor, ...]

    @property
    def final(self) -> torch.Tensor:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)

    def assert_finite(self) -> None:
        for i, h in enumerate(self.states):
            if not torch.isfinite(h).all():
                raise ShapeError(f"non-finite values in layer state {i}")


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over projected queries and keys.

    Returns the context, the head-averaged attention weights, and the
    per-head weights.  With ``project_values=False`` there are no value or
    output projections: the context is the head-averaged weight matrix
    applied to the raw value vectors, which is what the answer gate consumes.
    """

    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0,
                 project_values: bool = True):
        super().__init__()
        if d_model % n_heads != 0:
            raise ConfigError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.project_values = project_values
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        if project_values:
            self.w_v = nn.Linear(d_model, d_model)
            self.w_o = nn.Linear(d_model, d_model)
        self.attn_dropout = nn.Dropout(dropout)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.d_head).transpose(1, 2)

    def forward(
        self,
        query: torch.Tensor,
        key: torch.Tensor,
        value: torch.Tensor,
        key_mask: Optional[torch.Tensor] = None,
        pair_mask: Optional[torch.Tensor] = None,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """query (B, Tq, d); key/value (B, Tk, d); key_mask (B, Tk) bool with
        True for real tokens; pair_mask (Tq, Tk) or (B, Tq, Tk) bool with
        True where attention is allowed."""
        if query.shape[-1] != self.d_model or key.shape[-1] != self.d_model:
            raise ShapeError(
                f"expected width {self.d_model}, got query {query.shape[-1]}, "
                f"key {key.shape[-1]}"
            )
        if key.shape[1] != value.shape[1] or key.shape[0] != value.shape[0]:
            raise ShapeError("key and value must have matching batch and length")

        q = self._split_heads(self.w_q(query))
        k = self._split_heads(self.w_k(key))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        if pair_mask is not None:
            pm = pair_mask if pair_mask.dim() == 3 else pair_mask[None]
            scores = scores.masked_fill(~pm[:, None, :, :], float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        weights = self.attn_dropout(weights)
        avg_weights = weights.mean(dim=1)

        if self.project_values:
            v = self._split_heads(self.w_v(value))
            context = weights @ v
            context = context.transpose(1, 2).reshape(value.shape[0], -1, self.d_model)
            context = self.w_o(context)
        else:
            context = avg_weights @ value
        return context, avg_weights, weights


class EncoderBlock(nn.Module):
    """Pre-norm block: x + Attn(LN(x)), then x + FF(LN(x))."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model, eps=LN_EPS)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.d_model, eps=LN_EPS)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff),
            nn.GELU(),
            nn.Linear(cfg.d_ff, cfg.d_model),
        )
        self.resid_dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        attn_out, _, _ = self.attn(h, h, h, key_mask=mask)
        x = x + self.resid_dropout(attn_out)
        x = x + self.resid_dropout(self.ff(self.ln2(x)))
        return x


class TransformerEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.d_model)
        self.blocks = nn.ModuleList(EncoderBlock(cfg) for _ in range(cfg.n_layers))

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> LayerStates:
        """ids (B, T) long; mask (B, T) bool, True for real tokens.

        Padded positions are excluded from attention and zeroed in every
        returned state.
        """
        if ids.dim() != 2:
            raise ShapeError(f"ids must be 2-D, got {tuple(ids.shape)}")
        b, t = ids.shape
        if t > self.cfg.max_len:
            raise SequenceLengthError(f"sequence length {t} > max_len {self.cfg.max_len}")
        if int(ids.max()) >= self.cfg.vocab_size:
            raise ShapeError(
                f"token id {int(ids.max())} >= vocab_size {self.cfg.vocab_size}"
            )
        keep = mask.unsqueeze(-1).to(self.tok_emb.weight.dtype)
        positions = torch.arange(t, device=ids.device)
        x = (self.tok_emb(ids) + self.pos_emb(positions)) * keep
        states = [x]
        for block in self.blocks:
            x = block(x, mask) * keep
            states.append(x)
        return LayerStates(tuple(states))

    def encode(self, seq: TokenSequence) -> LayerStates:
        """Single-sequence forward; states are (seq_len, d_model)."""
        ids = torch.tensor(seq.ids, dtype=torch.long).unsqueeze(0)
        mask = torch.tensor(seq.attention_mask, dtype=torch.bool).unsqueeze(0)
        out = self.forward(ids, mask)
        return LayerStates(tuple(h.squeeze(0) for h in out.states))


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic init: scaled-uniform (Glorot) matrices, unit layer-norm
    gains, zero biases and zero 1-D head parameters."""
    gen = torch.Generator().manual_seed(seed)
    for name, p in module.named_parameters():
        with torch.no_grad():
            if p.dim() >= 2:
                fan_out, fan_in = p.shape[0], p.shape[1]
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                p.uniform_(-bound, bound, generator=gen)
            elif name.endswith(".weight"):
                p.fill_(1.0)  # layer-norm gain
            else:
                p.zero_()


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
