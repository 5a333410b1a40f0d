"""Gated inter-answer interaction for the single-pass scheme.

Each pooled answer vector attends over the other candidates (multi-head,
self excluded) and is then blended with that context through an elementwise
sigmoid gate:

    c_i   = sum_{j != i} a_ji * raw_j        (head-averaged weights, raw values)
    gamma = sigmoid(W1 raw_i + W2 c_i + bias)
    out_i = gamma * raw_i + (1 - gamma) * c_i

The head projections only shape the attention weights; the context is the
weighted sum of the raw vectors themselves.  A single candidate has nothing
to attend to, so n=1 bypasses the interaction entirely.

Both weighted combinations are evaluated in residual form, c_i = raw_i +
sum_j a_ji (raw_j - raw_i) and out_i = c_i + gamma (raw_i - c_i), which is
identical in exact arithmetic (attention weights sum to 1) but keeps the
identical-answers fixed point out_i = h bitwise even when the float softmax
weights sum to 1 only up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .encoder import LayerStates, MultiHeadAttention
from .errors import ShapeError
from .layout import SpanMap
from .pooling import Pooler


@dataclass
class AnswerReps:
    """raw/gated: (n, d) or (B, n, d); weights: matching (n, n) attention
    matrix with weights[i, j] = weight of source j for target i, diagonal 0."""

    raw: torch.Tensor
    gated: torch.Tensor
    weights: torch.Tensor


def pool_answers(states: LayerStates, span_map: SpanMap, pooler: Pooler) -> torch.Tensor:
    """Pool every answer span of the final layer; returns (n, d) (or
    (B, n, d) for batched states sharing the span map)."""
    return torch.stack(
        [pooler.span_vector(states, span) for span in span_map.answer_spans], dim=-2
    )


class AnswerGate(nn.Module):
    def __init__(self, d_model: int, n_heads: int = 2, dropout: float = 0.0):
        super().__init__()
        self.d_model = d_model
        self.attn = MultiHeadAttention(d_model, n_heads, dropout, project_values=False)
        self.w_own = nn.Linear(d_model, d_model, bias=False)
        self.w_ctx = nn.Linear(d_model, d_model, bias=False)
        self.bias = nn.Parameter(torch.zeros(d_model))

    def forward(self, raw: torch.Tensor) -> AnswerReps:
        """raw: (n, d) or (B, n, d) pooled answer vectors."""
        if raw.shape[-1] != self.d_model:
            raise ShapeError(f"answer width {raw.shape[-1]} != d_model {self.d_model}")
        squeeze = raw.dim() == 2
        x = raw.unsqueeze(0) if squeeze else raw
        b, n, _ = x.shape

        if n == 1:
            reps = AnswerReps(x, x, torch.zeros(b, 1, 1, dtype=x.dtype, device=x.device))
        else:
            allowed = ~torch.eye(n, dtype=torch.bool, device=x.device)
            _, avg_weights, _ = self.attn(x, x, x, pair_mask=allowed)
            diff = x.unsqueeze(1) - x.unsqueeze(2)  # diff[:, i, j] = x_j - x_i
            context = x + torch.einsum("bij,bijd->bid", avg_weights, diff)
            gamma = torch.sigmoid(self.w_own(x) + self.w_ctx(context) + self.bias)
            gated = context + gamma * (x - context)
            reps = AnswerReps(x, gated, avg_weights)

        if squeeze:
            reps = AnswerReps(
                reps.raw.squeeze(0), reps.gated.squeeze(0), reps.weights.squeeze(0)
            )
        return reps
