"""Span pooling operators.

Four pooled representations plus plain CLS:

    cls            final-layer hidden state of the leading position
    max            elementwise maximum over the span
    mean           arithmetic mean over the span
    attentive      softmax(<row, v>)-weighted sum, v learnable
    layerwise-cls  softmax(w)-weighted sum of the leading position's hidden
                   state from every layer (embeddings are layer 0)

Max pooling routes its subgradient to the lowest-index row at ties so that
gradient checks are reproducible.
"""

from __future__ import annotations

from enum import Enum

import torch
from torch import nn

from . import probe
from .encoder import LayerStates
from .errors import ContractError, ShapeError
from .layout import Span


class PoolingKind(str, Enum):
    CLS = "cls"
    MAX = "max"
    MEAN = "mean"
    ATTENTIVE = "attentive"
    LAYERWISE_CLS = "layerwise-cls"


def _check_span_rows(rows: torch.Tensor) -> None:
    if rows.shape[-2] == 0:
        raise ContractError("empty span")


def lowest_index_max(rows: torch.Tensor) -> torch.Tensor:
    """Columnwise max over dim -2, gathering from the first maximal row so
    ties have a deterministic subgradient."""
    _check_span_rows(rows)
    length = rows.shape[-2]
    if probe.active() and length >= 2:
        top2 = rows.topk(2, dim=-2).values
        probe.note("max_pool", float((top2[..., 0, :] - top2[..., 1, :]).min()))
    maxv = rows.amax(dim=-2, keepdim=True)
    pos_shape = [1] * rows.dim()
    pos_shape[-2] = length
    pos = torch.arange(length, device=rows.device).view(pos_shape)
    idx = torch.where(rows == maxv, pos, length).amin(dim=-2)
    return torch.gather(rows, -2, idx.unsqueeze(-2)).squeeze(-2)


def pool_max(rows: torch.Tensor) -> torch.Tensor:
    return lowest_index_max(rows)


def pool_mean(rows: torch.Tensor) -> torch.Tensor:
    _check_span_rows(rows)
    return rows.mean(dim=-2)


def pool_attentive(rows: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    _check_span_rows(rows)
    if v.shape[-1] != rows.shape[-1]:
        raise ShapeError(f"attention vector width {v.shape[-1]} != rows width {rows.shape[-1]}")
    weights = torch.softmax(rows @ v, dim=-1)
    return (weights.unsqueeze(-2) @ rows).squeeze(-2)


def pool_cls(states: LayerStates, span: Span) -> torch.Tensor:
    """Final-layer BOS row; the span must start at position 0."""
    if span.start != 0:
        raise ContractError(f"CLS pooling needs a span containing position 0, got {span}")
    return states.final[..., 0, :]


def pool_layerwise_cls(states: LayerStates, w: torch.Tensor) -> torch.Tensor:
    if w.shape[-1] != len(states):
        raise ShapeError(f"layer weights length {w.shape[-1]} != stored layers {len(states)}")
    coef = torch.softmax(w, dim=-1)
    stacked = torch.stack([h[..., 0, :] for h in states.states], dim=0)
    return torch.tensordot(coef, stacked, dims=1)


class Pooler(nn.Module):
    """Pooling dispatch over spans of a :class:`LayerStates`.

    For generic (answer) spans the cls and layerwise-cls kinds read the
    span's leading position, which for the question span is exactly BOS.
    """

    def __init__(self, kind: PoolingKind, d_model: int, n_states: int):
        super().__init__()
        self.kind = PoolingKind(kind)
        if self.kind is PoolingKind.ATTENTIVE:
            self.v = nn.Parameter(torch.zeros(d_model))
        elif self.kind is PoolingKind.LAYERWISE_CLS:
            self.w = nn.Parameter(torch.zeros(n_states))

    def span_vector(self, states: LayerStates, span: Span) -> torch.Tensor:
        """Pool one span.  Works on (T, d) states and batched (B, T, d)
        states when every sequence in the batch shares the span."""
        if span.length <= 0:
            raise ContractError(f"empty span {span}")
        kind = self.kind
        if kind is PoolingKind.CLS:
            return states.final[..., span.start, :]
        if kind is PoolingKind.LAYERWISE_CLS:
            coef = torch.softmax(self.w, dim=-1)
            stacked = torch.stack(
                [h[..., span.start, :] for h in states.states], dim=0
            )
            return torch.tensordot(coef, stacked, dims=1)
        rows = states.final[..., span.start : span.stop, :]
        if kind is PoolingKind.MAX:
            return pool_max(rows)
        if kind is PoolingKind.MEAN:
            return pool_mean(rows)
        return pool_attentive(rows, self.v)
