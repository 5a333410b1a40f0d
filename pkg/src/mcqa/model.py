"""Question-answer scoring across the three encoding schemes.

Per-candidate schemes (1AnP, nAnP) run one encoder pass per candidate and
score S_i = g(pool(question span) ++ pool(answer span)).  The single-pass
scheme (nA1P) encodes everything once, pools each answer span, optionally
applies the inter-answer gate, and scores each candidate against the shared
question representation.
"""

from __future__ import annotations

from enum import Enum
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import probe
from .data import QAInstance
from .encoder import EncoderConfig, LayerStates, TransformerEncoder, init_parameters
from .errors import ConfigError, EvaluationError, ShapeError
from .gate import AnswerGate
from .layout import SpanMap, layout_1anp, layout_na1p, layout_nanp, pad_batch
from .pooling import Pooler, PoolingKind


class Scheme(str, Enum):
    ONE_A_N_P = "1anp"
    N_A_N_P = "nanp"
    N_A_1_P = "na1p"


class ScoreHead(nn.Module):
    """The scoring MLP g(): two affine layers with a ReLU between."""

    def __init__(self, d_in: int, d_hidden: int):
        super().__init__()
        self.lin1 = nn.Linear(d_in, d_hidden)
        self.lin2 = nn.Linear(d_hidden, 1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.lin1.in_features:
            raise ShapeError(
                f"scorer input width {z.shape[-1]} != expected {self.lin1.in_features}"
            )
        preact = self.lin1(z)
        if probe.active():
            probe.note("relu", float(preact.abs().min()))
        return self.lin2(torch.relu(preact)).squeeze(-1)


class MCQAModel(nn.Module):
    """Encoder + pooler + optional answer gate + scoring head.

    ``qa_concat=False`` scores each candidate from its answer representation
    alone (the no-concatenation ablation); the question still shapes the
    answer states through the encoder.
    """

    def __init__(
        self,
        config: EncoderConfig,
        scheme: Scheme | str = Scheme.N_A_1_P,
        pooling: PoolingKind | str = PoolingKind.MAX,
        gate: bool = True,
        qa_concat: bool = True,
        gate_heads: int = 2,
        seed: int = 0,
    ):
        super().__init__()
        self.scheme = Scheme(scheme)
        self.pooling = PoolingKind(pooling)
        self.qa_concat = qa_concat
        if gate and self.scheme is not Scheme.N_A_1_P:
            raise ConfigError("the answer gate is only valid with the na1p scheme")
        self.config = config
        self.gate_heads = gate_heads
        self.encoder = TransformerEncoder(config)
        self.pooler = Pooler(self.pooling, config.d_model, config.n_layers + 1)
        self.gate = AnswerGate(config.d_model, gate_heads, config.dropout) if gate else None
        d_in = 2 * config.d_model if qa_concat else config.d_model
        self.head = ScoreHead(d_in, config.d_model)
        self.trained = False
        init_parameters(self, seed)

    def param_groups(self) -> dict[str, list[nn.Parameter]]:
        """Two-group split: encoder body vs pooling/gate/scoring heads."""
        encoder_params = list(self.encoder.parameters())
        encoder_ids = {id(p) for p in encoder_params}
        head_params = [p for p in self.parameters() if id(p) not in encoder_ids]
        return {"encoder": encoder_params, "head": head_params}

    # --- forward -----------------------------------------------------------

    def _score(self, q_repr: torch.Tensor, a_repr: torch.Tensor) -> torch.Tensor:
        if self.qa_concat:
            q = q_repr.unsqueeze(-2).expand(a_repr.shape) if q_repr.dim() < a_repr.dim() \
                else q_repr
            return self.head(torch.cat([q, a_repr], dim=-1))
        return self.head(a_repr)

    def _per_sequence_states(self, states: LayerStates, row: int) -> LayerStates:
        return LayerStates(tuple(h[row] for h in states.states))

    def _scores_na1p(self, instances: Sequence[QAInstance]) -> list[torch.Tensor]:
        layouts = [layout_na1p(inst, self.config.max_len) for inst in instances]
        seqs = [seq for seq, _ in layouts]
        maps = [m for _, m in layouts]
        ids, mask = pad_batch(seqs)
        states = self.encoder(ids, mask)

        if all(m == maps[0] for m in maps):
            span_map = maps[0]
            q_repr = self.pooler.span_vector(states, span_map.question_span)
            raw = torch.stack(
                [self.pooler.span_vector(states, s) for s in span_map.answer_spans],
                dim=-2,
            )
            gated = self.gate(raw).gated if self.gate is not None else raw
            scores = self._score(q_repr, gated)
            return list(scores)

        out = []
        for r, span_map in enumerate(maps):
            row_states = self._per_sequence_states(states, r)
            q_repr = self.pooler.span_vector(row_states, span_map.question_span)
            raw = torch.stack(
                [self.pooler.span_vector(row_states, s) for s in span_map.answer_spans],
                dim=-2,
            )
            gated = self.gate(raw).gated if self.gate is not None else raw
            out.append(self._score(q_repr, gated))
        return out

    def _scores_per_candidate(
        self, instances: Sequence[QAInstance], scheme: Scheme
    ) -> list[torch.Tensor]:
        layout_fn = layout_1anp if scheme is Scheme.ONE_A_N_P else layout_nanp
        seqs, maps, owner = [], [], []
        for b, inst in enumerate(instances):
            for i in range(inst.num_answers):
                seq, span_map = layout_fn(inst, i, self.config.max_len)
                seqs.append(seq)
                maps.append(span_map)
                owner.append(b)
        ids, mask = pad_batch(seqs)
        states = self.encoder(ids, mask)

        if all(m == maps[0] for m in maps):
            span_map = maps[0]
            q_repr = self.pooler.span_vector(states, span_map.question_span)
            a_repr = self.pooler.span_vector(states, span_map.answer_spans[0])
            flat = self._score(q_repr, a_repr)
        else:
            flat = []
            for r, span_map in enumerate(maps):
                row_states = self._per_sequence_states(states, r)
                q_repr = self.pooler.span_vector(row_states, span_map.question_span)
                a_repr = self.pooler.span_vector(row_states, span_map.answer_spans[0])
                flat.append(self._score(q_repr, a_repr))
            flat = torch.stack(flat)

        out, pos = [], 0
        for inst in instances:
            out.append(flat[pos : pos + inst.num_answers])
            pos += inst.num_answers
        return out

    def batch_scores(
        self, instances: Sequence[QAInstance], scheme: Optional[Scheme | str] = None
    ) -> list[torch.Tensor]:
        """Candidate scores for each instance; one (n_i,) tensor per instance.

        ``scheme`` overrides the model's own scheme at evaluation time (the
        gate is only consulted under na1p)."""
        scheme = Scheme(scheme) if scheme is not None else self.scheme
        if scheme is Scheme.N_A_1_P:
            return self._scores_na1p(instances)
        return self._scores_per_candidate(instances, scheme)

    def instance_scores(
        self, instance: QAInstance, scheme: Optional[Scheme | str] = None
    ) -> torch.Tensor:
        return self.batch_scores([instance], scheme)[0]


def forward_scores(
    model: MCQAModel, instance: QAInstance, scheme: Optional[Scheme | str] = None
) -> torch.Tensor:
    return model.instance_scores(instance, scheme)


def loss(scores: torch.Tensor, gold: int) -> torch.Tensor:
    """Softmax cross-entropy of the gold candidate."""
    if not torch.isfinite(scores).all():
        raise EvaluationError(f"non-finite scores: {scores.tolist()}")
    if not 0 <= gold < scores.shape[-1]:
        raise EvaluationError(f"gold index {gold} out of range")
    target = torch.tensor([gold], device=scores.device)
    return F.cross_entropy(scores.unsqueeze(0), target)


def select(scores) -> int:
    """Argmax with ties broken toward the lowest index."""
    arr = np.asarray(
        scores.detach().cpu().numpy() if isinstance(scores, torch.Tensor) else scores,
        dtype=np.float64,
    )
    if arr.size == 0:
        raise EvaluationError("no scores to select from")
    if not np.isfinite(arr).all():
        raise EvaluationError(f"non-finite scores: {arr.tolist()}")
    return int(np.argmax(arr))
