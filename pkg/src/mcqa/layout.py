"""Encoder input construction for the three question-answer encoding schemes.

Layouts (BOS = <s>, EOS = </s>):

    1AnP  [BOS, Q, EOS, EOS, A_i, EOS]                 one pass per candidate
    nAnP  1AnP applied to (Q ++ EOS ++ A_1 ++ ... ++ EOS ++ A_n, A_i)
    nA1P  [BOS, Q, EOS, EOS, A_1, EOS, A_2, ..., A_n, EOS]   one pass total

The question span covers BOS..the first EOS inclusive.  Each answer span
covers the separator before the answer, the answer tokens, and the separator
after it, so in nA1P consecutive answer spans share exactly one separator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import torch

from .data import BOS_ID, EOS_ID, PAD_ID, QAInstance
from .errors import ContractError, SequenceLengthError


class Span(NamedTuple):
    """Half-open position range [start, stop)."""

    start: int
    stop: int

    @property
    def length(self) -> int:
        return self.stop - self.start

    def positions(self) -> range:
        return range(self.start, self.stop)


@dataclass
class SpanMap:
    question_span: Span
    answer_spans: list[Span]


@dataclass
class TokenSequence:
    ids: list[int]
    attention_mask: list[bool]

    def __post_init__(self):
        if len(self.ids) != len(self.attention_mask):
            raise ContractError("ids and attention_mask lengths differ")
        if self.ids[0] != BOS_ID or self.ids[-1] != EOS_ID:
            raise ContractError("sequence must start with BOS and end with EOS")

    def __len__(self) -> int:
        return len(self.ids)


def _truncate_question(q: list[int], budget: int, total: int, max_len: int) -> list[int]:
    """Drop question tokens from the right until the layout fits."""
    if budget >= len(q):
        return q
    if budget < 1:
        raise SequenceLengthError(
            f"layout needs {total - len(q) + 1} tokens with a 1-token question, "
            f"exceeding max_len={max_len}; answer tokens are never truncated"
        )
    return q[:budget]


def _frame(q: list[int], a: list[int]) -> tuple[TokenSequence, SpanMap]:
    """The shared [BOS, q, EOS, EOS, a, EOS] frame with its two spans."""
    ids = [BOS_ID] + q + [EOS_ID, EOS_ID] + a + [EOS_ID]
    question_span = Span(0, len(q) + 2)
    answer_span = Span(len(q) + 2, len(ids))
    seq = TokenSequence(ids, [True] * len(ids))
    return seq, SpanMap(question_span, [answer_span])


def layout_1anp(
    instance: QAInstance, i: int, max_len: Optional[int] = None
) -> tuple[TokenSequence, SpanMap]:
    """Question paired with candidate ``i``: one of the n per-candidate passes."""
    if not 0 <= i < instance.num_answers:
        raise ContractError(f"candidate index {i} out of range")
    q, a = instance.question, instance.answers[i]
    if max_len is not None:
        total = len(q) + len(a) + 4
        q = _truncate_question(q, max_len - (len(a) + 4), total, max_len)
    return _frame(q, a)


def extended_question(instance: QAInstance, picked: Sequence[int]) -> list[int]:
    """Question with the picked candidates appended, one EOS before each."""
    q = list(instance.question)
    for j in picked:
        if not 0 <= j < instance.num_answers:
            raise ContractError(f"candidate index {j} out of range")
        q += [EOS_ID] + instance.answers[j]
    return q


def layout_nanp(
    instance: QAInstance, i: int, max_len: Optional[int] = None
) -> tuple[TokenSequence, SpanMap]:
    """1AnP over the question extended with every candidate.

    A single candidate leaves nothing to contrast, so n=1 degenerates to the
    plain 1AnP layout and all schemes coincide on one-candidate instances.
    """
    if not 0 <= i < instance.num_answers:
        raise ContractError(f"candidate index {i} out of range")
    if instance.num_answers == 1:
        return layout_1anp(instance, 0, max_len)
    a = instance.answers[i]
    appended = sum(len(ans) for ans in instance.answers) + instance.num_answers
    if max_len is not None:
        q_full = instance.question
        total = len(q_full) + appended + len(a) + 4
        budget = max_len - (appended + len(a) + 4)
        q_trunc = _truncate_question(q_full, budget, total, max_len)
        trimmed = QAInstance(instance.id, q_trunc, instance.answers, instance.gold)
        return _frame(extended_question(trimmed, range(instance.num_answers)), a)
    return _frame(extended_question(instance, range(instance.num_answers)), a)


def layout_na1p(
    instance: QAInstance, max_len: Optional[int] = None
) -> tuple[TokenSequence, SpanMap]:
    """Question and all candidates in a single sequence, one span per answer."""
    q = instance.question
    answers = instance.answers
    tail = sum(len(a) for a in answers) + len(answers) + 2
    if max_len is not None:
        total = 1 + len(q) + tail
        q = _truncate_question(q, max_len - (tail + 1), total, max_len)

    ids = [BOS_ID] + q + [EOS_ID, EOS_ID]
    sep_positions = [len(q) + 2]
    for a in answers:
        ids += a + [EOS_ID]
        sep_positions.append(len(ids) - 1)

    question_span = Span(0, len(q) + 2)
    answer_spans = [
        Span(sep_positions[k], sep_positions[k + 1] + 1) for k in range(len(answers))
    ]
    seq = TokenSequence(ids, [True] * len(ids))
    return seq, SpanMap(question_span, answer_spans)


def length_1anp(q_len: int, a_len: int) -> int:
    return q_len + a_len + 4


def length_nanp(q_len: int, answer_lens: Sequence[int], i: int) -> int:
    if len(answer_lens) == 1:
        return length_1anp(q_len, answer_lens[0])
    return q_len + sum(answer_lens) + len(answer_lens) + answer_lens[i] + 4


def length_na1p(q_len: int, answer_lens: Sequence[int]) -> int:
    return 1 + q_len + sum(answer_lens) + len(answer_lens) + 2


def pad_batch(seqs: Sequence[TokenSequence]) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad to the batch maximum; returns (ids, mask) long/bool tensors."""
    if not seqs:
        raise ContractError("empty batch")
    width = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), width), PAD_ID, dtype=torch.long)
    mask = torch.zeros((len(seqs), width), dtype=torch.bool)
    for r, s in enumerate(seqs):
        ids[r, : len(s)] = torch.tensor(s.ids, dtype=torch.long)
        mask[r, : len(s)] = True
    return ids, mask
