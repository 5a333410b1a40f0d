"""Dataset ingestion, synthetic task generation, vocabulary, tokenization.

The on-disk dataset format is JSON Lines, one object per line:

    {"id": "q1", "question": "...", "choices": ["...", ...], "answer_index": 0}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import DatasetParseError, ValidationError

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3

RESERVED_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")
NUM_RESERVED = len(RESERVED_TOKENS)


class Vocab:
    """Word-level vocabulary with fixed reserved ids 0..3.

    Surface tokens are assigned ids starting at 4, in first-seen order, and
    the mapping is a bijection over those ids.
    """

    def __init__(self, tokens: Iterable[str] = ()):
        self._token_to_id: dict[str, int] = {}
        self._id_to_token: list[str] = []
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token in self._token_to_id:
            return self._token_to_id[token]
        new_id = NUM_RESERVED + len(self._id_to_token)
        self._token_to_id[token] = new_id
        self._id_to_token.append(token)
        return new_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if 0 <= token_id < NUM_RESERVED:
            return RESERVED_TOKENS[token_id]
        idx = token_id - NUM_RESERVED
        if idx < 0 or idx >= len(self._id_to_token):
            raise KeyError(f"token id {token_id} out of range")
        return self._id_to_token[idx]

    @property
    def size(self) -> int:
        """Total id count, reserved ids included."""
        return NUM_RESERVED + len(self._id_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def surface_tokens(self) -> list[str]:
        """Non-reserved tokens in id order (id 4 first)."""
        return list(self._id_to_token)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._id_to_token == other._id_to_token


def tokenize(text: str, vocab: Vocab) -> list[int]:
    """Lowercase whitespace tokenization; unknown tokens map to UNK."""
    return [vocab.id_of(tok) for tok in text.lower().split()]


@dataclass
class QAInstance:
    """One question with an ordered candidate answer list and a gold index."""

    id: str
    question: list[int]
    answers: list[list[int]]
    gold: int

    def __post_init__(self):
        if not self.question:
            raise ValidationError(f"instance {self.id!r}: empty question")
        if not self.answers:
            raise ValidationError(f"instance {self.id!r}: no answer candidates")
        for i, ans in enumerate(self.answers):
            if not ans:
                raise ValidationError(f"instance {self.id!r}: answer {i} is empty")
        if not 0 <= self.gold < len(self.answers):
            raise ValidationError(
                f"instance {self.id!r}: gold index {self.gold} out of range "
                f"for {len(self.answers)} candidates"
            )

    @property
    def num_answers(self) -> int:
        return len(self.answers)

    def max_token_id(self) -> int:
        return max(max(self.question), max(max(a) for a in self.answers))


def validate_instance(instance: QAInstance, vocab_size: int, min_answers: int = 2) -> None:
    """Boundary checks beyond the structural ones in ``QAInstance``."""
    if instance.num_answers < min_answers:
        raise ValidationError(
            f"instance {instance.id!r}: needs at least {min_answers} candidates, "
            f"got {instance.num_answers}"
        )
    if instance.max_token_id() >= vocab_size:
        raise ValidationError(
            f"instance {instance.id!r}: token id {instance.max_token_id()} "
            f">= vocab size {vocab_size}"
        )


def _parse_record(line_no: int, line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(line_no, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(record, dict):
        raise DatasetParseError(line_no, "record is not a JSON object")
    for key, typ in (("id", str), ("question", str), ("choices", list), ("answer_index", int)):
        if key not in record:
            raise DatasetParseError(line_no, f"missing field {key!r}")
        if not isinstance(record[key], typ) or isinstance(record[key], bool):
            raise DatasetParseError(line_no, f"field {key!r} has wrong type")
    if not all(isinstance(c, str) for c in record["choices"]):
        raise DatasetParseError(line_no, "field 'choices' must contain strings")
    return record


def load_dataset(
    path,
    vocab: Optional[Vocab] = None,
    max_field_tokens: int = 64,
) -> tuple[list[QAInstance], Vocab]:
    """Load a JSONL dataset.

    When ``vocab`` is absent a new one is built from the full file; otherwise
    unknown tokens map to UNK.  Question and answer token lists are truncated
    from the right at ``max_field_tokens``.
    """
    with open(path, encoding="utf-8") as fh:
        raw_lines = fh.readlines()

    records: list[tuple[int, dict]] = []
    for line_no, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        records.append((line_no, _parse_record(line_no, line)))

    if vocab is None:
        vocab = Vocab()
        for _, rec in records:
            for tok in rec["question"].lower().split():
                vocab.add(tok)
            for choice in rec["choices"]:
                for tok in choice.lower().split():
                    vocab.add(tok)

    instances = []
    for line_no, rec in records:
        choices = rec["choices"]
        if len(choices) < 2:
            raise ValidationError(
                f"line {line_no}: instance {rec['id']!r} has {len(choices)} choices, need >= 2"
            )
        if not 0 <= rec["answer_index"] < len(choices):
            raise ValidationError(
                f"line {line_no}: answer_index {rec['answer_index']} out of range "
                f"for {len(choices)} choices"
            )
        question = tokenize(rec["question"], vocab)[:max_field_tokens]
        if not question:
            raise ValidationError(f"line {line_no}: empty question text")
        answers = []
        for i, choice in enumerate(choices):
            ans = tokenize(choice, vocab)[:max_field_tokens]
            if not ans:
                raise ValidationError(f"line {line_no}: choice {i} is empty text")
            answers.append(ans)
        try:
            inst = QAInstance(rec["id"], question, answers, rec["answer_index"])
        except ValidationError as exc:
            raise ValidationError(f"line {line_no}: {exc}") from exc
        validate_instance(inst, vocab.size)
        instances.append(inst)
    return instances, vocab


def save_dataset(instances: list[QAInstance], vocab: Vocab, path) -> None:
    """Write instances back to JSONL by detokenizing against ``vocab``."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            record = {
                "id": inst.id,
                "question": " ".join(vocab.token_of(t) for t in inst.question),
                "choices": [" ".join(vocab.token_of(t) for t in ans) for ans in inst.answers],
                "answer_index": inst.gold,
            }
            fh.write(json.dumps(record) + "\n")


# --- synthetic key/lock task ---------------------------------------------
#
# Each question carries exactly one "key" token; exactly one candidate
# carries the matching "lock" token (keyK <-> lockK), the other candidates
# carry locks of other keys.  The task is therefore solvable from surface
# features alone, which a 2-layer encoder can learn.

DEFAULT_NUM_KEYS = 8
DEFAULT_NUM_FILLER = 24


def synthetic_vocab(
    num_keys: int = DEFAULT_NUM_KEYS,
    num_filler: int = DEFAULT_NUM_FILLER,
) -> Vocab:
    """The fixed vocabulary used by :func:`generate_synthetic`."""
    tokens = [f"key{k}" for k in range(num_keys)]
    tokens += [f"lock{k}" for k in range(num_keys)]
    tokens += [f"w{j}" for j in range(num_filler)]
    return Vocab(tokens)


def generate_synthetic(
    num_instances: int,
    n: int,
    q_len: int,
    a_len: int,
    seed: int,
    num_keys: int = DEFAULT_NUM_KEYS,
    num_filler: int = DEFAULT_NUM_FILLER,
) -> list[QAInstance]:
    """Deterministic key/lock MCQA dataset; gold indices uniform over [0, n)."""
    if num_instances < 1 or q_len < 1 or a_len < 1:
        raise ValidationError("num_instances, q_len, a_len must all be >= 1")
    if n < 2:
        raise ValidationError(f"need at least 2 candidates per question, got {n}")
    if n > num_keys:
        raise ValidationError(f"n={n} exceeds num_keys={num_keys}; distractor locks must differ")

    vocab = synthetic_vocab(num_keys, num_filler)
    key_ids = [vocab.id_of(f"key{k}") for k in range(num_keys)]
    lock_ids = [vocab.id_of(f"lock{k}") for k in range(num_keys)]
    filler_ids = np.array([vocab.id_of(f"w{j}") for j in range(num_filler)])

    rng = np.random.default_rng(seed)
    instances = []
    for idx in range(num_instances):
        key = int(rng.integers(num_keys))
        gold = int(rng.integers(n))

        question = list(filler_ids[rng.integers(num_filler, size=q_len)])
        question[int(rng.integers(q_len))] = key_ids[key]

        other_keys = [k for k in range(num_keys) if k != key]
        wrong = rng.permutation(len(other_keys))[: n - 1]
        wrong_locks = iter(lock_ids[other_keys[w]] for w in wrong)

        answers = []
        for cand in range(n):
            ans = list(filler_ids[rng.integers(num_filler, size=a_len)])
            lock = lock_ids[key] if cand == gold else next(wrong_locks)
            ans[int(rng.integers(a_len))] = lock
            answers.append([int(t) for t in ans])

        instances.append(QAInstance(f"syn-{idx}", [int(t) for t in question], answers, gold))
    return instances
