"""Analytic cost model and throughput harness for the encoding schemes.

The memory budget is enforced by a deterministic byte accountant over
activation tensors rather than by probing the allocator, so the same
(batch, sequence length, config) always yields the same usable batch size
on any machine.  Wall time uses a monotonic clock with the warm-up batch
excluded and the median taken over repetitions.
"""

from __future__ import annotations

import statistics
import time
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .data import QAInstance
from .encoder import EncoderConfig
from .errors import ConfigError, ContractError, ValidationError
from .layout import (
    layout_1anp,
    layout_na1p,
    layout_nanp,
    length_1anp,
    length_na1p,
    length_nanp,
    extended_question,
)
from .model import MCQAModel, Scheme, select

MAX_BATCH_CAP = 1 << 20


@dataclass
class CostEstimate:
    total_tokens: int
    attention_flops: int
    passes: int

    def to_dict(self) -> dict:
        return {
            "total_tokens": self.total_tokens,
            "attention_flops": self.attention_flops,
            "passes": self.passes,
        }


def estimate_cost(
    q_len: int,
    answer_lens: Sequence[int],
    scheme: Scheme | str,
    config: EncoderConfig,
) -> CostEstimate:
    """Per-instance token count and attention-FLOP proxy for one scheme.

    The proxy is n_layers * d_model * sum(L^2) over encoder passes; it
    ignores feed-forward cost and is meant for comparison, not prediction."""
    scheme = Scheme(scheme)
    if q_len < 1 or not answer_lens or any(a < 1 for a in answer_lens):
        raise ValidationError("q_len and every answer length must be >= 1")
    if scheme is Scheme.ONE_A_N_P:
        lengths = [length_1anp(q_len, a) for a in answer_lens]
    elif scheme is Scheme.N_A_N_P:
        lengths = [length_nanp(q_len, answer_lens, i) for i in range(len(answer_lens))]
    else:
        lengths = [length_na1p(q_len, answer_lens)]
    flops = config.n_layers * config.d_model * sum(L * L for L in lengths)
    return CostEstimate(sum(lengths), flops, len(lengths))


def activation_bytes(n_seqs: int, seq_len: int, config: EncoderConfig) -> int:
    """Peak live float32 activation bytes for ``n_seqs`` padded sequences.

    Retained: the per-layer state stack (n_layers + 1 states of L x d).
    Transient peak inside one block: attention projections and residuals
    (8 L d), per-head weights (n_heads L^2), and the feed-forward hidden
    layer (L d_ff)."""
    retained = (config.n_layers + 1) * seq_len * config.d_model
    transient = (
        8 * seq_len * config.d_model
        + config.n_heads * seq_len * seq_len
        + seq_len * config.d_ff
    )
    return 4 * n_seqs * (retained + transient)


def find_max_batch(
    seqs_per_instance: int,
    seq_len: int,
    config: EncoderConfig,
    memory_budget_bytes: int,
) -> int:
    """Largest instance batch whose accounted activations fit the budget.

    Doubles until infeasible, then binary-searches the boundary."""
    def fits(batch: int) -> bool:
        return activation_bytes(batch * seqs_per_instance, seq_len, config) <= memory_budget_bytes

    if not fits(1):
        raise ConfigError(
            f"memory budget {memory_budget_bytes} bytes cannot fit a single instance "
            f"({seqs_per_instance} sequences of length {seq_len})"
        )
    hi = 1
    while fits(hi) and hi < MAX_BATCH_CAP:
        hi *= 2
    if fits(hi):
        return hi
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class BenchReport:
    scheme: str
    max_batch: int
    wall_time_seconds: float
    tokens_per_instance: int
    delta_vs_baseline: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "max_batch": self.max_batch,
            "wall_time_seconds": self.wall_time_seconds,
            "tokens_per_instance": self.tokens_per_instance,
            "delta_vs_baseline": self.delta_vs_baseline,
        }


def _scheme_workload(model: MCQAModel, scheme: Scheme, instance: QAInstance):
    """(sequences per instance, padded length) for the duplicated workload."""
    if scheme is Scheme.N_A_1_P:
        seq, _ = layout_na1p(instance, model.config.max_len)
        return 1, len(seq)
    layout_fn = layout_1anp if scheme is Scheme.ONE_A_N_P else layout_nanp
    lengths = [
        len(layout_fn(instance, i, model.config.max_len)[0])
        for i in range(instance.num_answers)
    ]
    return instance.num_answers, max(lengths)


def _time_scheme(
    model: MCQAModel,
    scheme: Scheme,
    instance: QAInstance,
    num_instances: int,
    batch: int,
    repetitions: int,
) -> float:
    model.eval()
    chunks = [
        [instance] * min(batch, num_instances - start)
        for start in range(0, num_instances, batch)
    ]
    with torch.no_grad():
        model.batch_scores(chunks[0], scheme)  # warm-up, excluded
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for chunk in chunks:
                model.batch_scores(chunk, scheme)
            times.append(time.perf_counter() - t0)
    return statistics.median(times)


def run_benchmark(
    model_1anp: MCQAModel,
    model_na1p: MCQAModel,
    instance: QAInstance,
    num_instances: int,
    memory_budget_bytes: int,
    repetitions: int = 3,
    workers: int = 1,
) -> tuple[BenchReport, BenchReport]:
    """Duplicate ``instance`` to ``num_instances`` and time both schemes at
    their own maximum usable batch under the shared byte budget.

    Returns (baseline 1AnP report, nA1P report); the latter carries the
    percentage deltas against the baseline."""
    if num_instances < 1:
        raise ValidationError("num_instances must be >= 1")
    if model_1anp.config != model_na1p.config:
        raise ConfigError("benchmark models must share an encoder config")

    old_threads = torch.get_num_threads()
    torch.set_num_threads(max(1, workers))
    try:
        reports = []
        for model, scheme in ((model_1anp, Scheme.ONE_A_N_P), (model_na1p, Scheme.N_A_1_P)):
            seqs, seq_len = _scheme_workload(model, scheme, instance)
            batch = find_max_batch(seqs, seq_len, model.config, memory_budget_bytes)
            elapsed = _time_scheme(model, scheme, instance, num_instances, batch, repetitions)
            cost = estimate_cost(
                len(instance.question),
                [len(a) for a in instance.answers],
                scheme,
                model.config,
            )
            reports.append(BenchReport(scheme.value, batch, elapsed, cost.total_tokens))
    finally:
        torch.set_num_threads(old_threads)

    base, other = reports
    base.delta_vs_baseline = {"max_batch_pct": 0.0, "wall_time_pct": 0.0}
    other.delta_vs_baseline = {
        "max_batch_pct": 100.0 * (other.max_batch - base.max_batch) / base.max_batch,
        "wall_time_pct": 100.0 * (other.wall_time_seconds - base.wall_time_seconds)
        / base.wall_time_seconds,
    }
    return base, other


@dataclass
class PilotCurve:
    points: list[tuple[int, float]]

    def to_dict(self) -> dict:
        return {"points": [{"k": k, "accuracy": acc} for k, acc in self.points]}


def pilot_append_experiment(
    dataset: Sequence[QAInstance],
    model: MCQAModel,
    k_max: int,
    seed: int = 0,
) -> PilotCurve:
    """Accuracy of 1AnP evaluation after appending k random candidates to
    the question, for k = 0..k_max.

    k = 0 is plain evaluation (no randomness consumed), so it matches the
    ordinary accuracy exactly.  Each k > 0 draws its candidate picks from an
    independent seeded stream, so curves are reproducible."""
    if not dataset:
        raise ValidationError("cannot run the pilot on an empty dataset")
    min_n = min(inst.num_answers for inst in dataset)
    if not 0 <= k_max < min_n:
        raise ContractError(f"k_max must be in [0, {min_n - 1}] for this dataset")
    if not model.trained:
        warnings.warn("pilot experiment on an untrained model", stacklevel=2)

    model.eval()
    points = []
    with torch.no_grad():
        for k in range(k_max + 1):
            if k == 0:
                modified = list(dataset)
            else:
                rng = np.random.default_rng([seed, k])
                modified = []
                for inst in dataset:
                    picked = rng.choice(inst.num_answers, size=k, replace=False)
                    modified.append(
                        QAInstance(
                            inst.id,
                            extended_question(inst, [int(j) for j in picked]),
                            inst.answers,
                            inst.gold,
                        )
                    )
            correct = 0
            for start in range(0, len(modified), 64):
                chunk = modified[start : start + 64]
                scores = model.batch_scores(chunk, Scheme.ONE_A_N_P)
                correct += sum(
                    int(select(s) == inst.gold) for s, inst in zip(scores, chunk)
                )
            points.append((k, correct / len(modified)))
    return PilotCurve(points)
