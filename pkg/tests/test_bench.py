"""Tests for the analytic cost model, the activation byte accountant, and
the pilot question-extension experiment."""

import numpy as np
import pytest
import torch

from mcqa.bench import (
    BenchReport,
    CostEstimate,
    activation_bytes,
    estimate_cost,
    find_max_batch,
    pilot_append_experiment,
    run_benchmark,
)
from mcqa.data import QAInstance, generate_synthetic, synthetic_vocab
from mcqa.encoder import EncoderConfig
from mcqa.errors import ConfigError, ContractError, ValidationError
from mcqa.layout import layout_1anp, layout_na1p, layout_nanp
from mcqa.model import MCQAModel
from mcqa.training import TrainConfig, evaluate, train

VOCAB_SIZE = synthetic_vocab().size
SMALL = EncoderConfig(
    vocab_size=VOCAB_SIZE, d_model=16, n_layers=1, n_heads=2, d_ff=32, max_len=96
)
WIDE = EncoderConfig(vocab_size=VOCAB_SIZE, d_model=64, n_layers=2, n_heads=4,
                     d_ff=128, max_len=512)


def random_instance(rng):
    q = [int(t) for t in rng.integers(4, 30, size=rng.integers(1, 9))]
    answers = [
        [int(t) for t in rng.integers(4, 30, size=rng.integers(1, 5))]
        for _ in range(int(rng.integers(2, 6)))
    ]
    return QAInstance("r", q, answers, 0)


class TestEstimateCost:
    def test_canonical_workload(self):
        # q = 48, five answers of 8: per-candidate passes cost 5 x 60 tokens,
        # the shared pass costs 96.
        per = estimate_cost(48, [8] * 5, "1anp", WIDE)
        assert per.total_tokens == 300
        assert per.passes == 5
        single = estimate_cost(48, [8] * 5, "na1p", WIDE)
        assert single.total_tokens == 96
        assert single.passes == 1

    def test_attention_proxy_units(self):
        # Dividing out n_layers * d_model leaves sum(L^2): 5 * 60^2 = 18000
        # for per-candidate passes, 96^2 = 9216 for the single pass.
        per = estimate_cost(48, [8] * 5, "1anp", WIDE)
        single = estimate_cost(48, [8] * 5, "na1p", WIDE)
        unit = WIDE.n_layers * WIDE.d_model
        assert per.attention_flops == unit * 18000
        assert single.attention_flops == unit * 9216

    def test_totals_match_realized_layouts(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            inst = random_instance(rng)
            q, ans = len(inst.question), [len(a) for a in inst.answers]
            got_1anp = estimate_cost(q, ans, "1anp", SMALL).total_tokens
            assert got_1anp == sum(
                len(layout_1anp(inst, i)[0]) for i in range(inst.num_answers)
            )
            got_nanp = estimate_cost(q, ans, "nanp", SMALL).total_tokens
            assert got_nanp == sum(
                len(layout_nanp(inst, i)[0]) for i in range(inst.num_answers)
            )
            got_na1p = estimate_cost(q, ans, "na1p", SMALL).total_tokens
            assert got_na1p == len(layout_na1p(inst)[0])

    def test_single_candidate_schemes_coincide(self):
        for scheme in ("1anp", "nanp", "na1p"):
            est = estimate_cost(7, [3], scheme, SMALL)
            assert est.total_tokens == 14
            assert est.passes == 1

    def test_validation(self):
        with pytest.raises(ValidationError):
            estimate_cost(0, [3], "1anp", SMALL)
        with pytest.raises(ValidationError):
            estimate_cost(5, [], "1anp", SMALL)
        with pytest.raises(ValidationError):
            estimate_cost(5, [3, 0], "1anp", SMALL)

    def test_to_dict(self):
        est = estimate_cost(5, [2, 2], "na1p", SMALL)
        assert isinstance(est, CostEstimate)
        assert est.to_dict() == {
            "total_tokens": est.total_tokens,
            "attention_flops": est.attention_flops,
            "passes": 1,
        }


class TestActivationBytes:
    def test_formula(self):
        cfg = SMALL
        L, d = 10, cfg.d_model
        expected = 4 * (
            (cfg.n_layers + 1) * L * d
            + 8 * L * d
            + cfg.n_heads * L * L
            + L * cfg.d_ff
        )
        assert activation_bytes(1, L, cfg) == expected
        assert activation_bytes(7, L, cfg) == 7 * expected

    def test_monotone_in_batch_and_length(self):
        assert activation_bytes(2, 10, SMALL) > activation_bytes(1, 10, SMALL)
        assert activation_bytes(1, 20, SMALL) > activation_bytes(1, 10, SMALL)

    def test_deterministic(self):
        assert activation_bytes(3, 17, WIDE) == activation_bytes(3, 17, WIDE)


class TestFindMaxBatch:
    def test_boundary_is_exact(self):
        budget = 1 << 22
        batch = find_max_batch(1, 32, SMALL, budget)
        assert activation_bytes(batch, 32, SMALL) <= budget
        assert activation_bytes(batch + 1, 32, SMALL) > budget

    def test_scales_inversely_with_sequences_per_instance(self):
        budget = 1 << 22
        one = find_max_batch(1, 32, SMALL, budget)
        five = find_max_batch(5, 32, SMALL, budget)
        assert five <= one // 5 + 1

    def test_budget_too_small(self):
        with pytest.raises(ConfigError):
            find_max_batch(1, 32, SMALL, 64)

    def test_deterministic(self):
        assert find_max_batch(3, 40, WIDE, 1 << 24) == find_max_batch(3, 40, WIDE, 1 << 24)


class TestRunBenchmark:
    def test_smoke(self):
        inst = generate_synthetic(1, n=3, q_len=8, a_len=2, seed=0)[0]
        base_model = MCQAModel(SMALL, scheme="1anp", gate=False, seed=0)
        single_model = MCQAModel(SMALL, scheme="na1p", gate=True, seed=0)
        base, other = run_benchmark(
            base_model, single_model, inst, num_instances=8,
            memory_budget_bytes=1 << 22, repetitions=1,
        )
        assert isinstance(base, BenchReport) and isinstance(other, BenchReport)
        assert base.scheme == "1anp" and other.scheme == "na1p"
        assert base.max_batch >= 1 and other.max_batch >= 1
        assert other.max_batch > base.max_batch
        assert base.wall_time_seconds > 0 and other.wall_time_seconds > 0
        assert base.delta_vs_baseline == {"max_batch_pct": 0.0, "wall_time_pct": 0.0}
        assert other.delta_vs_baseline["max_batch_pct"] > 0
        assert base.tokens_per_instance == 3 * (8 + 2 + 4)
        assert other.tokens_per_instance == 8 + 3 * (2 + 1) + 3

    def test_thread_count_restored(self):
        inst = generate_synthetic(1, n=2, q_len=4, a_len=1, seed=0)[0]
        before = torch.get_num_threads()
        run_benchmark(
            MCQAModel(SMALL, scheme="1anp", gate=False, seed=0),
            MCQAModel(SMALL, scheme="na1p", gate=False, seed=0),
            inst, num_instances=2, memory_budget_bytes=1 << 22,
            repetitions=1, workers=2,
        )
        assert torch.get_num_threads() == before

    def test_mismatched_configs_rejected(self):
        inst = generate_synthetic(1, n=2, q_len=4, a_len=1, seed=0)[0]
        with pytest.raises(ConfigError):
            run_benchmark(
                MCQAModel(SMALL, scheme="1anp", gate=False, seed=0),
                MCQAModel(WIDE, scheme="na1p", gate=False, seed=0),
                inst, num_instances=2, memory_budget_bytes=1 << 22,
            )

    def test_bad_instance_count(self):
        inst = generate_synthetic(1, n=2, q_len=4, a_len=1, seed=0)[0]
        with pytest.raises(ValidationError):
            run_benchmark(
                MCQAModel(SMALL, scheme="1anp", gate=False, seed=0),
                MCQAModel(SMALL, scheme="na1p", gate=False, seed=0),
                inst, num_instances=0, memory_budget_bytes=1 << 22,
            )


@pytest.fixture(scope="module")
def trained():
    data = generate_synthetic(160, n=4, q_len=6, a_len=2, seed=0)
    dev = generate_synthetic(40, n=4, q_len=6, a_len=2, seed=1)
    model = MCQAModel(SMALL, scheme="1anp", gate=False, seed=0)
    train(model, data, dev, TrainConfig(epochs=3, batch_size=16, seed=0))
    return model, dev


class TestPilot:
    def test_k_zero_equals_plain_evaluation(self, trained):
        model, dev = trained
        curve = pilot_append_experiment(dev, model, k_max=0)
        assert curve.points == [(0, evaluate(model, dev, scheme="1anp"))]

    def test_fixed_seed_reproducible(self, trained):
        model, dev = trained
        a = pilot_append_experiment(dev, model, k_max=3, seed=4)
        b = pilot_append_experiment(dev, model, k_max=3, seed=4)
        assert a.points == b.points

    def test_curve_shape_and_dict(self, trained):
        model, dev = trained
        curve = pilot_append_experiment(dev, model, k_max=3)
        assert [k for k, _ in curve.points] == [0, 1, 2, 3]
        assert all(0.0 <= acc <= 1.0 for _, acc in curve.points)
        d = curve.to_dict()
        assert d["points"][0] == {"k": 0, "accuracy": curve.points[0][1]}

    def test_k_max_bounds(self, trained):
        model, dev = trained
        with pytest.raises(ContractError):
            pilot_append_experiment(dev, model, k_max=4)
        with pytest.raises(ContractError):
            pilot_append_experiment(dev, model, k_max=-1)

    def test_empty_dataset(self, trained):
        model, _ = trained
        with pytest.raises(ValidationError):
            pilot_append_experiment([], model, k_max=0)

    def test_untrained_model_warns(self):
        dev = generate_synthetic(4, n=3, q_len=4, a_len=1, seed=2)
        model = MCQAModel(SMALL, scheme="1anp", gate=False, seed=0)
        with pytest.warns(UserWarning, match="untrained"):
            pilot_append_experiment(dev, model, k_max=1)
