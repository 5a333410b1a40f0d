import math

import numpy as np
import pytest
import torch

from mcqa.data import QAInstance
from mcqa.encoder import EncoderConfig
from mcqa.errors import ConfigError, EvaluationError, ShapeError
from mcqa.model import MCQAModel, Scheme, ScoreHead, forward_scores, loss, select

SMALL = EncoderConfig(vocab_size=50, d_model=16, n_layers=1, n_heads=2, d_ff=32, max_len=48)


def make_instance(answers=None, gold=0):
    answers = answers if answers is not None else [[7, 8], [9, 10], [11, 12]]
    return QAInstance("t0", [4, 5, 6], answers, gold)


class TestLoss:
    def test_uniform_scores_give_log_n(self):
        assert abs(loss(torch.zeros(4), 0).item() - math.log(4)) < 1e-6
        assert abs(loss(torch.zeros(5), 2).item() - math.log(5)) < 1e-6

    def test_dominant_gold_score_drives_loss_to_zero(self):
        scores = torch.tensor([30.0, 0.0, 0.0])
        assert loss(scores, 0).item() < 1e-9

    def test_matches_manual_softmax_cross_entropy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            scores = torch.tensor(rng.normal(size=5), dtype=torch.float64)
            gold = int(rng.integers(5))
            logz = torch.logsumexp(scores, dim=0)
            manual = (logz - scores[gold]).item()
            assert abs(loss(scores, gold).item() - manual) < 1e-9

    def test_non_finite_scores_rejected(self):
        with pytest.raises(EvaluationError):
            loss(torch.tensor([0.0, float("nan")]), 0)
        with pytest.raises(EvaluationError):
            loss(torch.tensor([0.0, float("inf")]), 0)

    def test_gold_out_of_range(self):
        with pytest.raises(EvaluationError):
            loss(torch.zeros(3), 3)
        with pytest.raises(EvaluationError):
            loss(torch.zeros(3), -1)

    def test_gradient_flows(self):
        scores = torch.tensor([0.1, 0.5, -0.2], requires_grad=True)
        loss(scores, 1).backward()
        assert scores.grad is not None
        # d loss / d s_gold = p_gold - 1 < 0
        assert scores.grad[1].item() < 0


class TestSelect:
    def test_argmax(self):
        assert select(torch.tensor([0.1, 0.9, 0.3])) == 1

    def test_tie_goes_to_lowest_index(self):
        assert select(torch.tensor([0.5, 0.5])) == 0
        assert select([1.0, 2.0, 2.0]) == 1

    def test_single_candidate(self):
        assert select(torch.tensor([-4.2])) == 0

    def test_accepts_plain_sequences(self):
        assert select([3.0, 1.0, 2.0]) == 0

    def test_nan_rejected(self):
        with pytest.raises(EvaluationError):
            select(torch.tensor([0.0, float("nan")]))

    def test_empty_rejected(self):
        with pytest.raises(EvaluationError):
            select(torch.tensor([]))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            scores = torch.tensor(rng.normal(size=6))
            assert select(scores) == select(3.0 * scores + 1.0)
            assert select(scores) == select(torch.tanh(scores))


class TestScoreHead:
    def test_known_weights_sum_nonnegative_input(self):
        # All-ones first layer and averaging second layer reduce the head to
        # z -> sum(z) whenever z is elementwise nonnegative (ReLU inactive).
        head = ScoreHead(6, 4)
        with torch.no_grad():
            head.lin1.weight.fill_(1.0)
            head.lin1.bias.zero_()
            head.lin2.weight.fill_(1.0 / 4)
            head.lin2.bias.zero_()
        z = torch.rand(5, 6)
        assert torch.allclose(head(z), z.sum(dim=-1), atol=1e-5)

    def test_scalar_output_per_row(self):
        head = ScoreHead(8, 4)
        assert head(torch.randn(3, 8)).shape == (3,)
        assert head(torch.randn(8)).shape == ()

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            ScoreHead(8, 4)(torch.randn(3, 6))


class TestModelScoring:
    def test_score_vector_shape_all_schemes(self):
        inst = make_instance()
        for scheme in Scheme:
            model = MCQAModel(SMALL, scheme=scheme, pooling="max",
                              gate=scheme is Scheme.N_A_1_P, seed=0)
            scores = forward_scores(model, inst)
            assert scores.shape == (3,)
            assert torch.isfinite(scores).all()

    def test_gate_requires_single_pass_scheme(self):
        with pytest.raises(ConfigError):
            MCQAModel(SMALL, scheme="1anp", gate=True)
        with pytest.raises(ConfigError):
            MCQAModel(SMALL, scheme="nanp", gate=True)

    def test_duplicate_candidates_tie_under_per_candidate_schemes(self):
        # Identical candidates build identical sequences, so their scores
        # must coincide when each candidate gets its own pass.
        inst = make_instance(answers=[[7, 8], [7, 8], [9, 10]])
        for scheme in ("1anp", "nanp"):
            model = MCQAModel(SMALL, scheme=scheme, gate=False, seed=1)
            scores = forward_scores(model, inst)
            assert scores[0].item() == scores[1].item(), scheme

    def test_single_pass_scores_are_position_aware(self):
        # Under the shared-sequence layout the same surface form sits at
        # different positions, so duplicate candidates may score apart.
        inst = make_instance(answers=[[7, 8], [7, 8], [9, 10]])
        model = MCQAModel(SMALL, scheme="na1p", gate=False, seed=1)
        scores = forward_scores(model, inst)
        assert scores.shape == (3,)

    def test_scheme_override_at_evaluation(self):
        inst = make_instance()
        model = MCQAModel(SMALL, scheme="na1p", gate=True, seed=2)
        for scheme in Scheme:
            scores = model.instance_scores(inst, scheme)
            assert scores.shape == (3,)

    def test_batched_matches_single_instance(self):
        torch.manual_seed(0)
        insts = [make_instance(gold=g) for g in range(3)]
        for scheme in Scheme:
            model = MCQAModel(SMALL, scheme=scheme, gate=scheme is Scheme.N_A_1_P, seed=3)
            model.eval()
            together = model.batch_scores(insts)
            for inst, batched in zip(insts, together):
                alone = model.instance_scores(inst)
                assert torch.allclose(batched, alone, atol=1e-5), scheme

    def test_ragged_batch(self):
        insts = [
            make_instance(),
            QAInstance("t1", [4, 5], [[6], [7, 8, 9]], 1),
        ]
        model = MCQAModel(SMALL, scheme="na1p", gate=True, seed=4)
        out = model.batch_scores(insts)
        assert out[0].shape == (3,) and out[1].shape == (2,)

    def test_deterministic_forward(self):
        inst = make_instance()
        model = MCQAModel(SMALL, scheme="na1p", gate=True, seed=5)
        a = forward_scores(model, inst)
        b = forward_scores(model, inst)
        assert torch.equal(a, b)

    def test_no_concat_ablation_narrows_scorer_input(self):
        model = MCQAModel(SMALL, scheme="na1p", gate=True, qa_concat=False, seed=6)
        assert model.head.lin1.in_features == SMALL.d_model
        scores = forward_scores(model, make_instance())
        assert scores.shape == (3,)

    def test_param_groups_partition_everything(self):
        model = MCQAModel(SMALL, scheme="na1p", gate=True, seed=7)
        groups = model.param_groups()
        ids = [id(p) for ps in groups.values() for p in ps]
        assert len(ids) == len(set(ids))
        assert set(ids) == {id(p) for p in model.parameters()}
        assert groups["encoder"] and groups["head"]

    def test_scores_carry_gradients(self):
        model = MCQAModel(SMALL, scheme="na1p", gate=True, seed=8)
        scores = forward_scores(model, make_instance())
        loss(scores, 0).backward()
        assert model.head.lin2.weight.grad is not None
        assert model.gate.w_own.weight.grad is not None
