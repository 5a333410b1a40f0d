"""Training loop, evaluation, and finite-difference gradient verification."""

from __future__ import annotations

import copy
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from . import probe
from .data import QAInstance
from .errors import GradCheckTieError, TrainingDivergedError, ValidationError
from .model import MCQAModel, loss as score_loss, select

EVAL_BATCH = 64


@dataclass
class TrainConfig:
    lr_encoder: float = 0.05
    lr_head: float = 0.5
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    dev_accuracy: Optional[float]


@dataclass
class TrainResult:
    metrics: list[EpochMetrics]
    best_epoch: int
    best_dev_accuracy: Optional[float]

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": m.epoch, "train_loss": m.train_loss, "dev_accuracy": m.dev_accuracy}
                for m in self.metrics
            ],
            "best_epoch": self.best_epoch,
            "best_dev_accuracy": self.best_dev_accuracy,
        }


def batch_loss(model: MCQAModel, batch: Sequence[QAInstance]) -> torch.Tensor:
    """Mean cross-entropy over a batch of instances."""
    scores = model.batch_scores(batch)
    if all(s.shape == scores[0].shape for s in scores):
        stacked = torch.stack(scores)
        golds = torch.tensor([inst.gold for inst in batch])
        return torch.nn.functional.cross_entropy(stacked, golds)
    return torch.stack(
        [score_loss(s, inst.gold) for s, inst in zip(scores, batch)]
    ).mean()


def evaluate(model: MCQAModel, instances: Sequence[QAInstance], scheme=None) -> float:
    """Accuracy of argmax selection over ``instances``."""
    if not instances:
        raise ValidationError("cannot evaluate on an empty dataset")
    was_training = model.training
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(instances), EVAL_BATCH):
            chunk = instances[start : start + EVAL_BATCH]
            for inst, scores in zip(chunk, model.batch_scores(chunk, scheme)):
                correct += int(select(scores) == inst.gold)
    if was_training:
        model.train()
    return correct / len(instances)


def train(
    model: MCQAModel,
    train_set: Sequence[QAInstance],
    dev_set: Sequence[QAInstance],
    cfg: TrainConfig,
) -> TrainResult:
    """Plain mini-batch gradient descent with the two-group learning-rate
    split (encoder body vs pooling/gate/scoring heads).

    Deterministic given ``cfg.seed``.  The model is left holding the weights
    of its best dev-accuracy epoch."""
    if not train_set:
        raise ValidationError("empty training set")
    groups = model.param_groups()
    opt = torch.optim.SGD(
        [
            {"params": groups["encoder"], "lr": cfg.lr_encoder},
            {"params": groups["head"], "lr": cfg.lr_head},
        ]
    )
    order = list(range(len(train_set)))
    rng = random.Random(cfg.seed)
    metrics: list[EpochMetrics] = []
    best_acc, best_epoch, best_state = -1.0, -1, None

    for epoch in range(cfg.epochs):
        model.train()
        rng.shuffle(order)
        total, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            opt.zero_grad()
            loss_val = batch_loss(model, batch)
            if not torch.isfinite(loss_val):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, instance offset {start} "
                    f"(lr_encoder={cfg.lr_encoder}, lr_head={cfg.lr_head})"
                )
            loss_val.backward()
            opt.step()
            total += float(loss_val.detach()) * len(batch)
            seen += len(batch)

        dev_acc = evaluate(model, dev_set) if dev_set else None
        metrics.append(EpochMetrics(epoch, total / seen, dev_acc))
        if dev_acc is not None and dev_acc > best_acc:
            best_acc, best_epoch = dev_acc, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    if best_state is not None:
        model.load_state_dict(best_state)
    if cfg.epochs > 0:
        model.trained = True
    return TrainResult(metrics, best_epoch, best_acc if best_acc >= 0 else None)


# --- gradient verification -------------------------------------------------


@dataclass
class GradCheckResult:
    max_rel_error: float
    num_checked: int
    per_group: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "num_checked": self.num_checked,
            "per_group": self.per_group,
        }


def _rel_error(fd: float, an: float) -> float:
    denom = max(abs(fd), abs(an))
    if denom < 1e-6:
        return abs(fd - an)
    return abs(fd - an) / denom


def grad_check(
    model: MCQAModel,
    instance: QAInstance,
    epsilon: float = 1e-5,
    num_samples: int = 240,
    seed: int = 0,
) -> GradCheckResult:
    """Compare analytic gradients of the loss against central finite
    differences on sampled scalar parameters, at least one per tensor.

    Runs on a 64-bit copy of the model in eval mode; the caller's model is
    untouched.  Raises :class:`GradCheckTieError` when the path runs within
    ``100 * epsilon`` of a max-pool tie or ReLU kink, in which case the
    caller should re-sample the instance."""
    work = copy.deepcopy(model).double()
    work.eval()

    def forward_loss() -> torch.Tensor:
        return score_loss(work.instance_scores(instance), instance.gold)

    with probe.record_kink_margins() as margins:
        with torch.no_grad():
            forward_loss()
    threshold = 100.0 * epsilon
    for kind, margin in margins.items():
        if margin < threshold:
            raise GradCheckTieError(
                f"{kind} margin {margin:.3e} < {threshold:.1e}; re-sample the instance"
            )

    named = [(name, p) for name, p in work.named_parameters() if p.requires_grad]
    if not named:
        raise ValidationError("no trainable parameters to check")
    work.zero_grad()
    forward_loss().backward()
    analytic = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in named
    }

    rng = np.random.default_rng(seed)
    per_tensor = max(1, -(-num_samples // len(named)))  # ceil division
    max_err = 0.0
    per_group: dict[str, float] = {}
    checked = 0
    with torch.no_grad():
        for name, p in named:
            flat = p.view(-1)
            count = min(per_tensor, flat.numel())
            picks = rng.choice(flat.numel(), size=count, replace=False)
            for idx in picks:
                idx = int(idx)
                orig = float(flat[idx])
                flat[idx] = orig + epsilon
                up = float(forward_loss())
                flat[idx] = orig - epsilon
                down = float(forward_loss())
                flat[idx] = orig
                fd = (up - down) / (2.0 * epsilon)
                err = _rel_error(fd, float(analytic[name].view(-1)[idx]))
                group = name.split(".")[0]
                per_group[group] = max(per_group.get(group, 0.0), err)
                max_err = max(max_err, err)
                checked += 1
    return GradCheckResult(max_err, checked, per_group)
