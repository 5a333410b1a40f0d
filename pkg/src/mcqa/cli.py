"""Command-line interface: train, eval, bench, pilot, gradcheck, cost.

Every subcommand emits a JSON report (echoed config, metrics, environment
fields) either to --out or to stdout.  When --data is omitted the commands
fall back to the deterministic synthetic key/lock task.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import torch

from .bench import estimate_cost, pilot_append_experiment, run_benchmark
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import QAInstance, Vocab, generate_synthetic, load_dataset, synthetic_vocab
from .encoder import EncoderConfig
from .errors import ConfigError, GradCheckTieError, McqaError
from .model import MCQAModel, PoolingKind, Scheme
from .training import TrainConfig, evaluate, grad_check, train

GRADCHECK_ATTEMPTS = 20


def _environment() -> dict:
    return {
        "python": platform.python_version(),
        "torch": torch.__version__,
        "platform": platform.platform(),
        "threads": torch.get_num_threads(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _emit(report: dict, out: Optional[str]) -> None:
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        print(f"report written to {out}")
    else:
        print(text)


def _run_config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _encoder_config(cfg: RunConfig, vocab_size: int) -> EncoderConfig:
    return EncoderConfig(
        vocab_size=vocab_size,
        d_model=cfg.d_model,
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        d_ff=cfg.d_ff,
        max_len=cfg.max_len,
    )


def _synthetic_split(args) -> tuple[list[QAInstance], list[QAInstance], Vocab]:
    train_set = generate_synthetic(args.count, args.n_answers, args.q_len, args.a_len, args.seed)
    dev_set = generate_synthetic(
        max(1, args.count // 5), args.n_answers, args.q_len, args.a_len, args.seed + 1000
    )
    return train_set, dev_set, synthetic_vocab()


def _datasets(args) -> tuple[list[QAInstance], list[QAInstance], Vocab]:
    if not args.data:
        return _synthetic_split(args)
    train_set, vocab = load_dataset(args.data)
    if args.dev:
        dev_set, _ = load_dataset(args.dev, vocab=vocab)
    else:
        cut = max(1, len(train_set) // 5)
        dev_set, train_set = train_set[:cut], train_set[cut:]
    return train_set, dev_set, vocab


def _build_model(args, cfg: RunConfig, vocab_size: int) -> MCQAModel:
    scheme = Scheme(args.scheme)
    gate = args.gate == "on" if args.gate else scheme is Scheme.N_A_1_P
    return MCQAModel(
        _encoder_config(cfg, vocab_size),
        scheme=scheme,
        pooling=PoolingKind(args.pooling),
        gate=gate,
        qa_concat=args.concat != "off",
        seed=args.seed,
    )


def _add_common(p: argparse.ArgumentParser, scheme_default: str = "na1p") -> None:
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=scheme_default)
    p.add_argument("--pooling", choices=[k.value for k in PoolingKind], default="max")
    p.add_argument("--gate", choices=["on", "off"], default=None,
                   help="default: on for na1p, off otherwise")
    p.add_argument("--concat", choices=["on", "off"], default="on",
                   help="score from question-and-answer concatenation (on) or answer alone")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--data", help="JSONL dataset; omitted -> synthetic task")
    p.add_argument("--dev", help="JSONL dev set (with --data)")
    p.add_argument("--q-len", type=int, default=12)
    p.add_argument("--a-len", type=int, default=3)
    p.add_argument("--n-answers", type=int, default=5)
    p.add_argument("--count", type=int, default=1000, help="synthetic instance count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcqa",
        description="Multiple-choice QA encoding schemes: training, evaluation, "
        "throughput benchmarks, and gradient verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, optionally saving a checkpoint")
    _add_common(p)
    p.add_argument("--ckpt", help="write the trained model here")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    p.add_argument("--ckpt", required=True)

    p = sub.add_parser("bench", help="compare 1AnP and nA1P throughput")
    _add_common(p, scheme_default="na1p")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--budget", type=int, default=None,
                   help="activation byte budget (default: config memory_budget_bytes)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("pilot", help="question-append degradation curve")
    _add_common(p, scheme_default="1anp")
    p.add_argument("--ckpt", help="evaluate this checkpoint instead of training fresh")
    p.add_argument("--k-max", type=int, default=None, help="default: n_answers - 1")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=240)

    p = sub.add_parser("cost", help="analytic per-instance cost of all schemes")
    _add_common(p)
    return parser


def _cmd_train(args) -> dict:
    cfg = _run_config(args)
    train_set, dev_set, vocab = _datasets(args)
    model = _build_model(args, cfg, vocab.size)
    tc = TrainConfig(cfg.lr_encoder, cfg.lr_head, cfg.epochs, cfg.batch_size, args.seed)
    result = train(model, train_set, dev_set, tc)
    if args.ckpt:
        save_checkpoint(args.ckpt, model, vocab)
    return {
        "train_size": len(train_set),
        "dev_size": len(dev_set),
        "metrics": result.to_dict(),
        "checkpoint": args.ckpt,
    }


def _cmd_eval(args) -> dict:
    model, vocab = load_checkpoint(args.ckpt)
    if args.data:
        if vocab is None:
            raise ConfigError("checkpoint stores no vocabulary; cannot tokenize --data")
        instances, _ = load_dataset(args.data, vocab=vocab)
    else:
        instances = generate_synthetic(
            max(1, args.count // 5), args.n_answers, args.q_len, args.a_len, args.seed + 1000
        )
    acc = evaluate(model, instances, args.scheme)
    return {"instances": len(instances), "scheme": args.scheme, "accuracy": acc}


def _cmd_bench(args) -> dict:
    cfg = _run_config(args)
    budget = args.budget if args.budget is not None else cfg.memory_budget_bytes
    vocab = synthetic_vocab()
    instance = generate_synthetic(1, args.n_answers, args.q_len, args.a_len, args.seed)[0]
    enc = _encoder_config(cfg, vocab.size)
    model_1anp = MCQAModel(enc, scheme=Scheme.ONE_A_N_P, pooling="max", gate=False, seed=args.seed)
    model_na1p = MCQAModel(enc, scheme=Scheme.N_A_1_P, pooling="max", gate=True, seed=args.seed)
    base, other = run_benchmark(
        model_1anp, model_na1p, instance, args.count, budget, args.reps, args.workers
    )
    return {
        "memory_budget_bytes": budget,
        "num_instances": args.count,
        "reports": [base.to_dict(), other.to_dict()],
        "token_ratio": {
            "na1p_tokens": other.tokens_per_instance,
            "1anp_tokens": base.tokens_per_instance,
            "value": other.tokens_per_instance / base.tokens_per_instance,
        },
    }


def _cmd_pilot(args) -> dict:
    cfg = _run_config(args)
    k_max = args.k_max if args.k_max is not None else args.n_answers - 1
    if args.ckpt:
        model, _ = load_checkpoint(args.ckpt)
        _, dev_set, _ = _datasets(args)
        trained = None
    else:
        train_set, dev_set, vocab = _datasets(args)
        model = _build_model(args, cfg, vocab.size)
        tc = TrainConfig(cfg.lr_encoder, cfg.lr_head, cfg.epochs, cfg.batch_size, args.seed)
        trained = train(model, train_set, dev_set, tc).to_dict()
    curve = pilot_append_experiment(dev_set, model, k_max, args.seed)
    return {"k_max": k_max, "curve": curve.to_dict(), "training": trained}


def _cmd_gradcheck(args) -> dict:
    cfg = _run_config(args)
    vocab = synthetic_vocab()
    model = _build_model(args, cfg, vocab.size)
    last_error = None
    for attempt in range(GRADCHECK_ATTEMPTS):
        instance = generate_synthetic(
            1, args.n_answers, args.q_len, args.a_len, args.seed + attempt
        )[0]
        try:
            result = grad_check(model, instance, args.epsilon, args.samples, args.seed)
        except GradCheckTieError as exc:
            last_error = exc
            continue
        return {
            "epsilon": args.epsilon,
            "attempts": attempt + 1,
            "result": result.to_dict(),
            "passed": result.max_rel_error < 1e-4,
        }
    raise GradCheckTieError(
        f"no tie-free instance found in {GRADCHECK_ATTEMPTS} attempts: {last_error}"
    )


def _cmd_cost(args) -> dict:
    cfg = _run_config(args)
    enc = _encoder_config(cfg, synthetic_vocab().size)
    answer_lens = [args.a_len] * args.n_answers
    return {
        "q_len": args.q_len,
        "answer_lens": answer_lens,
        "schemes": {
            s.value: estimate_cost(args.q_len, answer_lens, s, enc).to_dict()
            for s in Scheme
        },
    }


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "pilot": _cmd_pilot,
    "gradcheck": _cmd_gradcheck,
    "cost": _cmd_cost,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        body = _COMMANDS[args.command](args)
    except (McqaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = {
        "command": args.command,
        "config": _run_config(args).to_dict(),
        **body,
        "environment": _environment(),
    }
    _emit(report, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
