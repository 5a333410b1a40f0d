"""Multiple-choice QA encoding engine.

Three ways to pair a question with its candidate answers (one pass per
candidate, one pass per candidate over an answer-augmented question, or a
single pass over everything), span pooling operators, a gated inter-answer
interaction mechanism, and the training, verification, and benchmark
harnesses around them.
"""

from .bench import (
    BenchReport,
    CostEstimate,
    PilotCurve,
    activation_bytes,
    estimate_cost,
    find_max_batch,
    pilot_append_experiment,
    run_benchmark,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config_text
from .data import (
    QAInstance,
    Vocab,
    generate_synthetic,
    load_dataset,
    save_dataset,
    synthetic_vocab,
    tokenize,
)
from .encoder import EncoderConfig, LayerStates, TransformerEncoder
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DatasetParseError,
    EvaluationError,
    GradCheckTieError,
    McqaError,
    SequenceLengthError,
    ShapeError,
    TrainingDivergedError,
    ValidationError,
)
from .gate import AnswerGate, AnswerReps, pool_answers
from .layout import (
    Span,
    SpanMap,
    TokenSequence,
    layout_1anp,
    layout_na1p,
    layout_nanp,
    length_1anp,
    length_na1p,
    length_nanp,
    pad_batch,
)
from .model import MCQAModel, Scheme, forward_scores, loss, select
from .pooling import Pooler, PoolingKind
from .training import (
    GradCheckResult,
    TrainConfig,
    TrainResult,
    evaluate,
    grad_check,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerGate",
    "AnswerReps",
    "BenchReport",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "CostEstimate",
    "DatasetParseError",
    "EncoderConfig",
    "EvaluationError",
    "GradCheckResult",
    "GradCheckTieError",
    "LayerStates",
    "MCQAModel",
    "McqaError",
    "PilotCurve",
    "Pooler",
    "PoolingKind",
    "QAInstance",
    "RunConfig",
    "Scheme",
    "SequenceLengthError",
    "ShapeError",
    "Span",
    "SpanMap",
    "TokenSequence",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "TransformerEncoder",
    "ValidationError",
    "Vocab",
    "activation_bytes",
    "estimate_cost",
    "evaluate",
    "find_max_batch",
    "forward_scores",
    "generate_synthetic",
    "grad_check",
    "layout_1anp",
    "layout_na1p",
    "layout_nanp",
    "length_1anp",
    "length_na1p",
    "length_nanp",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "loss",
    "pad_batch",
    "parse_config_text",
    "pilot_append_experiment",
    "pool_answers",
    "run_benchmark",
    "save_checkpoint",
    "save_dataset",
    "select",
    "synthetic_vocab",
    "tokenize",
    "train",
]
