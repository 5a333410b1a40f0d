import pytest
import torch

import criteria
from mcqa import EncoderConfig, MCQAModel, TrainConfig, generate_synthetic, synthetic_vocab
from mcqa.training import train as run_training

torch.set_num_threads(1)  # machine-independent reductions

N_ANSWERS = 5
Q_LEN = 12
A_LEN = 3


@pytest.fixture(scope="session")
def vocab():
    return synthetic_vocab()


@pytest.fixture(scope="session")
def encoder_config(vocab):
    return EncoderConfig(vocab_size=vocab.size)


@pytest.fixture(scope="session")
def trained_cache(encoder_config):
    """Memoized training runs shared across acceptance criteria.

    Key: (scheme, gate, qa_concat, seed, n_train, epochs).  Returns the
    trained model, the training result, and the dev set used."""
    cache = {}

    def get(scheme, gate, qa_concat, seed, n_train, epochs):
        key = (scheme, gate, qa_concat, seed, n_train, epochs)
        if key not in cache:
            train_set = generate_synthetic(n_train, N_ANSWERS, Q_LEN, A_LEN, seed=seed)
            dev_set = generate_synthetic(
                max(200, n_train // 8), N_ANSWERS, Q_LEN, A_LEN, seed=seed + 1000
            )
            model = MCQAModel(
                encoder_config, scheme=scheme, pooling="max",
                gate=gate, qa_concat=qa_concat, seed=seed,
            )
            cfg = TrainConfig(lr_encoder=0.05, lr_head=0.5, epochs=epochs,
                              batch_size=32, seed=seed)
            result = run_training(model, train_set, dev_set, cfg)
            cache[key] = (model, result, dev_set)
        return cache[key]

    return get


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not criteria.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(criteria.TITLES):
        terminalreporter.write_line(criteria.format_line(num))
