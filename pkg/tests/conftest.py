import sys

import numpy as np
import pytest

from pgswitch.model import ModelConfig, ModelParams
from pgswitch.vocab import Vocabulary

WORDS = [f"w{i:02d}" for i in range(14)] + [".", ","]


def make_params(seed=0, coverage=False, vocab_words=WORDS, emb=8, hid=16, attn=16, scale=0.5):
    vocab = Vocabulary(vocab_words)
    cfg = ModelConfig(len(vocab), emb, hid, attn, coverage)
    return ModelParams.initialize(cfg, vocab, np.random.default_rng(seed), scale=scale)


def random_article(rng, length=12, oov_rate=0.25):
    out = []
    for _ in range(length):
        if rng.random() < oov_rate:
            out.append(f"oov{int(rng.integers(4))}")
        else:
            out.append(WORDS[int(rng.integers(len(WORDS)))])
    return out


@pytest.fixture
def params():
    return make_params()


@pytest.fixture
def cov_params():
    return make_params(coverage=True)


class TrainedTask:
    def __init__(self, kind):
        from pgswitch.decode import DecodeConfig, decode_corpus
        from pgswitch.train import SyntheticTaskSpec, TrainConfig, make_synthetic_corpus, train_model

        self.spec = SyntheticTaskSpec(kind=kind, vocab_size=60, size=2000, seed=0)
        self.corpus = make_synthetic_corpus(self.spec)
        self.test = make_synthetic_corpus(SyntheticTaskSpec(kind=kind, vocab_size=60, size=40, seed=1))
        self.config = TrainConfig(emb_dim=16, hid_dim=32, steps=2000, batch_size=8, seed=0)
        self.result = train_model(self.corpus, self.config, self.spec.vocabulary())
        self.params = self.result.params
        self.traces = decode_corpus([s for s, _ in self.test], self.params, DecodeConfig(max_len=120))


@pytest.fixture(scope="session")
def copy_task():
    return TrainedTask("copy")


@pytest.fixture(scope="session")
def substitution_task():
    return TrainedTask("substitution")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
