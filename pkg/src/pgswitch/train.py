"""Synthetic corpora and toy-scale training.

Two task families stand in for an extractive-biased and an
abstractive-biased dataset:

* ``copy``: the target is a prefix of the source.
* ``substitution``: the target is that prefix mapped through a fixed
  permutation of the content vocabulary, so mapped target tokens never
  occur in their own source.

The prefix is either a window of random length (``target_rule="window"``)
or the first sentence, up to and including its period
(``target_rule="sentence"``; sources are then runs of period-terminated
sentences).

In both, a held-out slice of tokens is kept out of the model vocabulary and
passes through unchanged, so it can only be produced by copying.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .backprop import loss_and_grads
from .model import ModelConfig, ModelParams
from .rng import stream
from .vocab import RESERVED, Vocabulary

log = logging.getLogger(__name__)

Example = tuple[list[str], list[str]]
PERIOD = "."


@dataclass(frozen=True)
class SyntheticTaskSpec:
    kind: str = "copy"                 # "copy" | "substitution"
    vocab_size: int = 60               # model vocabulary, reserved ids included
    n_heldout: int = 8                 # tokens outside the model vocabulary
    heldout_rate: float = 0.1
    src_len: tuple[int, int] = (8, 12)
    window: tuple[int, int] = (3, 6)   # target length range (clipped to source)
    target_rule: str = "sentence"      # "sentence" | "window"
    sent_len: tuple[int, int] = (3, 6) # words per sentence, period excluded
    bijection_seed: int = 1234
    size: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("copy", "substitution"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.vocab_size - len(RESERVED) - 1 < 2:
            raise ValueError("vocabulary too small for a substitution bijection")
        if self.src_len[0] < 1 or self.src_len[0] > self.src_len[1]:
            raise ValueError("bad source length range")
        if self.window[0] < 1 or self.window[0] > self.window[1]:
            raise ValueError("bad target window range")
        if self.target_rule not in ("sentence", "window"):
            raise ValueError(f"unknown target rule {self.target_rule!r}")
        if self.sent_len[0] < 1 or self.sent_len[0] > self.sent_len[1]:
            raise ValueError("bad sentence length range")
        if not 0.0 <= self.heldout_rate <= 1.0:
            raise ValueError("heldout_rate must be in [0, 1]")

    @property
    def content_tokens(self) -> list[str]:
        """Words subject to the bijection (the period is not one of them)."""
        return [f"w{i:02d}" for i in range(self.vocab_size - len(RESERVED) - 1)]

    @property
    def heldout_tokens(self) -> list[str]:
        return [f"x{i:02d}" for i in range(self.n_heldout)]

    def vocabulary(self) -> Vocabulary:
        return Vocabulary([PERIOD] + self.content_tokens)

    def bijection(self) -> dict[str, str]:
        """Permutation swapping two halves of the content vocabulary."""
        content = self.content_tokens
        half = len(content) // 2
        rng = np.random.default_rng(self.bijection_seed)
        order = [content[i] for i in rng.permutation(len(content))]
        a, b = order[:half], order[half:2 * half]
        mapping = {s: t for s, t in zip(a, b)}
        mapping.update({t: s for s, t in zip(a, b)})
        for tok in order[2 * half:]:   # odd leftover maps to itself
            mapping[tok] = tok
        return mapping

    def source_alphabet(self) -> list[str]:
        if self.kind == "copy":
            return self.content_tokens
        mapping = self.bijection()
        content = self.content_tokens
        rng = np.random.default_rng(self.bijection_seed)
        order = [content[i] for i in rng.permutation(len(content))]
        return [t for t in order[: len(content) // 2] if mapping[t] != t]


def make_synthetic_corpus(spec: SyntheticTaskSpec) -> list[Example]:
    rng = stream(spec.seed, f"data/{spec.kind}")
    alphabet = spec.source_alphabet()
    held = spec.heldout_tokens
    mapping = spec.bijection() if spec.kind == "substitution" else None
    corpus = []

    def word():
        if held and rng.random() < spec.heldout_rate:
            return held[int(rng.integers(len(held)))]
        return alphabet[int(rng.integers(len(alphabet)))]

    for _ in range(spec.size):
        n = int(rng.integers(spec.src_len[0], spec.src_len[1] + 1))
        if spec.target_rule == "window":
            src = [word() for _ in range(n)]
            k = min(n, int(rng.integers(spec.window[0], spec.window[1] + 1)))
        else:
            src, k = [], 0
            while len(src) < n:
                m = int(rng.integers(spec.sent_len[0], spec.sent_len[1] + 1))
                src.extend(word() for _ in range(m))
                src.append(PERIOD)
                k = k or len(src)
        corpus.append((src, target_for(src, k, mapping)))
    return corpus


def target_for(src: Sequence[str], window: int, mapping: dict[str, str] | None = None) -> list[str]:
    head = list(src[:window])
    if mapping is None:
        return head
    return [mapping.get(t, t) for t in head]


def write_corpus(corpus: Sequence[Example], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgt in corpus:
            fh.write(" ".join(src) + "\t" + " ".join(tgt) + "\n")


def read_corpus(path) -> list[Example]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected source<TAB>target")
            src, tgt = parts[0].split(), parts[1].split()
            if not src:
                raise ValueError(f"{path}:{lineno}: empty source")
            out.append((src, tgt))
    return out


def nll_loss(distributions, targets) -> float:
    """Mean negative log-likelihood (nats) of ``targets``.

    ``distributions`` holds ExtendedDistribution objects or probability
    arrays; ``targets`` holds tokens (for the former) or integer indices.
    """
    if len(distributions) != len(targets):
        raise ValueError(f"{len(distributions)} distributions for {len(targets)} targets")
    if not targets:
        raise ValueError("empty target sequence")
    total = 0.0
    for step, (dist, y) in enumerate(zip(distributions, targets)):
        p = dist.prob(y) if hasattr(dist, "prob") and isinstance(y, str) else float(np.asarray(getattr(dist, "probs", dist))[y])
        if p <= 0.0:
            raise ValueError(f"target {y!r} has zero probability at step {step}")
        total -= math.log(p)
    return total / len(targets)


@dataclass
class TrainConfig:
    emb_dim: int = 16
    hid_dim: int = 32
    attn_dim: int | None = None        # defaults to hid_dim
    learning_rate: float = 1.0
    optimizer: str = "sgd"             # "sgd" | "adagrad"
    adagrad_init: float = 0.1
    batch_size: int = 8
    steps: int = 2000
    clip_norm: float = 2.0
    coverage: bool = False
    cov_loss_weight: float = 0.0
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.emb_dim, self.hid_dim, self.batch_size, self.steps) <= 0:
            raise ValueError("dimensions, batch size and steps must be positive")
        if self.optimizer not in ("sgd", "adagrad"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.cov_loss_weight and not self.coverage:
            raise ValueError("coverage loss requires coverage")

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size, self.emb_dim, self.hid_dim,
                           self.attn_dim or self.hid_dim, self.coverage)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    params: ModelParams
    loss_history: list[float] = field(default_factory=list)
    config: TrainConfig | None = None
    seconds: float = 0.0


def batch_loss_and_grads(params, batch: Sequence[Example], cov_loss_weight=0.0):
    total, grads = 0.0, None
    for src, tgt in batch:
        loss, g = loss_and_grads(params, src, tgt, cov_loss_weight)
        total += loss
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    n = len(batch)
    for k in grads:
        grads[k] /= n
    return total / n, grads


def train_model(corpus: Sequence[Example], config: TrainConfig, vocab: Vocabulary,
                params: ModelParams | None = None, progress: int = 0) -> TrainResult:
    """Minibatch training with global-norm clipping.

    Batch order comes from the ``train/order`` stream and initialisation
    from ``train/init``; identical inputs give identical parameters.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if params is None:
        params = ModelParams.initialize(config.model_config(len(vocab)), vocab,
                                        stream(config.seed, "train/init"), config.init_scale)
    else:
        params = params.copy()
    order_rng = stream(config.seed, "train/order")
    acc = {k: np.full_like(v, config.adagrad_init) for k, v in params.tensors.items()}
    history: list[float] = []
    perm = order_rng.permutation(len(corpus))
    pos = 0
    t0 = time.perf_counter()
    for step in range(config.steps):
        idx = []
        while len(idx) < config.batch_size:
            if pos == len(perm):
                perm, pos = order_rng.permutation(len(corpus)), 0
            idx.append(perm[pos])
            pos += 1
        batch = [corpus[i] for i in idx]
        loss, grads = batch_loss_and_grads(params, batch, config.cov_loss_weight)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at step {step} (last {history[-3:]})")
        history.append(loss)
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if not math.isfinite(norm):
            raise TrainingDiverged(f"non-finite gradient norm at step {step}")
        scale = config.clip_norm / norm if config.clip_norm and norm > config.clip_norm else 1.0
        for k, g in grads.items():
            g = g * scale
            if config.optimizer == "adagrad":
                acc[k] += g * g
                params.tensors[k] -= config.learning_rate * g / np.sqrt(acc[k])
            else:
                params.tensors[k] -= config.learning_rate * g
        if progress and (step + 1) % progress == 0:
            log.info("step %d loss %.4f", step + 1, float(np.mean(history[-progress:])))
    return TrainResult(params, history, config, time.perf_counter() - t0)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
