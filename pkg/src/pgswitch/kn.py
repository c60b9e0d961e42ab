"""Interpolated Kneser-Ney trigram language model.

    P3(w|u,v) = max(c(uvw) - D, 0) / c(uv.) + D N1+(uv.) / c(uv.) * P2(w|v)
    P2(w|v)   = max(N1+(.vw) - D, 0) / N1+(.v.) + D N1+(v.)' / N1+(.v.) * P1(w)
    P1(w)     = max(N1+(.w) - D, 0) / N1+(..) + D N1+(.)' / N1+(..) / |V|

where N1+(v.)' and N1+(.)' count word types with a nonzero continuation
count. Unseen contexts fall through to the next lower order, and the
uniform floor keeps every probability positive.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable, Sequence

import numpy as np

from .analysis import normalized_entropy

BOS, EOS, LM_UNK = "<s>", "</s>", "<unk>"


def _sentences(corpus) -> list[list[str]]:
    corpus = list(corpus)
    if corpus and isinstance(corpus[0], str):
        return [corpus]
    return [list(s) for s in corpus]


class KnTrigramModel:
    def __init__(self, discount: float = 0.75):
        if not 0.0 < discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        self.discount = discount
        self.trigrams: Counter = Counter()
        self.context_counts: Counter = Counter()          # c(uv.)
        self.context_types: Counter = Counter()           # N1+(uv.)
        self.bigram_continuation: Counter = Counter()     # N1+(.vw)
        self.middle_totals: Counter = Counter()           # N1+(.v.)
        self.middle_types: Counter = Counter()            # types w with N1+(.vw) > 0
        self.unigram_continuation: Counter = Counter()    # N1+(.w)
        self.bigram_types = 0                              # N1+(..)
        self.vocab: list[str] = []
        self.index: dict[str, int] = {}
        self._p1: np.ndarray | None = None
        self._p2: dict[str, np.ndarray] = {}

    @classmethod
    def train(cls, corpus: Iterable, discount: float = 0.75) -> "KnTrigramModel":
        """``corpus`` is one token list or a list of sentences."""
        sents = _sentences(corpus)
        n_tokens = sum(len(s) for s in sents)
        if n_tokens == 0:
            raise ValueError("empty corpus")
        if n_tokens < 3:
            raise ValueError("need at least 3 tokens")
        m = cls(discount)
        bigrams = set()
        for s in sents:
            padded = [BOS, BOS] + list(s) + [EOS]
            for u, v, w in zip(padded, padded[1:], padded[2:]):
                m.trigrams[(u, v, w)] += 1
            for v, w in zip(padded[1:], padded[2:]):
                bigrams.add((v, w))
        for (u, v, w), c in m.trigrams.items():
            m.context_counts[(u, v)] += c
            m.context_types[(u, v)] += 1
            m.bigram_continuation[(v, w)] += 1
        for (v, w), n in m.bigram_continuation.items():
            m.middle_totals[v] += n
            m.middle_types[v] += 1
        for v, w in bigrams:
            m.unigram_continuation[w] += 1
        m.bigram_types = len(bigrams)
        words = sorted({w for s in sents for w in s} - {BOS, EOS, LM_UNK})
        m.vocab = [LM_UNK, EOS] + words
        m.index = {w: i for i, w in enumerate(m.vocab)}
        return m

    def __len__(self):
        return len(self.vocab)

    def _norm(self, w: str) -> str:
        return w if w in self.index or w == BOS else LM_UNK

    def unigram(self) -> np.ndarray:
        if self._p1 is None:
            D, N = self.discount, self.bigram_types
            cont = np.array([self.unigram_continuation.get(w, 0) for w in self.vocab], dtype=np.float64)
            seen = np.count_nonzero(cont)
            self._p1 = np.maximum(cont - D, 0.0) / N + D * seen / N / len(self.vocab)
        return self._p1

    def bigram(self, v: str) -> np.ndarray:
        v = self._norm(v)
        if v in self._p2:
            return self._p2[v]
        p1 = self.unigram()
        total = self.middle_totals.get(v, 0)
        if total == 0:
            dist = p1
        else:
            D = self.discount
            cont = np.array([self.bigram_continuation.get((v, w), 0) for w in self.vocab], dtype=np.float64)
            dist = np.maximum(cont - D, 0.0) / total + D * self.middle_types[v] / total * p1
        self._p2[v] = dist
        return dist

    def distribution(self, u: str, v: str) -> np.ndarray:
        """P(. | u, v) over ``self.vocab``."""
        u, v = self._norm(u), self._norm(v)
        p2 = self.bigram(v)
        total = self.context_counts.get((u, v), 0)
        if total == 0:
            return p2
        D = self.discount
        counts = np.array([self.trigrams.get((u, v, w), 0) for w in self.vocab], dtype=np.float64)
        return np.maximum(counts - D, 0.0) / total + D * self.context_types[(u, v)] / total * p2

    def prob(self, w: str, u: str, v: str) -> float:
        return float(self.distribution(u, v)[self.index[self._norm(w)]])

    def next_distribution(self, history: Sequence[str]) -> np.ndarray:
        h = [BOS, BOS] + list(history)
        return self.distribution(h[-2], h[-1])


def train_kn_trigram(corpus, discount: float = 0.75) -> KnTrigramModel:
    return KnTrigramModel.train(corpus, discount)


def lm_entropy_series(model, tokens: Sequence[str]) -> np.ndarray:
    """Normalized entropy of the next-token distribution before each token.

    ``model`` needs ``next_distribution(history)`` and ``len(model)``.
    """
    if len(tokens) == 0:
        raise ValueError("empty token sequence")
    n = len(model)
    return np.array([normalized_entropy(model.next_distribution(tokens[:i]), n)
                     for i in range(len(tokens))])
