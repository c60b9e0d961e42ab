import itertools

import numpy as np
import pytest

from pgswitch.analysis import normalized_entropy
from pgswitch.kn import KnTrigramModel, lm_entropy_series, train_kn_trigram

D = 0.75


def brute_force_kn(sentences):
    """Interpolated Kneser-Ney evaluated straight from the padded token stream."""
    streams = [["<s>", "<s>"] + s + ["</s>"] for s in sentences]
    tri = [tuple(x[i:i + 3]) for x in streams for i in range(len(x) - 2)]
    big = {tuple(x[i:i + 2]) for x in streams for i in range(1, len(x) - 1)}
    vocab = ["<unk>", "</s>"] + sorted({w for s in sentences for w in s})
    n_big = len(big)

    def p1(w):
        cont = len({v for (v, x) in big if x == w})
        seen = len({x for (_, x) in big})
        return max(cont - D, 0) / n_big + D * seen / n_big / len(vocab)

    def p2(w, v):
        middle = {(u, x) for (u, vv, x) in tri if vv == v}
        total = len(middle)
        if total == 0:
            return p1(w)
        cont = len({u for (u, x) in middle if x == w})
        types = len({x for (_, x) in middle})
        return max(cont - D, 0) / total + D * types / total * p1(w)

    def p3(w, u, v):
        ctx = [t for t in tri if t[0] == u and t[1] == v]
        if not ctx:
            return p2(w, v)
        c = sum(1 for t in ctx if t[2] == w)
        types = len({t[2] for t in ctx})
        return max(c - D, 0) / len(ctx) + D * types / len(ctx) * p2(w, v)

    return vocab, p3, tri


def toy_corpus(seed, n_tokens):
    rng = np.random.default_rng(seed)
    words = [f"t{i}" for i in range(12)]
    sents, total = [], 0
    while total < n_tokens:
        k = int(rng.integers(3, 9))
        # skewed draws so some trigrams repeat
        s = [words[min(int(rng.exponential(3)), 11)] for _ in range(k)]
        sents.append(s)
        total += k
    return sents


class TestKneserNey:
    @pytest.mark.parametrize("seed,n", [(0, 100), (1, 150), (2, 200)])
    def test_matches_brute_force(self, seed, n):
        sents = toy_corpus(seed, n)
        m = train_kn_trigram(sents)
        vocab, p3, tri = brute_force_kn(sents)
        assert m.vocab == vocab
        contexts = {(u, v) for u, v, _ in tri} | {("t0", "t11"), ("t5", "t5"), ("zz", "t1")}
        for u, v in contexts:
            dist = m.distribution(u, v)
            ref = [p3(w, u if u in vocab or u == "<s>" else "<unk>", v if v in vocab or v == "<s>" else "<unk>")
                   for w in vocab]
            np.testing.assert_allclose(dist, ref, atol=1e-10, rtol=0)
            assert abs(dist.sum() - 1.0) < 1e-9

    def test_all_contexts_normalized_and_positive(self):
        m = train_kn_trigram(toy_corpus(3, 150))
        for u, v in itertools.product(["<s>"] + m.vocab[:6], m.vocab[:6]):
            d = m.distribution(u, v)
            assert abs(d.sum() - 1.0) < 1e-9 and np.all(d > 0)

    def test_backoff_positive(self):
        m = train_kn_trigram([["a", "b", "c"], ["b", "c", "a"]])
        assert m.trigrams[("a", "b", "a")] == 0
        assert m.prob("a", "a", "b") > 0

    def test_errors(self):
        with pytest.raises(ValueError):
            train_kn_trigram([])
        with pytest.raises(ValueError):
            train_kn_trigram(["a", "b"])
        with pytest.raises(ValueError):
            KnTrigramModel(discount=1.5)

    def test_flat_token_list_is_one_sentence(self):
        a = train_kn_trigram(["a", "b", "c", "a"])
        b = train_kn_trigram([["a", "b", "c", "a"]])
        np.testing.assert_array_equal(a.distribution("a", "b"), b.distribution("a", "b"))


class UniformModel:
    def __init__(self, n):
        self.n = n

    def __len__(self):
        return self.n

    def next_distribution(self, history):
        return np.full(self.n, 1.0 / self.n)


class DeterministicModel(UniformModel):
    def next_distribution(self, history):
        p = np.zeros(self.n)
        p[len(history) % self.n] = 1.0
        return p


class TestEntropySeries:
    def test_uniform_and_deterministic(self):
        np.testing.assert_allclose(lm_entropy_series(UniformModel(9), ["a"] * 5), 1.0, atol=1e-15)
        np.testing.assert_array_equal(lm_entropy_series(DeterministicModel(9), ["a"] * 5), 0.0)

    def test_matches_oracle(self):
        sents = toy_corpus(4, 120)
        m = train_kn_trigram(sents)
        vocab, p3, _ = brute_force_kn(sents)
        toks = ["t1", "t0", "t3", "t0", "qq"]
        hist = ["<s>", "<s>"] + [t if t in vocab else "<unk>" for t in toks]
        ref = [normalized_entropy([p3(w, hist[i], hist[i + 1]) for w in vocab], len(vocab)) for i in range(len(toks))]
        np.testing.assert_allclose(lm_entropy_series(m, toks), ref, atol=1e-10)

    def test_empty(self):
        with pytest.raises(ValueError):
            lm_entropy_series(UniformModel(3), [])
