import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pgswitch.analysis import (ZeroVarianceError, correlation_contributions, ngram_novelty,
                               normalized_entropy, pearson_r, pgen_mass_report, split_correlations,
                               token_category)
from pgswitch.decode import DecodeConfig, DecodeTrace, TokenStep


def fake_trace(tokens, pgens, hg=None, hc=None, doc="d", source=()):
    n = len(tokens)
    hg = hg if hg is not None else [0.5] * n
    hc = hc if hc is not None else [0.5] * n
    steps = [TokenStep(i, t, 0, "vocab", p, p, g, c, [], 1, 0.0) for i, (t, p, g, c)
             in enumerate(zip(tokens, pgens, hg, hc))]
    return DecodeTrace(doc, DecodeConfig(), list(source), steps, " ".join(tokens))


def pearson_direct(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return num / math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))


class TestNormalizedEntropy:
    def test_examples(self):
        assert normalized_entropy(np.full(7, 1 / 7), 7) == pytest.approx(1.0, abs=1e-15)
        assert normalized_entropy([0, 1, 0], 3) == 0.0
        assert normalized_entropy([0.5, 0.5, 0, 0], 4) == 0.5

    def test_errors(self):
        with pytest.raises(ValueError):
            normalized_entropy([1.0], 1)
        with pytest.raises(ValueError):
            normalized_entropy([0.5, 0.6], 2)

    @given(arrays(np.float64, st.integers(2, 30), elements=st.floats(0, 1)))
    @settings(max_examples=200)
    def test_bounded(self, w):
        if w.sum() <= 0:
            return
        p = w / w.sum()
        h = normalized_entropy(p, len(p))
        assert 0.0 <= h <= 1.0


class TestPearson:
    def test_examples(self):
        x = np.arange(10.0)
        assert pearson_r(x, x) == pytest.approx(1.0, abs=1e-15)
        assert pearson_r(x, -2 * x + 3) == pytest.approx(-1.0, abs=1e-15)
        assert pearson_r([0, 1, 2], [0, 1, 4]) == pytest.approx(pearson_direct([0, 1, 2], [0, 1, 4]), abs=1e-12)

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            pearson_r([1, 2, 3], [5, 5, 5])
        with pytest.raises(ZeroVarianceError):
            correlation_contributions([1, 2, 3], [5, 5, 5])

    def test_cc_two_points(self):
        np.testing.assert_allclose(correlation_contributions([0, 1], [0, 1]), [1.0, 1.0])

    def test_cc_mean_equals_r(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(3, 1001))
            x, y = rng.normal(size=n), rng.normal(size=n) + rng.uniform(-1, 1) * np.arange(n) / n
            assert abs(correlation_contributions(x, y).mean() - pearson_r(x, y)) < 1e-12

    @given(st.floats(0.01, 100), st.floats(-100, 100), st.floats(0.01, 100))
    @settings(max_examples=100)
    def test_affine_invariance(self, a, b, s):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=50), rng.normal(size=50)
        r = pearson_r(x, y)
        assert pearson_r(a * x + b, y) == pytest.approx(r, abs=1e-12)
        assert pearson_r(x, -s * y) == pytest.approx(-r, abs=1e-12)


class TestSplitCorrelations:
    def test_pooled_vs_per_summary(self):
        t1 = fake_trace(["a", "b", "c"], [0.1, 0.5, 0.9], hg=[0.9, 0.5, 0.2], hc=[0.1, 0.2, 0.4])
        t2 = fake_trace(["d", "e"], [0.3, 0.2], hg=[0.1, 0.4], hc=[0.3, 0.9])
        pooled = split_correlations([t1, t2])
        assert pooled["r_gen"] == pytest.approx(pearson_direct([0.1, 0.5, 0.9, 0.3, 0.2], [0.9, 0.5, 0.2, 0.1, 0.4]))
        per = split_correlations([t1, t2], "per-summary")
        assert per["r_gen"] == pytest.approx((pearson_r([0.1, 0.5, 0.9], [0.9, 0.5, 0.2]) + pearson_r([0.3, 0.2], [0.1, 0.4])) / 2)
        with pytest.raises(ValueError):
            split_correlations([t1], "median")


class TestMassReport:
    def test_only_periods_generate(self):
        t = fake_trace(["a", "b", ".", "c", "."], [0, 0, 1, 0, 1])
        rep = pgen_mass_report([t])
        assert rep.mass_share["sentence-final"] == 1.0
        assert rep.exceed_share["sentence-final"] == 1.0

    def test_uniform_pgen_mass_equals_count(self):
        t = fake_trace(["a", ",", ".", "b", "c", "[STOP]"], [0.3] * 6)
        rep = pgen_mass_report([t])
        for c in rep.categories:
            assert rep.mass_share[c] == pytest.approx(rep.count_share[c], abs=1e-12)
        assert sum(rep.mass_share.values()) == pytest.approx(1.0, abs=1e-12)
        assert sum(rep.count_share.values()) == pytest.approx(1.0, abs=1e-12)

    def test_explicit_categories_and_errors(self):
        t = fake_trace(["a", "b"], [0.2, 0.6])
        rep = pgen_mass_report([t], [["NN", "VB"]])
        assert rep.mass_share == pytest.approx({"NN": 0.25, "VB": 0.75})
        with pytest.raises(ValueError):
            pgen_mass_report([t], [["NN"]])
        with pytest.raises(ValueError):
            pgen_mass_report([])

    def test_categories(self):
        assert token_category(".") == "sentence-final"
        assert token_category("[STOP]") == "sentence-final"
        assert token_category(",") == "punct"
        assert token_category("dog") == "word"


class TestNovelty:
    def test_examples(self):
        art = "the cat sat on the mat .".split()
        assert ngram_novelty([art], [art], 5) == 1.0
        assert ngram_novelty([["x"] * 4 + ["."]], [art], 5) == 0.0
        assert math.isnan(ngram_novelty([["short", "."]], [art], 5))
        assert ngram_novelty([art], [art], 3, filter=None) == 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            ngram_novelty([["a"]], [], 5)
        with pytest.raises(ValueError):
            ngram_novelty([["a"]], [["a"]], 0)
