"""Entropy, correlation and descriptive statistics over decode traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

SENTENCE_FINAL = frozenset({".", "!", "?"})
STOP_TOKEN = "[STOP]"


class ZeroVarianceError(ValueError):
    pass


def normalized_entropy(dist, support_size: int) -> float:
    """Shannon entropy in bits divided by log2(support_size)."""
    if support_size < 2:
        raise ValueError("support size must be at least 2")
    p = np.asarray(dist, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("negative probability")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"distribution not normalized (sum {p.sum():.9g})")
    nz = p[p > 0]
    if nz.size > support_size:
        raise ValueError("more nonzero entries than the declared support size")
    h = float(-(nz * np.log2(nz)).sum()) / math.log2(support_size)
    return min(1.0, max(0.0, h))


def _centered(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("series must be 1-d and of equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("series contain non-finite values")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("a series has zero variance; correlation undefined")
    return dx, dy, math.sqrt(sxx * syy)


def pearson_r(x, y) -> float:
    dx, dy, denom = _centered(x, y)
    return float(dx @ dy) / denom


def correlation_contributions(x, y) -> np.ndarray:
    """Per-index contributions whose mean is the Pearson correlation."""
    dx, dy, denom = _centered(x, y)
    return dx.size * dx * dy / denom


def split_correlations(traces, mode: str = "pooled") -> dict[str, float]:
    """r(p_gen, H_gen) and r(p_gen, H_copy) over a collection of traces.

    ``pooled`` concatenates all tokens; ``per-summary`` averages the
    per-trace coefficients, skipping traces where r is undefined.
    """
    if mode == "pooled":
        p, hg, hc = _columns(traces)
        return {"r_gen": pearson_r(p, hg), "r_copy": pearson_r(p, hc), "n_tokens": len(p)}
    if mode == "per-summary":
        rg, rc = [], []
        for tr in traces:
            p, hg, hc = _columns([tr])
            try:
                rg.append(pearson_r(p, hg))
                rc.append(pearson_r(p, hc))
            except ValueError:
                continue
        if not rg:
            raise ZeroVarianceError("no trace has a defined correlation")
        return {"r_gen": float(np.mean(rg)), "r_copy": float(np.mean(rc)), "n_summaries": len(rg)}
    raise ValueError(f"unknown mode {mode!r}")


def _columns(traces):
    p, hg, hc = [], [], []
    for tr in traces:
        for st in tr.steps:
            p.append(st.p_gen)
            hg.append(st.h_gen)
            hc.append(st.h_copy)
    return np.asarray(p), np.asarray(hg), np.asarray(hc)


def mean_pgen(traces) -> float:
    p, _, _ = _columns(traces)
    if p.size == 0:
        raise ValueError("no traced tokens")
    return float(p.mean())


def token_category(token: str) -> str:
    """Built-in classifier used when no POS tags are available."""
    if token in SENTENCE_FINAL or token == STOP_TOKEN:
        return "sentence-final"
    if token and all(not ch.isalnum() for ch in token):
        return "punct"
    return "word"


@dataclass
class MassReport:
    categories: list[str]
    count_share: dict[str, float]
    mass_share: dict[str, float]
    mean_pgen: dict[str, float]
    threshold: float
    exceed_share: dict[str, float]
    n_tokens: int
    n_exceed: int
    total_mass: float = field(default=0.0)

    def rows(self):
        for c in self.categories:
            yield {
                "category": c,
                "count_share": self.count_share[c],
                "mass_share": self.mass_share[c],
                "mean_pgen": self.mean_pgen[c],
                f"share_of_pgen_gt_{self.threshold:g}": self.exceed_share[c],
            }


def pgen_mass_report(traces, token_categories: Callable[[str], str] | Sequence[Sequence[str]] | None = None,
                     threshold: float = 0.95) -> MassReport:
    """Share of tokens and of total p_gen mass per token category.

    ``token_categories`` is a token classifier, or one category list per
    trace aligned with its steps. Defaults to ``token_category``.
    """
    cats: list[str] = []
    pg: list[float] = []
    for k, tr in enumerate(traces):
        if token_categories is None or callable(token_categories):
            fn = token_categories or token_category
            labels = [fn(st.token) for st in tr.steps]
        else:
            labels = list(token_categories[k])
            if len(labels) != len(tr.steps):
                raise ValueError(f"trace {k}: {len(labels)} categories for {len(tr.steps)} tokens")
        cats.extend(labels)
        pg.extend(st.p_gen for st in tr.steps)
    if not pg:
        raise ValueError("no traced tokens")
    p = np.asarray(pg)
    labels = np.asarray(cats)
    order = sorted(set(cats))
    total = float(p.sum())
    exceed = p > threshold
    n_exceed = int(exceed.sum())
    count_share, mass_share, means, exceed_share = {}, {}, {}, {}
    for c in order:
        m = labels == c
        count_share[c] = float(m.sum()) / p.size
        mass_share[c] = float(p[m].sum()) / total if total > 0 else float(m.sum()) / p.size
        means[c] = float(p[m].mean())
        exceed_share[c] = float((m & exceed).sum()) / n_exceed if n_exceed else 0.0
    return MassReport(order, count_share, mass_share, means, threshold, exceed_share,
                      int(p.size), n_exceed, total)


def ends_sentence(ngram: Sequence[str]) -> bool:
    return ngram[-1] in SENTENCE_FINAL


def _ngrams(tokens: Sequence[str], n: int) -> Iterable[tuple[str, ...]]:
    return (tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_novelty(summaries: Sequence[Sequence[str]], articles: Sequence[Sequence[str]],
                  n: int = 5, filter: Callable[[Sequence[str]], bool] | None = ends_sentence) -> float:
    """Fraction of qualifying summary n-grams found verbatim in the article.

    Returns NaN when no summary n-gram qualifies.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if len(summaries) != len(articles):
        raise ValueError("summaries and articles must pair up")
    hit = total = 0
    for summ, art in zip(summaries, articles):
        present = set(_ngrams(list(art), n))
        for g in _ngrams(list(summ), n):
            if filter is not None and not filter(g):
                continue
            total += 1
            hit += g in present
    return hit / total if total else float("nan")
