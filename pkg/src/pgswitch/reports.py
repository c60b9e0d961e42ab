"""CSV and standalone SVG emitters for trace analyses."""

from __future__ import annotations

import csv
import math
from html import escape
from typing import Callable, Sequence

import numpy as np

from .analysis import (ZeroVarianceError, correlation_contributions, mean_pgen, ngram_novelty,
                       pgen_mass_report, split_correlations, token_category)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _contributions(x, y) -> list[float | None]:
    try:
        return correlation_contributions(x, y).tolist()
    except ZeroVarianceError:
        return [None] * len(x)


def token_rows(traces) -> list[dict]:
    """Per-token plot data; correlation contributions are computed per summary."""
    rows = []
    for tr in traces:
        pg = [st.p_gen for st in tr.steps]
        hg = [st.h_gen for st in tr.steps]
        hc = [st.h_copy for st in tr.steps]
        cc_gen = _contributions(pg, hg) if len(pg) >= 2 else [None] * len(pg)
        cc_copy = _contributions(pg, hc) if len(pg) >= 2 else [None] * len(pg)
        for k, st in enumerate(tr.steps):
            rows.append({"doc_id": tr.doc_id, "step": st.step, "token": st.token, "p_gen": st.p_gen,
                         "h_gen": st.h_gen, "h_copy": st.h_copy,
                         "cc_gen": cc_gen[k], "cc_copy": cc_copy[k]})
    return rows


TOKEN_COLUMNS = ["doc_id", "step", "token", "p_gen", "h_gen", "h_copy", "cc_gen", "cc_copy"]


def write_token_csv(traces, path) -> int:
    rows = token_rows(traces)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TOKEN_COLUMNS)
        for r in rows:
            w.writerow([r["doc_id"], r["step"], r["token"]] + [_fmt(r[c]) for c in TOKEN_COLUMNS[3:]])
    return len(rows)


def pgen_histogram(traces, bins: int = 20,
                   categorize: Callable[[str], str] = token_category) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Counts of p_gen per equal-width bin on [0, 1], split by token category.

    The last bin is closed so p_gen = 1 lands in it.
    """
    if bins < 1:
        raise ValueError("bins must be positive")
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts: dict[str, np.ndarray] = {}
    for tr in traces:
        for st in tr.steps:
            b = min(int(st.p_gen * bins), bins - 1)
            c = categorize(st.token)
            counts.setdefault(c, np.zeros(bins, dtype=np.int64))[b] += 1
    return edges, dict(sorted(counts.items()))


def write_histogram_csv(traces, path, bins: int = 20) -> int:
    edges, counts = pgen_histogram(traces, bins)
    cats = list(counts)
    total = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi"] + cats + ["total"])
        for b in range(bins):
            row = [int(counts[c][b]) for c in cats]
            total += sum(row)
            w.writerow([repr(float(edges[b])), repr(float(edges[b + 1]))] + row + [sum(row)])
    return total


def write_mass_csv(traces, path, threshold: float = 0.95) -> None:
    rep = pgen_mass_report(traces, threshold=threshold)
    rows = list(rep.rows())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([r["category"]] + [repr(float(v)) for k, v in r.items() if k != "category"])


def summary_stats(traces) -> list[tuple[str, float | None]]:
    out: list[tuple[str, float | None]] = []
    for mode in ("pooled", "per-summary"):
        try:
            r = split_correlations(traces, mode)
            out += [(f"r_gen_{mode}", r["r_gen"]), (f"r_copy_{mode}", r["r_copy"])]
        except ZeroVarianceError:
            out += [(f"r_gen_{mode}", None), (f"r_copy_{mode}", None)]
    out.append(("mean_pgen", mean_pgen(traces)))
    out.append(("n_tokens", float(sum(len(t.steps) for t in traces))))
    out.append(("n_docs", float(len(traces))))
    summaries = [t.summary_tokens for t in traces]
    articles = [t.source for t in traces]
    out.append(("novelty_5gram_sentence_final", ngram_novelty(summaries, articles, 5)))
    out.append(("novelty_5gram_all", ngram_novelty(summaries, articles, 5, filter=None)))
    src_only = sum(st.origin == "source-only" for t in traces for st in t.steps)
    out.append(("source_only_tokens", float(src_only)))
    return out


def write_stats_csv(traces, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "value"])
        for k, v in summary_stats(traces):
            w.writerow([k, _fmt(v)])


def write_sweep_tsv(results: Sequence[tuple[float, Sequence]], path) -> None:
    """Side-by-side summaries: one row per (article, p_min), grouped by article."""
    by_pmin = [(p, {t.doc_id: t for t in trs}) for p, trs in results]
    doc_order = [t.doc_id for t in results[0][1]] if results else []
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("doc_id\tp_min\tmean_pgen\tsummary\n")
        for d in doc_order:
            for p, traces in by_pmin:
                tr = traces[d]
                m = sum(st.p_gen for st in tr.steps) / len(tr.steps) if tr.steps else float("nan")
                fh.write(f"{d}\t{p:g}\t{m:.6f}\t{tr.summary}\n")


# SVG ----------------------------------------------------------------------

PALETTE = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3"]


def svg_bar_chart(labels: Sequence[str], series: dict[str, Sequence[float]], title: str,
                  stacked: bool = False, width: int = 720, height: int = 320) -> str:
    """A self-contained SVG bar chart (grouped or stacked)."""
    n = len(labels)
    names = list(series)
    if n == 0 or not names:
        raise ValueError("nothing to plot")
    vals = np.array([[float(v) for v in series[s]] for s in names])
    if vals.shape[1] != n:
        raise ValueError("every series needs one value per label")
    left, right, top, bottom = 50, 130, 30, 60
    pw, ph = width - left - right, height - top - bottom
    if stacked:
        hi = float(np.clip(vals, 0, None).sum(axis=0).max())
        lo = 0.0
    else:
        hi, lo = float(max(vals.max(), 0.0)), float(min(vals.min(), 0.0))
    if hi == lo:
        hi = lo + 1.0
    y = lambda v: top + ph * (hi - v) / (hi - lo)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<line x1="{left}" y1="{y(0):.2f}" x2="{left + pw}" y2="{y(0):.2f}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for frac in (0.0, 0.5, 1.0):
        v = lo + frac * (hi - lo)
        out.append(f'<text x="{left - 4}" y="{y(v) + 3:.2f}" text-anchor="end">{v:.3g}</text>')
    slot = pw / n
    bw = slot * 0.8 / (1 if stacked else len(names))
    for i, lab in enumerate(labels):
        x0 = left + i * slot + slot * 0.1
        base = 0.0
        for j, s in enumerate(names):
            v = vals[j, i]
            if stacked:
                y1, y2 = y(base + v), y(base)
                x = x0
                base += v
            else:
                y1, y2 = (y(v), y(0)) if v >= 0 else (y(0), y(v))
                x = x0 + j * bw
            out.append(f'<rect x="{x:.2f}" y="{y1:.2f}" width="{bw:.2f}" height="{max(y2 - y1, 0):.2f}" '
                       f'fill="{PALETTE[j % len(PALETTE)]}"><title>{escape(str(lab))} {escape(s)}: {v:.4g}</title></rect>')
        if n <= 40 or i % max(1, n // 20) == 0:
            cx = left + (i + 0.5) * slot
            out.append(f'<text x="{cx:.2f}" y="{top + ph + 12}" text-anchor="end" '
                       f'transform="rotate(-45 {cx:.2f} {top + ph + 12})">{escape(str(lab))}</text>')
    for j, s in enumerate(names):
        ly = top + 14 * j
        out.append(f'<rect x="{width - right + 10}" y="{ly}" width="10" height="10" fill="{PALETTE[j % len(PALETTE)]}"/>')
        out.append(f'<text x="{width - right + 24}" y="{ly + 9}">{escape(s)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_token_svg(trace, path) -> None:
    """Per-token p_gen and correlation contributions for one summary."""
    rows = token_rows([trace])
    series = {"p_gen": [r["p_gen"] for r in rows],
              "CC vs H_gen": [r["cc_gen"] or 0.0 for r in rows],
              "CC vs H_copy": [r["cc_copy"] or 0.0 for r in rows]}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg_bar_chart([r["token"] for r in rows], series, f"document {trace.doc_id}"))


def write_histogram_svg(traces, path, bins: int = 20) -> None:
    edges, counts = pgen_histogram(traces, bins)
    labels = [f"{edges[b]:.2f}" for b in range(bins)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg_bar_chart(labels, {c: v.tolist() for c, v in counts.items()},
                               "p_gen histogram by token category", stacked=True))

