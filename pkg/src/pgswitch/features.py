"""Per-token probe features for regressing p_gen.

One row per traced token. Structural features and POS tags come from
parses of the generated summaries; n-gram entropy from a Kneser-Ney
trigram model; recurrent-LM and parser entropies are read from a sidecar
CSV when available. Rows missing any selected feature are dropped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .analysis import STOP_TOKEN, token_category
from .kn import lm_entropy_series
from .trees import ParseTree, structural_features

SCALAR_FEATURES = ("h_gen", "h_copy", "h_ngram", "h_lstm", "h_parser", "d_edge", "d_root")
ALL_FEATURES = SCALAR_FEATURES + ("pos",)

FEATURE_SETS = {
    "Summ. Model Entropies": ("h_gen", "h_copy"),
    "LM Entropies": ("h_lstm", "h_parser", "h_ngram"),
    "Structural Features": ("d_edge", "d_root"),
    "Part of Speech": ("pos",),
}

STOP_POS = "[STOP]"


class AlignmentError(ValueError):
    pass


@dataclass
class FeatureMatrix:
    names: list[str]
    X: np.ndarray
    y: np.ndarray
    doc_ids: list[str]
    steps: list[int]
    tokens: list[str]
    dropped: int = 0
    pos_columns: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.y)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def feature_sets(self) -> dict[str, list[str]]:
        """Standard feature-set partition restricted to the columns present."""
        out = {}
        for set_name, members in FEATURE_SETS.items():
            cols = []
            for m in members:
                cols.extend(self.pos_columns if m == "pos" else [m] if m in self.names else [])
            if cols:
                out[set_name] = cols
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["doc_id", "step", "token", "p_gen"] + self.names)
            for k in range(len(self.y)):
                w.writerow([self.doc_ids[k], self.steps[k], self.tokens[k], repr(float(self.y[k]))]
                           + [repr(float(v)) for v in self.X[k]])

    @classmethod
    def read_csv(cls, path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header[:4] != ["doc_id", "step", "token", "p_gen"]:
                raise ValueError(f"{path}: not a feature matrix CSV")
            names = header[4:]
            docs, steps, toks, ys, rows = [], [], [], [], []
            for lineno, row in enumerate(r, 2):
                if len(row) != len(header):
                    raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
                docs.append(row[0])
                steps.append(int(row[1]))
                toks.append(row[2])
                ys.append(float(row[3]))
                rows.append([float(v) for v in row[4:]])
        X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
        pos_cols = [n for n in names if n.startswith("pos=")]
        return cls(names, X, np.array(ys), docs, steps, toks, 0, pos_cols)


def read_entropy_sidecar(path) -> dict[tuple[str, int], dict[str, float]]:
    """CSV with columns doc_id, step, h_lstm, h_parser (blank = missing)."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        need = {"doc_id", "step", "h_lstm", "h_parser"}
        if r.fieldnames is None or not need <= set(r.fieldnames):
            raise ValueError(f"{path}: sidecar needs columns {sorted(need)}")
        for lineno, row in enumerate(r, 2):
            vals = {}
            for col in ("h_lstm", "h_parser"):
                if row[col].strip() == "":
                    continue
                v = float(row[col])
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{path}:{lineno}: {col}={v} outside [0, 1]")
                vals[col] = v
            out[(row["doc_id"], int(row["step"]))] = vals
    return out


def _align(trace, trees: Sequence[ParseTree]):
    words = [st.token for st in trace.steps if st.token != STOP_TOKEN]
    sf = structural_features(trees)
    if sf.tokens != words:
        pos = 0
        for k, tree in enumerate(trees):
            leaves = tree.leaves()
            if leaves != words[pos:pos + len(leaves)]:
                raise AlignmentError(
                    f"doc {trace.doc_id}: parse sentence {k} ({' '.join(leaves)!r}) does not match "
                    f"summary tokens {pos}..{pos + len(leaves) - 1} ({' '.join(words[pos:pos + len(leaves)])!r})")
            pos += len(leaves)
        raise AlignmentError(f"doc {trace.doc_id}: parses cover {len(sf.tokens)} of {len(words)} summary tokens")
    return sf


def build_feature_matrix(traces, parses: Mapping[str, Sequence[ParseTree]] | None = None,
                         kn_model=None, external: Mapping | None = None,
                         features: Sequence[str] | None = None) -> FeatureMatrix:
    """Assemble probe features for every traced token.

    ``features`` selects columns (default: every feature the inputs can
    supply). POS comes from the parses when given, else from the built-in
    token classifier. The STOP step has POS ``[STOP]`` and no structural
    features.
    """
    available = {"h_gen", "h_copy", "pos"}
    if kn_model is not None:
        available.add("h_ngram")
    if external is not None:
        available |= {"h_lstm", "h_parser"}
    if parses is not None:
        available |= {"d_edge", "d_root"}
    selected = list(features) if features is not None else [f for f in ALL_FEATURES if f in available]
    unknown = [f for f in selected if f not in ALL_FEATURES]
    if unknown:
        raise ValueError(f"unknown features {unknown}")
    missing_src = [f for f in selected if f not in available]
    if missing_src:
        raise ValueError(f"features {missing_src} need inputs that were not supplied")
    scalars = [f for f in SCALAR_FEATURES if f in selected]
    use_pos = "pos" in selected

    rows, ys, pos_tags, meta = [], [], [], []
    dropped = 0
    for tr in traces:
        n = len(tr.steps)
        words = [st.token for st in tr.steps if st.token != STOP_TOKEN]
        cols: dict[str, list] = {"h_gen": [st.h_gen for st in tr.steps],
                                 "h_copy": [st.h_copy for st in tr.steps]}
        tags: list[str | None]
        if parses is not None:
            trees = parses.get(tr.doc_id, [])
            sf = _align(tr, trees) if words or trees else structural_features([])
            it = iter(range(len(words)))
            d_root, d_edge, tags = [], [], []
            for st in tr.steps:
                if st.token == STOP_TOKEN:
                    d_root.append(None)
                    d_edge.append(None)
                    tags.append(STOP_POS)
                else:
                    k = next(it)
                    d_root.append(sf.d_root[k])
                    d_edge.append(sf.d_edge[k])
                    tags.append(sf.pos[k])
            cols["d_root"], cols["d_edge"] = d_root, d_edge
        else:
            tags = [STOP_POS if st.token == STOP_TOKEN else token_category(st.token) for st in tr.steps]
        if "h_ngram" in scalars:
            # STOP is always last, so it never enters a history
            cols["h_ngram"] = lm_entropy_series(kn_model, [st.token for st in tr.steps]).tolist() if n else []
        if external is not None:
            for col in ("h_lstm", "h_parser"):
                cols[col] = [external.get((tr.doc_id, st.step), {}).get(col) for st in tr.steps]
        for i, st in enumerate(tr.steps):
            vals = [cols[f][i] for f in scalars]
            if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in vals) or (use_pos and tags[i] is None):
                dropped += 1
                continue
            rows.append([float(v) for v in vals])
            ys.append(st.p_gen)
            pos_tags.append(tags[i])
            meta.append((tr.doc_id, st.step, st.token))

    names = list(scalars)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(scalars))
    pos_cols: list[str] = []
    if use_pos:
        levels = sorted(set(pos_tags))
        onehot = np.zeros((len(rows), len(levels)))
        where = {t: j for j, t in enumerate(levels)}
        for k, t in enumerate(pos_tags):
            onehot[k, where[t]] = 1.0
        pos_cols = [f"pos={t}" for t in levels]
        names += pos_cols
        X = np.hstack([X, onehot])
    return FeatureMatrix(
        names=names,
        X=X,
        y=np.array(ys, dtype=np.float64),
        doc_ids=[m[0] for m in meta],
        steps=[m[1] for m in meta],
        tokens=[m[2] for m in meta],
        dropped=dropped,
        pos_columns=pos_cols,
    )

