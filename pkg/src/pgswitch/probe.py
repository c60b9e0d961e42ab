"""OLS probes of p_gen: coefficient tests, adjusted R^2, nested-model ANOVA."""

from __future__ import annotations

import csv
import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .stats import f_sf, t_two_sided_p

INTERCEPT = "(intercept)"
RANK_TOL = 1e-10
ZERO_SS_RTOL = 1e-12


class RankDeficiencyError(ValueError):
    def __init__(self, columns: Sequence[str]):
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")
        self.columns = list(columns)


@dataclass
class RegressionReport:
    names: list[str]
    beta: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    adj_r2: float
    rss: float
    df: int
    n: int
    intercept: bool
    fitted: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    y_digest: str = field(default="", repr=False)
    label: str = ""

    @property
    def features(self) -> frozenset[str]:
        return frozenset(n for n in self.names if n != INTERCEPT)

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def row(self, name: str) -> dict:
        k = self.names.index(name)
        return {"feature": name, "beta": float(self.beta[k]), "se": float(self.se[k]),
                "t": float(self.t[k]), "p": float(self.p[k])}


def _digest(y: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(y, dtype=np.float64).tobytes()).hexdigest()


def ols_fit(X, y, names: Sequence[str] | None = None, intercept: bool = True,
            label: str = "") -> RegressionReport:
    """Least squares via QR of the column-normalized design matrix."""
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = y.shape[0]
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows, y has {n}")
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("one name per column required")
    if intercept:
        X = np.hstack([np.ones((n, 1)), X])
        names = [INTERCEPT] + names
    p = X.shape[1]
    df = n - p
    if p == 0:
        raise ValueError("no columns to fit")
    if df <= 0:
        raise ValueError(f"need more observations than parameters ({n} <= {p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in regression inputs")

    norms = np.linalg.norm(X, axis=0)
    zero = [names[j] for j in range(p) if norms[j] == 0.0]
    if zero:
        raise RankDeficiencyError(zero)
    Xs = X / norms
    Q, R = np.linalg.qr(Xs)
    diag = np.abs(np.diag(R))
    for j in range(p):
        if diag[j] < RANK_TOL:
            coef = np.linalg.lstsq(R[:j, :j], R[:j, j], rcond=None)[0]
            involved = [names[i] for i in range(j) if abs(coef[i]) > 1e-8] + [names[j]]
            raise RankDeficiencyError(involved)

    bs = np.linalg.solve(R, Q.T @ y)
    beta = bs / norms
    fitted = X @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    sigma2 = rss / df
    Rinv = np.linalg.solve(R, np.eye(p))
    se = np.sqrt(sigma2 * np.einsum("ij,ij->i", Rinv, Rinv)) / norms
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.copysign(np.inf, beta))
    pvals = np.array([t_two_sided_p(float(tv), df) if np.isfinite(tv) or np.isinf(tv) else math.nan for tv in t])

    if intercept:
        tss = float(((y - y.mean()) ** 2).sum())
        dof_total = n - 1
    else:
        tss = float(y @ y)
        dof_total = n
    if tss == 0.0:
        raise ValueError("response has no variation; R^2 undefined")
    r2 = 1.0 - rss / tss
    adj = 1.0 - (1.0 - r2) * dof_total / df
    return RegressionReport(names, beta, se, t, pvals, r2, adj, rss, df, n, intercept,
                            fitted, resid, _digest(y), label)


@dataclass
class AnovaResult:
    reduced: str
    full: str
    ss_diff: float
    df_diff: int
    F: float
    p: float


def nested_anova(reduced: RegressionReport, full: RegressionReport) -> AnovaResult:
    if reduced.n != full.n or (reduced.y_digest and full.y_digest and reduced.y_digest != full.y_digest):
        raise ValueError("models were fit to different observations")
    if reduced.intercept != full.intercept:
        raise ValueError("intercept handling differs between models")
    if not reduced.features < full.features:
        raise ValueError("reduced model features are not a strict subset of the full model's")
    df_diff = reduced.df - full.df
    ss = reduced.rss - full.rss
    # roundoff-level improvements count as none
    if ss <= ZERO_SS_RTOL * reduced.rss:
        ss = 0.0
    if full.rss == 0.0:
        F = math.inf if ss > 0 else 0.0
    else:
        F = (ss / df_diff) / (full.rss / full.df)
    return AnovaResult(reduced.label, full.label, ss, df_diff, F, f_sf(F, df_diff, full.df))


def significance(p: float) -> str:
    if p < 1e-5:
        return "***"
    if p < 1e-3:
        return "**"
    if p < 0.05:
        return "*"
    return ""


DISPLAY = {"h_gen": "H_gen", "h_copy": "H_copy", "h_ngram": "H_ngram", "h_lstm": "H_LSTM",
           "h_parser": "H_parser", "d_edge": "D_edge(w_i-1, w_i)", "d_root": "D_root(w_i)"}


def display_name(col: str) -> str:
    if col.startswith("pos="):
        return col[4:]
    return DISPLAY.get(col, col)


@dataclass
class ProbeReport:
    set_columns: dict[str, list[str]]
    set_fits: dict[str, RegressionReport]
    full: RegressionReport
    pos_reference: str | None
    top_pos: list[str]
    anova: list[AnovaResult]
    dropped_rows: int = 0

    def set_of(self, col: str) -> str:
        for name, cols in self.set_columns.items():
            if col in cols:
                return name
        raise KeyError(col)

    def table_rows(self) -> list[dict]:
        """Rows in the layout of the summary table: one per reported feature."""
        rows = []
        for set_name, cols in self.set_columns.items():
            shown = [c for c in cols if not c.startswith("pos=")] or []
            if any(c.startswith("pos=") for c in cols):
                shown = [c for c in self.top_pos]
            for c in shown:
                r = self.full.row(c)
                rows.append({"feature_set": set_name, "set_adj_r2": self.set_fits[set_name].adj_r2,
                             "feature": display_name(c), "column": c, "beta": r["beta"],
                             "se": r["se"], "t": r["t"], "p": r["p"], "sig": significance(r["p"])})
        return rows

    def to_text(self) -> str:
        rows = self.table_rows()
        width = max([len("Feature Set")] + [len(s) for s in self.set_columns] + [len(f"(R^2 = {0:.3f})")]) + 2
        fw = max([len("Feature")] + [len(r["feature"]) for r in rows]) + 2
        line = "-" * (width + fw + 18)
        out = [line, f"{'Feature Set':<{width}}{'Feature':<{fw}}{'beta':>10}  sig", "=" * len(line)]
        for set_name in self.set_columns:
            mine = [r for r in rows if r["feature_set"] == set_name]
            labels = [set_name, f"(R^2 = {self.set_fits[set_name].adj_r2:.3f})"]
            for k, r in enumerate(mine):
                left = labels[k] if k < len(labels) else ""
                out.append(f"{left:<{width}}{r['feature']:<{fw}}{r['beta']:>10.3f}  {r['sig']}")
            for extra in labels[len(mine):]:
                out.append(extra)
            out.append(line)
        out.append(f"Full Model R^2: {self.full.adj_r2:.3f}")
        if self.pos_reference:
            out.append(f"POS reference level: {display_name(self.pos_reference)}")
        out.append(f"Observations: {self.full.n} (dropped {self.dropped_rows})")
        out.append(line)
        return "\n".join(out)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["feature_set", "set_adj_r2", "feature", "beta", "se", "t", "p", "sig"])
            for set_name, cols in self.set_columns.items():
                for c in cols:
                    if c == self.pos_reference:
                        continue
                    r = self.full.row(c)
                    w.writerow([set_name, repr(self.set_fits[set_name].adj_r2), display_name(c),
                                repr(r["beta"]), repr(r["se"]), repr(r["t"]), repr(r["p"]),
                                significance(r["p"])])
            w.writerow(["Full Model", repr(self.full.adj_r2), "", "", "", "", "", ""])

    def write_anova_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["reduced", "full", "ss_diff", "df_diff", "F", "p"])
            for a in self.anova:
                w.writerow([a.reduced, a.full, repr(a.ss_diff), a.df_diff, repr(a.F), repr(a.p)])


def _pos_reference(matrix, pos_cols: Sequence[str]) -> str | None:
    if not pos_cols:
        return None
    counts = [(-float(matrix.column(c).sum()), c) for c in pos_cols]
    return min(counts)[1]


def feature_set_report(matrix, partition: Mapping[str, Sequence[str]] | None = None,
                       intercept: bool = True, top_pos: int = 8, anova: bool = True) -> ProbeReport:
    """Single-set fits, the full fit, and nested ANOVA over set unions.

    With an intercept, the most frequent POS column is the reference level
    and is left out of every design.
    """
    partition = dict(partition) if partition is not None else matrix.feature_sets()
    if not partition:
        raise ValueError("empty feature partition")
    for name, cols in partition.items():
        if not cols:
            raise ValueError(f"feature set {name!r} is empty")
        missing = [c for c in cols if c not in matrix.names]
        if missing:
            raise ValueError(f"feature set {name!r} names unknown columns {missing}")
    pos_cols = [c for cols in partition.values() for c in cols if c.startswith("pos=")]
    ref = _pos_reference(matrix, pos_cols) if intercept else None
    set_columns = {name: [c for c in cols if c != ref] for name, cols in partition.items()}
    for name, cols in set_columns.items():
        if not cols:
            raise ValueError(f"feature set {name!r} has no columns besides the reference level")

    cache: dict[frozenset, RegressionReport] = {}
    order = list(set_columns)

    def fit(sets: frozenset) -> RegressionReport:
        if sets not in cache:
            cols = [c for s in order if s in sets for c in set_columns[s]]
            label = " + ".join(s for s in order if s in sets) or "(intercept only)"
            X = np.column_stack([matrix.column(c) for c in cols]) if cols else np.zeros((len(matrix.y), 0))
            cache[sets] = ols_fit(X, matrix.y, cols, intercept=intercept, label=label)
        return cache[sets]

    set_fits = {s: fit(frozenset([s])) for s in order}
    full = fit(frozenset(order))
    pos_in_full = [c for c in full.names if c.startswith("pos=")]
    top = sorted(pos_in_full, key=lambda c: -abs(full.coef(c)))[:top_pos]
    top.sort(key=lambda c: full.coef(c))

    results = []
    if anova:
        for r in range(0, len(order)):
            for base in itertools.combinations(order, r):
                for extra in order:
                    if extra in base:
                        continue
                    reduced = frozenset(base)
                    if not reduced and not intercept:
                        continue
                    results.append(nested_anova(fit(reduced), fit(reduced | {extra})))
    return ProbeReport(set_columns, set_fits, full, ref, top, results,
                       getattr(matrix, "dropped", 0))
