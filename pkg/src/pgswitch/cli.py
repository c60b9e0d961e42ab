"""Command-line entry point: ``pgswitch <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path
from typing import Sequence

from . import reports
from .decode import DecodeConfig, decode_corpus, read_traces, write_traces
from .features import FeatureMatrix, build_feature_matrix, read_entropy_sidecar
from .kn import train_kn_trigram
from .probe import feature_set_report
from .train import (SyntheticTaskSpec, TrainConfig, config_dict, make_synthetic_corpus, read_corpus,
                    train_model, write_corpus)
from .trees import ParseError, read_parse_file
from .vocab import RESERVED, Vocabulary
from .weights import WeightsFormatError, load_weights, save_weights

log = logging.getLogger("pgswitch")

DEFAULT_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)


class CliError(Exception):
    pass


# input helpers -------------------------------------------------------------

def read_articles(path) -> tuple[list[str], list[list[str]]]:
    """One article per line; a TSV corpus line contributes its source column."""
    ids, arts = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            toks = line.split("\t", 1)[0].split()
            if not toks:
                raise CliError(f"{path}:{lineno}: empty article")
            ids.append(str(len(arts)))
            arts.append(toks)
    if not arts:
        raise CliError(f"{path}: no articles")
    return ids, arts


def read_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        toks = [ln.strip() for ln in fh if ln.strip()]
    return Vocabulary([t for t in toks if t not in RESERVED])


def vocab_from_corpus(corpus, size: int | None) -> Vocabulary:
    counts = Counter(t for src, tgt in corpus for t in list(src) + list(tgt))
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    if size is not None:
        ranked = ranked[: max(size - len(RESERVED), 1)]
    return Vocabulary(sorted(ranked))


def read_lm_corpus(path) -> list[list[str]]:
    """Sentences for the n-gram model: TSV target column, or whole lines."""
    sents = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            text = line.split("\t", 1)[1] if "\t" in line else line
            if text.split():
                sents.append(text.split())
    if not sents:
        raise CliError(f"{path}: no sentences")
    return sents


def parse_pmin_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad p_min list {text!r}") from None
    if not vals or any(not 0.0 <= v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("p_min values must lie in [0, 1]")
    return vals


def unit_float(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} is outside [0, 1]")
    return v


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{v} must be >= 1")
    return v


def decode_config(args, p_min: float | None = None) -> DecodeConfig:
    return DecodeConfig(beam_width=args.beam_width, max_len=args.max_len,
                        p_min=args.pmin if p_min is None else p_min,
                        coverage_enabled=args.coverage, seed=args.seed)


def write_summaries(traces, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tr in traces:
            fh.write(f"{tr.doc_id}\t{tr.summary}\n")


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# subcommands ---------------------------------------------------------------

def cmd_corpus(args) -> None:
    spec = SyntheticTaskSpec(kind=args.kind, size=args.size, seed=args.seed,
                             vocab_size=args.vocab_size, target_rule=args.target_rule)
    write_corpus(make_synthetic_corpus(spec), args.out)
    if args.vocab_out:
        with open(args.vocab_out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(spec.vocabulary().content_tokens) + "\n")


def cmd_train(args) -> None:
    corpus = read_corpus(args.corpus)
    vocab = read_vocab(args.vocab) if args.vocab else vocab_from_corpus(corpus, args.vocab_size)
    cfg = TrainConfig(emb_dim=args.emb_dim, hid_dim=args.hid_dim, attn_dim=args.attn_dim,
                      learning_rate=args.lr, optimizer=args.optimizer, batch_size=args.batch_size,
                      steps=args.steps, clip_norm=args.clip_norm, coverage=args.coverage,
                      cov_loss_weight=args.cov_loss_weight, seed=args.seed)
    res = train_model(corpus, cfg, vocab, progress=args.log_every)
    save_weights(res.params, args.out, extra={"train": config_dict(cfg)})
    if args.loss_log:
        with open(args.loss_log, "w", encoding="utf-8") as fh:
            fh.write("step,loss\n")
            for k, v in enumerate(res.loss_history, 1):
                fh.write(f"{k},{v!r}\n")


def _decode(args, p_min=None):
    params = load_weights(args.weights)
    ids, arts = read_articles(args.articles)
    return decode_corpus(arts, params, decode_config(args, p_min), ids, jobs=args.jobs)


def cmd_decode(args) -> None:
    traces = _decode(args)
    write_traces(traces, args.out)
    if args.summaries:
        write_summaries(traces, args.summaries)


def _pmin_tag(p: float) -> str:
    return f"{p:.2f}".replace(".", "_")


def run_sweep(args, out_dir: Path):
    params = load_weights(args.weights)
    ids, arts = read_articles(args.articles)
    results = []
    for p in args.pmin_list:
        traces = decode_corpus(arts, params, decode_config(args, p), ids, jobs=args.jobs)
        write_traces(traces, out_dir / f"traces_pmin{_pmin_tag(p)}.jsonl")
        results.append((p, traces))
    reports.write_sweep_tsv(results, out_dir / "sweep.tsv")
    return results


def cmd_sweep(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_sweep(args, out)


def run_analyze(traces, out_dir: Path, fmt: str, bins: int, threshold: float) -> None:
    if not traces or not any(t.steps for t in traces):
        raise CliError("no traced tokens to analyze")
    reports.write_stats_csv(traces, out_dir / "stats.csv")
    reports.write_token_csv(traces, out_dir / "tokens.csv")
    reports.write_histogram_csv(traces, out_dir / "histogram.csv", bins)
    reports.write_mass_csv(traces, out_dir / "mass.csv", threshold)
    if fmt == "svg":
        reports.write_histogram_svg(traces, out_dir / "histogram.svg", bins)
        for tr in traces:
            if tr.steps:
                reports.write_token_svg(tr, out_dir / f"tokens_{tr.doc_id}.svg")


def cmd_analyze(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_analyze(read_traces(args.traces), out, args.report_format, args.bins, args.threshold)


def run_features(traces, parses_path, lm_path, sidecar_path, features) -> FeatureMatrix:
    parses = read_parse_file(parses_path) if parses_path else None
    kn = train_kn_trigram(read_lm_corpus(lm_path)) if lm_path else None
    ext = read_entropy_sidecar(sidecar_path) if sidecar_path else None
    feats = features.split(",") if features else None
    return build_feature_matrix(traces, parses, kn, ext, feats)


def cmd_features(args) -> None:
    m = run_features(read_traces(args.traces), args.parses, args.lm_corpus, args.sidecar, args.features)
    m.write_csv(args.out)
    log.info("%d rows, %d dropped", len(m), m.dropped)


def run_probe(matrix: FeatureMatrix, out_dir: Path, intercept: bool, top_pos: int) -> str:
    rep = feature_set_report(matrix, intercept=intercept, top_pos=top_pos)
    text = rep.to_text()
    (out_dir / "probe.txt").write_text(text + "\n", encoding="utf-8")
    rep.write_csv(out_dir / "probe.csv")
    rep.write_anova_csv(out_dir / "anova.csv")
    return text


def cmd_probe(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = FeatureMatrix.read_csv(args.matrix)
    print(run_probe(m, out, not args.no_intercept, args.top_pos))


def cmd_report(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traces = _decode(args)
    write_traces(traces, out / "traces.jsonl")
    write_summaries(traces, out / "summaries.tsv")
    run_analyze(traces, out, args.report_format, args.bins, args.threshold)
    m = run_features(traces, args.parses, args.lm_corpus, args.sidecar, None)
    m.write_csv(out / "features.csv")
    try:
        run_probe(m, out, True, 8)
    except ValueError as e:
        (out / "probe.txt").write_text(f"probe skipped: {e}\n", encoding="utf-8")
    sweep_dir = out / "sweep"
    sweep_dir.mkdir(exist_ok=True)
    run_sweep(args, sweep_dir)


# parser --------------------------------------------------------------------

def _add_decode_flags(p, with_pmin=True) -> None:
    p.add_argument("--weights", required=True)
    p.add_argument("--articles", required=True, help="one article per line (TSV: source column)")
    if with_pmin:
        p.add_argument("--pmin", type=unit_float, default=0.0, help="p_gen floor (default 0)")
    p.add_argument("--beam-width", type=positive_int, default=4)
    p.add_argument("--max-len", type=positive_int, default=120)
    p.add_argument("--coverage", action=argparse.BooleanOptionalAction, default=None,
                   help="assert coverage on/off (default: follow the model)")
    p.add_argument("--jobs", type=positive_int, default=1)


def _add_report_flags(p) -> None:
    p.add_argument("--report-format", choices=("csv", "svg"), default="csv")
    p.add_argument("--bins", type=positive_int, default=20)
    p.add_argument("--threshold", type=unit_float, default=0.95)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pgswitch", description="Train, decode and probe a pointer-generator.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=fn)
        return p

    p = add("corpus", cmd_corpus, "generate a synthetic training corpus")
    p.add_argument("--kind", choices=("copy", "substitution"), required=True)
    p.add_argument("--size", type=positive_int, default=2000)
    p.add_argument("--vocab-size", type=positive_int, default=60)
    p.add_argument("--target-rule", choices=("sentence", "window"), default="sentence")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-out")

    p = add("train", cmd_train, "train a model on a TSV corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", help="one token per line; default: built from the corpus")
    p.add_argument("--vocab-size", type=positive_int)
    p.add_argument("--emb-dim", type=positive_int, default=16)
    p.add_argument("--hid-dim", type=positive_int, default=32)
    p.add_argument("--attn-dim", type=positive_int)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--optimizer", choices=("sgd", "adagrad"), default="sgd")
    p.add_argument("--batch-size", type=positive_int, default=8)
    p.add_argument("--steps", type=positive_int, default=2000)
    p.add_argument("--clip-norm", type=float, default=2.0)
    p.add_argument("--coverage", action="store_true")
    p.add_argument("--cov-loss-weight", type=float, default=0.0)
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--loss-log")
    p.add_argument("--out", required=True)

    p = add("decode", cmd_decode, "beam-search decode articles into traces")
    _add_decode_flags(p)
    p.add_argument("--out", required=True, help="trace JSONL")
    p.add_argument("--summaries", help="doc_id<TAB>summary output")

    p = add("sweep", cmd_sweep, "decode across a list of p_min values")
    _add_decode_flags(p, with_pmin=False)
    p.add_argument("--pmin-list", type=parse_pmin_list, default=list(DEFAULT_SWEEP))
    p.add_argument("--out", required=True, help="output directory")

    p = add("analyze", cmd_analyze, "correlation, mass, novelty and plot data from traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_report_flags(p)

    p = add("features", cmd_features, "build the per-token probe feature matrix")
    p.add_argument("--traces", required=True)
    p.add_argument("--parses", help="doc_id<TAB>(bracketed tree) per line")
    p.add_argument("--lm-corpus", help="sentences for the trigram model (TSV targets or plain lines)")
    p.add_argument("--sidecar", help="CSV with doc_id,step,h_lstm,h_parser")
    p.add_argument("--features", help="comma-separated subset")
    p.add_argument("--out", required=True)

    p = add("probe", cmd_probe, "regress p_gen on feature sets")
    p.add_argument("--matrix", required=True)
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--top-pos", type=positive_int, default=8)
    p.add_argument("--out", required=True, help="output directory")

    p = add("report", cmd_report, "decode, analyze, probe and sweep into one directory")
    _add_decode_flags(p)
    p.add_argument("--pmin-list", type=parse_pmin_list, default=list(DEFAULT_SWEEP))
    p.add_argument("--parses")
    p.add_argument("--lm-corpus")
    p.add_argument("--sidecar")
    p.add_argument("--out", required=True)
    _add_report_flags(p)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ValueError, ParseError, WeightsFormatError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"pgswitch {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
