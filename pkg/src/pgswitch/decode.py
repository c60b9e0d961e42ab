"""Beam search over the pointer-generator with per-token trace recording.

Traces are written as JSON Lines: a ``header`` object per document
followed by one ``step`` object per emitted token (docs/formats.md).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import EncodedSource, ModelParams, StepOutput, decode_step, encode, initial_state
from .vocab import START_ID, STOP, STOP_ID

TRACE_FORMAT = "pgswitch-trace"
TRACE_VERSION = 1


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 4
    max_len: int = 120
    p_min: float | None = 0.0              # None: intervention code path disabled
    coverage_enabled: bool | None = None   # None: follow the model
    length_norm: bool = False
    keep_beams: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.p_min is not None and not 0.0 <= self.p_min <= 1.0:
            raise ValueError("p_min must lie in [0, 1]")


@dataclass
class TokenStep:
    step: int
    token: str
    token_id: int
    origin: str              # "vocab" | "source-only"
    p_gen: float             # after the p_min intervention
    p_gen_raw: float
    h_gen: float
    h_copy: float
    attn: list[float]
    copy_support: int
    logprob: float
    coverage: list[float] | None = None

    def to_json(self) -> dict:
        d = {"type": "step"}
        d.update(asdict(self))
        return d


@dataclass
class DecodeTrace:
    doc_id: str
    config: DecodeConfig
    source: list[str]
    steps: list[TokenStep] = field(default_factory=list)
    summary: str = ""
    score: float = 0.0
    truncated: bool = False
    beams: list[dict] | None = None

    @property
    def summary_tokens(self) -> list[str]:
        return self.summary.split() if self.summary else []

    def header(self) -> dict:
        h = {
            "type": "header",
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "doc_id": self.doc_id,
            "config": asdict(self.config),
            "source": self.source,
            "summary": self.summary,
            "n_steps": len(self.steps),
            "score": self.score,
            "truncated": self.truncated,
        }
        if self.beams is not None:
            h["beams"] = self.beams
        return h

    def jsonl_lines(self) -> list[str]:
        lines = [json.dumps(self.header())]
        lines.extend(json.dumps(st.to_json()) for st in self.steps)
        return lines


@dataclass
class _Hyp:
    tokens: list[int]
    logp: float
    state: object

    def score(self, length_norm: bool) -> float:
        return self.logp / len(self.tokens) if length_norm and self.tokens else self.logp


def _log(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(probs)


def _check(params: ModelParams, config: DecodeConfig):
    if config.coverage_enabled is not None and config.coverage_enabled != params.config.coverage:
        raise ValueError("decode config coverage flag does not match the model")


def beam_search(enc: EncodedSource, params: ModelParams, config: DecodeConfig):
    """Return ``(best token ids, score, truncated, all final hypotheses)``."""
    k = config.beam_width
    live = [_Hyp([], 0.0, initial_state(params, enc))]
    done: list[_Hyp] = []
    for _ in range(config.max_len):
        cands = []
        for b, hyp in enumerate(live):
            prev = hyp.tokens[-1] if hyp.tokens else START_ID
            out = decode_step(hyp.state, prev, enc, params, config.p_min)
            lp = _log(out.dist.probs)
            # stable sort keeps lower ids first among equal log-probs
            top = np.argsort(-lp, kind="stable")[: 2 * k]
            for idx in top:
                cands.append((hyp.logp + float(lp[idx]), int(idx), b, out.state))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        new_live = []
        for score, idx, b, state in cands:
            if score == -np.inf:
                break
            hyp = _Hyp(live[b].tokens + [idx], score, state)
            if idx == STOP_ID:
                done.append(hyp)
            else:
                new_live.append(hyp)
            if len(new_live) == k or len(done) >= k:
                break
        live = new_live
        if len(done) >= k or not live:
            break
    pool, truncated = (done, False) if done else (live, True)
    ranked = sorted(enumerate(pool), key=lambda p: (-p[1].score(config.length_norm), p[0]))
    best = ranked[0][1]
    return best.tokens, best.score(config.length_norm), truncated, [h for _, h in ranked]


def greedy_decode(enc: EncodedSource, params: ModelParams, max_len: int = 120,
                  p_min: float = 0.0) -> list[int]:
    """Stepwise argmax reference decoder."""
    state = initial_state(params, enc)
    prev, out_ids = START_ID, []
    for _ in range(max_len):
        out = decode_step(state, prev, enc, params, p_min)
        prev = int(np.argmax(out.dist.probs))
        out_ids.append(prev)
        state = out.state
        if prev == STOP_ID:
            break
    return out_ids


def teacher_force(enc: EncodedSource, params: ModelParams, token_ids: Sequence[int],
                  p_min: float | None = 0.0) -> list[StepOutput]:
    """Re-run the decoder along a fixed token sequence."""
    state = initial_state(params, enc)
    prev, outs = START_ID, []
    for y in token_ids:
        out = decode_step(state, prev, enc, params, p_min)
        outs.append(out)
        state, prev = out.state, y
    return outs


def record_steps(enc: EncodedSource, params: ModelParams, token_ids: Sequence[int],
                 p_min: float | None = 0.0) -> list[TokenStep]:
    V = params.config.vocab_size
    steps = []
    for k, (y, out) in enumerate(zip(token_ids, teacher_force(enc, params, token_ids, p_min))):
        p = float(out.dist.probs[y])
        steps.append(TokenStep(
            step=k,
            token=out.dist.token(y),
            token_id=int(y),
            origin="vocab" if y < V else "source-only",
            p_gen=float(out.p_gen),
            p_gen_raw=float(out.p_gen_raw),
            h_gen=float(out.h_gen),
            h_copy=float(out.h_copy),
            attn=out.attn.tolist(),
            copy_support=int(out.copy_support),
            logprob=float(np.log(p)) if p > 0 else float("-inf"),
            coverage=None if out.coverage is None else out.coverage.tolist(),
        ))
    return steps


def beam_search_decode(article_tokens: Sequence[str], params: ModelParams,
                       config: DecodeConfig = DecodeConfig(), doc_id: str = "0") -> DecodeTrace:
    if len(article_tokens) == 0:
        raise ValueError("empty article")
    _check(params, config)
    enc = encode(params, article_tokens)
    ids, score, truncated, ranked = beam_search(enc, params, config)
    steps = record_steps(enc, params, ids, config.p_min)
    words = [st.token for st in steps if st.token_id != STOP_ID]
    beams = None
    if config.keep_beams:
        beams = [{"tokens": [enc_token(params, enc, i) for i in h.tokens],
                  "score": h.score(config.length_norm)} for h in ranked]
    return DecodeTrace(doc_id, config, list(article_tokens), steps, " ".join(words),
                       score, truncated, beams)


def enc_token(params: ModelParams, enc: EncodedSource, idx: int) -> str:
    return params.vocab.ext_token(idx, enc.oovs)


def _decode_one(args):
    article, params, config, doc_id = args
    return beam_search_decode(article, params, config, doc_id)


def decode_corpus(articles: Sequence[Sequence[str]], params: ModelParams,
                  config: DecodeConfig = DecodeConfig(), doc_ids: Sequence[str] | None = None,
                  jobs: int = 1) -> list[DecodeTrace]:
    """Decode many documents; output order follows input order."""
    doc_ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(len(articles))]
    work = [(a, params, config, d) for a, d in zip(articles, doc_ids)]
    if jobs <= 1:
        return [_decode_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_decode_one, work))


def write_traces(traces: Iterable[DecodeTrace], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tr in traces:
            for line in tr.jsonl_lines():
                fh.write(line + "\n")


def read_traces(path) -> list[DecodeTrace]:
    traces: list[DecodeTrace] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            kind = obj.pop("type", None)
            if kind == "header":
                if obj.get("format") != TRACE_FORMAT:
                    raise ValueError(f"{path}:{lineno}: not a trace file")
                if obj.get("version") != TRACE_VERSION:
                    raise ValueError(f"{path}:{lineno}: unsupported trace version {obj.get('version')}")
                traces.append(DecodeTrace(
                    doc_id=obj["doc_id"],
                    config=DecodeConfig(**obj["config"]),
                    source=obj["source"],
                    summary=obj["summary"],
                    score=obj["score"],
                    truncated=obj["truncated"],
                    beams=obj.get("beams"),
                ))
            elif kind == "step":
                if not traces:
                    raise ValueError(f"{path}:{lineno}: step before any header")
                traces[-1].steps.append(TokenStep(**obj))
            else:
                raise ValueError(f"{path}:{lineno}: unknown record type {kind!r}")
    return traces


STOP_TOKEN = STOP
