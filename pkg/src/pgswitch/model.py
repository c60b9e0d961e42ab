"""Pointer-generator step: attention, copy switch, output mixture, coverage.

The decoder mixes a generation distribution over the fixed vocabulary with
a copy distribution over source token types:

    P(w) = p_gen * P_vocab(w) + (1 - p_gen) * P_copy(w)
    p_gen = sigmoid(delta_hstar . h* + delta_s . s_t + delta_x . x_t + beta_ptr)

and, with coverage enabled, feeds the running sum of past attention back
into the attention scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .analysis import normalized_entropy
from .nn import LstmCellParams, lstm_step, sigmoid_scalar, softmax
from .vocab import UNK_ID, Vocabulary

NORM_TOL = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    emb_dim: int
    hid_dim: int
    attn_dim: int
    coverage: bool = False

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        V, E, H, A = self.vocab_size, self.emb_dim, self.hid_dim, self.attn_dim
        shapes = {
            "embedding": (V, E),
            "enc_fw.W_ih": (4 * H, E),
            "enc_fw.W_hh": (4 * H, H),
            "enc_fw.b": (4 * H,),
            "enc_bw.W_ih": (4 * H, E),
            "enc_bw.W_hh": (4 * H, H),
            "enc_bw.b": (4 * H,),
            "reduce_h.W": (H, 2 * H),
            "reduce_h.b": (H,),
            "reduce_c.W": (H, 2 * H),
            "reduce_c.b": (H,),
            "dec.W_ih": (4 * H, E),
            "dec.W_hh": (4 * H, H),
            "dec.b": (4 * H,),
            "attn.W_enc": (A, 2 * H),
            "attn.W_dec": (A, H),
            "attn.b": (A,),
            "attn.v": (A,),
            "out.W": (V, 3 * H),
            "out.b": (V,),
            "switch.delta_hstar": (2 * H,),
            "switch.delta_s": (H,),
            "switch.delta_x": (E,),
            "switch.beta_ptr": (1,),
        }
        if self.coverage:
            shapes["attn.w_cov"] = (A,)
        return shapes


@dataclass
class ModelParams:
    """All learned tensors, keyed by name (see ``ModelConfig.tensor_shapes``)."""

    config: ModelConfig
    vocab: Vocabulary
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        if len(self.vocab) != self.config.vocab_size:
            raise ValueError("vocabulary size does not match config")
        want = self.config.tensor_shapes()
        if set(want) != set(self.tensors):
            missing = sorted(set(want) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(want))
            raise ValueError(f"tensor set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in want.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape} != {shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def lstm(self, prefix: str) -> LstmCellParams:
        t = self.tensors
        return LstmCellParams(t[prefix + ".W_ih"], t[prefix + ".W_hh"], t[prefix + ".b"])

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.vocab, {k: v.copy() for k, v in self.tensors.items()})

    @classmethod
    def initialize(cls, config: ModelConfig, vocab: Vocabulary, rng: np.random.Generator,
                   scale: float = 0.1) -> "ModelParams":
        tensors = {}
        for name, shape in config.tensor_shapes().items():
            tensors[name] = rng.uniform(-scale, scale, size=shape)
        return cls(config, vocab, tensors)


@dataclass(frozen=True)
class EncodedSource:
    tokens: tuple[str, ...]
    ids: np.ndarray        # vocab ids, OOV -> UNK
    ext_ids: np.ndarray    # extended ids
    oovs: tuple[str, ...]
    states: np.ndarray     # (L, 2H)
    enc_feat: np.ndarray   # (L, A), states projected for attention
    h0: np.ndarray
    c0: np.ndarray

    @property
    def n_types(self) -> int:
        return len(np.unique(self.ext_ids))


@dataclass(frozen=True)
class DecoderState:
    h: np.ndarray
    c: np.ndarray
    coverage: np.ndarray | None
    t: int = 0


class ExtendedDistribution:
    """Probabilities over vocabulary ids followed by source-only tokens."""

    def __init__(self, probs: np.ndarray, vocab: Vocabulary, oovs: Sequence[str]):
        self.probs = probs
        self.vocab = vocab
        self.oovs = tuple(oovs)
        if probs.shape != (len(vocab) + len(self.oovs),):
            raise ValueError("extended distribution has the wrong length")

    def __len__(self):
        return len(self.probs)

    def total(self) -> float:
        return float(self.probs.sum())

    def token(self, idx: int) -> str:
        return self.vocab.ext_token(idx, self.oovs)

    def index(self, token: str) -> int:
        if token in self.vocab:
            return self.vocab.id(token)
        if token in self.oovs:
            return len(self.vocab) + self.oovs.index(token)
        raise KeyError(token)

    def prob(self, token: str) -> float:
        try:
            return float(self.probs[self.index(token)])
        except KeyError:
            return 0.0

    def source_only_mass(self) -> float:
        return float(self.probs[len(self.vocab):].sum())

    def as_dict(self) -> dict[str, float]:
        return {self.token(i): float(p) for i, p in enumerate(self.probs)}


def encode(params: ModelParams, source_tokens: Sequence[str]) -> EncodedSource:
    """Run the bidirectional encoder and the state-reduction layer."""
    if len(source_tokens) == 0:
        raise ValueError("empty source")
    t = params.tensors
    H = params.config.hid_dim
    ids, ext, oovs = params.vocab.encode_source(source_tokens)
    emb = t["embedding"][ids]
    L = len(ids)
    fw, bw = params.lstm("enc_fw"), params.lstm("enc_bw")
    hf, cf = np.zeros(H), np.zeros(H)
    hb, cb = np.zeros(H), np.zeros(H)
    states = np.empty((L, 2 * H))
    for i in range(L):
        hf, cf = lstm_step(emb[i], hf, cf, fw)
        states[i, :H] = hf
    for i in reversed(range(L)):
        hb, cb = lstm_step(emb[i], hb, cb, bw)
        states[i, H:] = hb
    h0 = np.tanh(t["reduce_h.W"] @ np.concatenate([hf, hb]) + t["reduce_h.b"])
    c0 = np.tanh(t["reduce_c.W"] @ np.concatenate([cf, cb]) + t["reduce_c.b"])
    return EncodedSource(
        tokens=tuple(source_tokens),
        ids=np.asarray(ids),
        ext_ids=np.asarray(ext),
        oovs=tuple(oovs),
        states=states,
        enc_feat=states @ t["attn.W_enc"].T,
        h0=h0,
        c0=c0,
    )


def initial_state(params: ModelParams, enc: EncodedSource) -> DecoderState:
    cov = np.zeros(len(enc.tokens)) if params.config.coverage else None
    return DecoderState(enc.h0, enc.c0, cov, 0)


def attention_step(s_t: np.ndarray, encoder_states: np.ndarray, params: ModelParams,
                   coverage: np.ndarray | None = None,
                   enc_feat: np.ndarray | None = None):
    """Additive attention; returns ``(attn, h_star)``."""
    t = params.tensors
    L = encoder_states.shape[0]
    if L == 0:
        raise ValueError("no encoder states")
    if params.config.coverage != (coverage is not None):
        raise ValueError("coverage must be given iff the model uses coverage")
    if enc_feat is None:
        enc_feat = encoder_states @ t["attn.W_enc"].T
    pre = enc_feat + (t["attn.W_dec"] @ s_t + t["attn.b"])
    if coverage is not None:
        if coverage.shape != (L,):
            raise ValueError(f"coverage length {coverage.shape[0]} != source length {L}")
        pre = pre + np.outer(coverage, t["attn.w_cov"])
    attn = softmax(np.tanh(pre) @ t["attn.v"])
    return attn, attn @ encoder_states


def pgen_switch(h_star, s_t, x_t, params: ModelParams) -> float:
    t = params.tensors
    d_h, d_s, d_x = t["switch.delta_hstar"], t["switch.delta_s"], t["switch.delta_x"]
    if h_star.shape != d_h.shape or s_t.shape != d_s.shape or x_t.shape != d_x.shape:
        raise ValueError("switch input dimensions do not match the delta vectors")
    z = float(d_h @ h_star + d_s @ s_t + d_x @ x_t + t["switch.beta_ptr"][0])
    return sigmoid_scalar(z)


def copy_distribution(attn, source_tokens: Sequence[str]) -> dict[str, float]:
    """Sum attention over positions sharing a token type."""
    attn = np.asarray(attn, dtype=np.float64)
    if attn.shape != (len(source_tokens),):
        raise ValueError("attention length != source length")
    out: dict[str, float] = {}
    for a, tok in zip(attn, source_tokens):
        out[tok] = out.get(tok, 0.0) + float(a)
    return out


def _check_normalized(name, total):
    if abs(total - 1.0) > NORM_TOL:
        raise ValueError(f"{name} is not normalized (sum {total:.9g})")


def final_distribution(p_gen: float, p_vocab, p_copy, vocab: Vocabulary,
                       oovs: Sequence[str] = ()) -> ExtendedDistribution:
    """Mix generation and copy distributions over the extended vocabulary.

    ``p_copy`` is either a token -> probability mapping or an array over
    extended ids.
    """
    if not 0.0 <= p_gen <= 1.0:
        raise ValueError("p_gen outside [0, 1]")
    p_vocab = np.asarray(p_vocab, dtype=np.float64)
    if p_vocab.shape != (len(vocab),):
        raise ValueError("P_vocab length != vocabulary size")
    oovs = list(oovs)
    if isinstance(p_copy, Mapping):
        for tok in p_copy:
            if tok not in vocab and tok not in oovs:
                oovs.append(tok)
        copy = np.zeros(len(vocab) + len(oovs))
        for tok, p in p_copy.items():
            copy[vocab.id(tok) if tok in vocab else len(vocab) + oovs.index(tok)] += p
    else:
        copy = np.asarray(p_copy, dtype=np.float64)
        if copy.shape != (len(vocab) + len(oovs),):
            raise ValueError("P_copy length != extended vocabulary size")
    _check_normalized("P_vocab", p_vocab.sum())
    _check_normalized("P_copy", copy.sum())
    mixed = (1.0 - p_gen) * copy
    mixed[: len(vocab)] += p_gen * p_vocab
    return ExtendedDistribution(mixed, vocab, oovs)


def coverage_update(coverage: np.ndarray, attn: np.ndarray) -> np.ndarray:
    if coverage.shape != attn.shape:
        raise ValueError("coverage and attention lengths differ")
    return coverage + attn


def clamp_pgen(p_gen: float, p_min: float) -> float:
    """Reinterpolate p_gen from [0, 1] onto [p_min, 1]."""
    if not (0.0 <= p_gen <= 1.0 and 0.0 <= p_min <= 1.0):
        raise ValueError(f"p_gen={p_gen}, p_min={p_min} must lie in [0, 1]")
    return p_min + (1.0 - p_min) * p_gen


@dataclass
class StepOutput:
    dist: ExtendedDistribution
    p_gen: float
    p_gen_raw: float
    h_gen: float
    h_copy: float
    attn: np.ndarray
    p_vocab: np.ndarray
    p_copy: np.ndarray      # over extended ids
    copy_support: int       # distinct source types
    coverage: np.ndarray | None   # coverage fed into this step
    state: DecoderState = field(repr=False)


def decode_step(state: DecoderState, prev_token: int, enc: EncodedSource,
                params: ModelParams, p_min: float | None = 0.0) -> StepOutput:
    """One decoder step.

    ``prev_token`` is an extended id; source-only ids are embedded as UNK.
    ``p_min=None`` bypasses the switch intervention entirely.
    """
    t = params.tensors
    V = params.config.vocab_size
    if not 0 <= prev_token < V + len(enc.oovs):
        raise ValueError(f"token id {prev_token} outside the extended vocabulary")
    x = t["embedding"][prev_token if prev_token < V else UNK_ID]
    s, c = lstm_step(x, state.h, state.c, params.lstm("dec"))
    attn, h_star = attention_step(s, enc.states, params, state.coverage, enc.enc_feat)
    p_vocab = softmax(t["out.W"] @ np.concatenate([s, h_star]) + t["out.b"])
    p_raw = pgen_switch(h_star, s, x, params)
    p = p_raw if p_min is None else clamp_pgen(p_raw, p_min)
    n_ext = V + len(enc.oovs)
    p_copy = np.bincount(enc.ext_ids, weights=attn, minlength=n_ext)
    mixed = (1.0 - p) * p_copy
    mixed[:V] += p * p_vocab
    n_types = enc.n_types
    h_gen = normalized_entropy(p_vocab, V)
    # one source type: the copy distribution is a point mass
    h_copy = normalized_entropy(p_copy, n_types) if n_types >= 2 else 0.0
    cov = None if state.coverage is None else coverage_update(state.coverage, attn)
    return StepOutput(
        dist=ExtendedDistribution(mixed, params.vocab, enc.oovs),
        p_gen=p,
        p_gen_raw=p_raw,
        h_gen=h_gen,
        h_copy=h_copy,
        attn=attn,
        p_vocab=p_vocab,
        p_copy=p_copy,
        copy_support=n_types,
        coverage=state.coverage,
        state=DecoderState(s, c, cov, state.t + 1),
    )
