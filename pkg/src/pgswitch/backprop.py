"""Teacher-forced loss and its exact gradient for one (source, target) pair.

The loss is the mean negative log-likelihood (nats) of the target tokens
plus STOP under the mixed output distribution, optionally plus a coverage
penalty sum_i min(a_i, c_i) per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import lstm_step_backward, lstm_step_cached, sigmoid_scalar, softmax
from .vocab import START_ID, UNK_ID


class ZeroProbabilityTarget(ValueError):
    def __init__(self, step: int, token: str):
        super().__init__(f"target {token!r} at step {step} has zero probability")
        self.step = step
        self.token = token


@dataclass
class _Step:
    in_id: int
    y: int
    x: np.ndarray
    lcache: object
    s: np.ndarray
    cov: np.ndarray | None
    u: np.ndarray
    a: np.ndarray
    hstar: np.ndarray
    o_in: np.ndarray
    pv: np.ndarray
    p: float
    pv_y: float
    pc_y: float
    pf: float
    mask: np.ndarray


def _lstm_grads(grads, prefix):
    return {k: grads[f"{prefix}.{k}"] for k in ("W_ih", "W_hh", "b")}


def loss_and_grads(params, source: Sequence[str], target: Sequence[str],
                   cov_loss_weight: float = 0.0, need_grads: bool = True):
    """Return ``(loss, grads)``; ``grads`` is None when ``need_grads`` is False."""
    t = params.tensors
    cfg = params.config
    V, H = cfg.vocab_size, cfg.hid_dim
    vocab = params.vocab
    ids, ext, oovs = vocab.encode_source(source)
    if not ids:
        raise ValueError("empty source")
    tgt = vocab.encode_target(target, oovs)
    ext = np.asarray(ext)
    L, T = len(ids), len(tgt)
    E = t["embedding"]

    # encoder
    fw_c, bw_c = [None] * L, [None] * L
    states = np.empty((L, 2 * H))
    hf, cf = np.zeros(H), np.zeros(H)
    for i in range(L):
        hf, cf, fw_c[i] = lstm_step_cached(E[ids[i]], hf, cf, t["enc_fw.W_ih"], t["enc_fw.W_hh"], t["enc_fw.b"])
        states[i, :H] = hf
    hb, cb = np.zeros(H), np.zeros(H)
    for i in reversed(range(L)):
        hb, cb, bw_c[i] = lstm_step_cached(E[ids[i]], hb, cb, t["enc_bw.W_ih"], t["enc_bw.W_hh"], t["enc_bw.b"])
        states[i, H:] = hb
    hcat, ccat = np.concatenate([hf, hb]), np.concatenate([cf, cb])
    h = h0 = np.tanh(t["reduce_h.W"] @ hcat + t["reduce_h.b"])
    c = c0 = np.tanh(t["reduce_c.W"] @ ccat + t["reduce_c.b"])
    enc_feat = states @ t["attn.W_enc"].T

    cov = np.zeros(L) if cfg.coverage else None
    cov_pen = 0.0
    nll = 0.0
    steps: list[_Step] = []
    prev = START_ID
    d_h, d_s, d_x = t["switch.delta_hstar"], t["switch.delta_s"], t["switch.delta_x"]
    beta = t["switch.beta_ptr"][0]
    for k, y in enumerate(tgt):
        in_id = prev if prev < V else UNK_ID
        x = E[in_id]
        s, c, lc = lstm_step_cached(x, h, c, t["dec.W_ih"], t["dec.W_hh"], t["dec.b"])
        pre = enc_feat + (t["attn.W_dec"] @ s + t["attn.b"])
        if cov is not None:
            pre = pre + np.outer(cov, t["attn.w_cov"])
        u = np.tanh(pre)
        a = softmax(u @ t["attn.v"])
        hstar = a @ states
        o_in = np.concatenate([s, hstar])
        pv = softmax(t["out.W"] @ o_in + t["out.b"])
        p = sigmoid_scalar(float(d_h @ hstar + d_s @ s + d_x @ x + beta))
        mask = ext == y
        pv_y = float(pv[y]) if y < V else 0.0
        pc_y = float(a[mask].sum())
        pf = p * pv_y + (1.0 - p) * pc_y
        if pf <= 0.0:
            raise ZeroProbabilityTarget(k, vocab.ext_token(y, oovs))
        nll -= np.log(pf)
        steps.append(_Step(in_id, y, x, lc, s, cov, u, a, hstar, o_in, pv, p, pv_y, pc_y, pf, mask))
        if cov is not None:
            if cov_loss_weight:
                cov_pen += float(np.minimum(a, cov).sum())
            cov = cov + a
        h = s
        prev = y
    loss = (nll + cov_loss_weight * cov_pen) / T
    if not need_grads:
        return float(loss), None

    grads = {k: np.zeros_like(v) for k, v in t.items()}
    g = 1.0 / T
    dstates = np.zeros_like(states)
    denc_feat = np.zeros_like(enc_feat)
    dh_next, dc_next = np.zeros(H), np.zeros(H)
    dcov_next = np.zeros(L)
    W_out, W_dec, v = t["out.W"], t["attn.W_dec"], t["attn.v"]
    dec_g = _lstm_grads(grads, "dec")
    for st in reversed(steps):
        dpf = -g / st.pf
        dp = dpf * (st.pv_y - st.pc_y)
        dlogits = np.zeros(V)
        if st.y < V:
            dpv_y = dpf * st.p
            dlogits = -dpv_y * st.pv_y * st.pv
            dlogits[st.y] += dpv_y * st.pv_y
        grads["out.W"] += np.outer(dlogits, st.o_in)
        grads["out.b"] += dlogits
        do_in = W_out.T @ dlogits
        ds = do_in[:H].copy()
        dhstar = do_in[H:].copy()

        dz = dp * st.p * (1.0 - st.p)
        grads["switch.delta_hstar"] += dz * st.hstar
        grads["switch.delta_s"] += dz * st.s
        grads["switch.delta_x"] += dz * st.x
        grads["switch.beta_ptr"][0] += dz
        dhstar += dz * d_h
        ds += dz * d_s
        dx = dz * d_x

        da = states @ dhstar
        dstates += np.outer(st.a, dhstar)
        da[st.mask] += dpf * (1.0 - st.p)
        if st.cov is not None:
            da += dcov_next
            dcov = dcov_next.copy()
            if cov_loss_weight:
                lt = st.a < st.cov
                da[lt] += cov_loss_weight * g
                dcov[~lt] += cov_loss_weight * g
        de = st.a * (da - st.a @ da)
        grads["attn.v"] += st.u.T @ de
        dpre = np.outer(de, v) * (1.0 - st.u ** 2)
        denc_feat += dpre
        dsum = dpre.sum(axis=0)
        grads["attn.b"] += dsum
        grads["attn.W_dec"] += np.outer(dsum, st.s)
        ds += W_dec.T @ dsum
        if st.cov is not None:
            grads["attn.w_cov"] += dpre.T @ st.cov
            dcov += dpre @ t["attn.w_cov"]
            dcov_next = dcov

        dx2, dh_next, dc_next = lstm_step_backward(st.lcache, ds + dh_next, dc_next,
                                                   t["dec.W_ih"], t["dec.W_hh"], dec_g)
        grads["embedding"][st.in_id] += dx + dx2

    dpre_h = dh_next * (1.0 - h0 ** 2)
    dpre_c = dc_next * (1.0 - c0 ** 2)
    grads["reduce_h.W"] += np.outer(dpre_h, hcat)
    grads["reduce_h.b"] += dpre_h
    grads["reduce_c.W"] += np.outer(dpre_c, ccat)
    grads["reduce_c.b"] += dpre_c
    dhcat = t["reduce_h.W"].T @ dpre_h
    dccat = t["reduce_c.W"].T @ dpre_c

    grads["attn.W_enc"] += denc_feat.T @ states
    dstates += denc_feat @ t["attn.W_enc"]

    fw_g = _lstm_grads(grads, "enc_fw")
    dh, dc = dhcat[:H].copy(), dccat[:H].copy()
    for i in reversed(range(L)):
        dx, dh, dc = lstm_step_backward(fw_c[i], dh + dstates[i, :H], dc,
                                        t["enc_fw.W_ih"], t["enc_fw.W_hh"], fw_g)
        grads["embedding"][ids[i]] += dx
    bw_g = _lstm_grads(grads, "enc_bw")
    dh, dc = dhcat[H:].copy(), dccat[H:].copy()
    for i in range(L):
        dx, dh, dc = lstm_step_backward(bw_c[i], dh + dstates[i, H:], dc,
                                        t["enc_bw.W_ih"], t["enc_bw.W_hh"], bw_g)
        grads["embedding"][ids[i]] += dx
    return float(loss), grads


def example_loss(params, source, target, cov_loss_weight: float = 0.0) -> float:
    return loss_and_grads(params, source, target, cov_loss_weight, need_grads=False)[0]
