"""Dense numeric substrate: activations, an LSTM cell and gradient checking.

Everything here works on float64 numpy arrays. LSTM gates are stacked in
the order input, forget, output, candidate along the first axis of the
weight matrices (see docs/formats.md).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0 or x.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax input contains non-finite values")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def sigmoid(x):
    # tanh form: one ufunc call, no overflow for any finite input
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def sigmoid_scalar(x: float) -> float:
    """Logistic function with full relative precision in both tails."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@dataclass(frozen=True)
class LstmCellParams:
    """Stacked gate weights: W_ih (4H, in), W_hh (4H, H), b (4H,)."""

    W_ih: np.ndarray
    W_hh: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        four_h, n_in = self.W_ih.shape
        if four_h % 4:
            raise ValueError("gate rows must be a multiple of 4")
        hid = four_h // 4
        if self.W_hh.shape != (four_h, hid):
            raise ValueError(f"W_hh shape {self.W_hh.shape} != {(four_h, hid)}")
        if self.b.shape != (four_h,):
            raise ValueError(f"bias shape {self.b.shape} != {(four_h,)}")

    @property
    def hidden_dim(self) -> int:
        return self.W_hh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W_ih.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmCellParams":
        return cls(
            np.zeros((4 * hidden_dim, input_dim)),
            np.zeros((4 * hidden_dim, hidden_dim)),
            np.zeros(4 * hidden_dim),
        )


@dataclass
class LstmCache:
    x: np.ndarray
    h: np.ndarray
    c: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_new: np.ndarray
    tanh_c: np.ndarray


def _lstm_forward(x, h, c, W_ih, W_hh, b):
    H = W_hh.shape[1]
    if x.shape != (W_ih.shape[1],) or h.shape != (H,) or c.shape != (H,):
        raise ValueError(
            f"lstm dims mismatch: x{x.shape} h{h.shape} c{c.shape} for "
            f"input {W_ih.shape[1]}, hidden {H}"
        )
    z = W_ih @ x + W_hh @ h + b
    i = sigmoid(z[:H])
    f = sigmoid(z[H:2 * H])
    o = sigmoid(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, LstmCache(x, h, c, i, f, o, g, c_new, tanh_c)


def lstm_step(x, h, c, p: LstmCellParams):
    """One LSTM step. Returns ``(h', c')``."""
    h_new, c_new, _ = _lstm_forward(
        np.asarray(x, dtype=np.float64),
        np.asarray(h, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
        p.W_ih, p.W_hh, p.b,
    )
    return h_new, c_new


def lstm_step_cached(x, h, c, W_ih, W_hh, b):
    return _lstm_forward(x, h, c, W_ih, W_hh, b)


def lstm_step_backward(cache: LstmCache, dh_new, dc_new, W_ih, W_hh, grads=None):
    """Backprop one step.

    Accumulates parameter gradients into ``grads`` (keys ``W_ih``, ``W_hh``,
    ``b``) when given and returns ``(dx, dh, dc)``.
    """
    do = dh_new * cache.tanh_c
    dc = dc_new + dh_new * cache.o * (1.0 - cache.tanh_c ** 2)
    di = dc * cache.g
    dg = dc * cache.i
    df = dc * cache.c
    dc_prev = dc * cache.f
    dz = np.concatenate([
        di * cache.i * (1.0 - cache.i),
        df * cache.f * (1.0 - cache.f),
        do * cache.o * (1.0 - cache.o),
        dg * (1.0 - cache.g ** 2),
    ])
    if grads is not None:
        grads["W_ih"] += np.outer(dz, cache.x)
        grads["W_hh"] += np.outer(dz, cache.h)
        grads["b"] += dz
    return W_ih.T @ dz, W_hh.T @ dz, dc_prev


@dataclass
class GradReport:
    """Per-group maximum relative error between analytic and numeric grads."""

    max_rel_error: dict[str, float] = field(default_factory=dict)
    worst_index: dict[str, tuple] = field(default_factory=dict)
    step: float = 1e-5

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return all(v < tol for v in self.max_rel_error.values())

    def __str__(self):
        lines = [f"{name:24s} {err:.3e}" for name, err in self.max_rel_error.items()]
        return "\n".join(lines)


def relative_error(analytic, numeric, floor: float = 1e-5):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(
    loss_fn: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    h: float = 1e-5,
    groups: list[str] | None = None,
    max_entries: int | None = None,
    floor: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> GradReport:
    """Compare analytic gradients against central differences.

    ``loss_fn`` is called with ``params`` after each entry is perturbed in
    place and restored. ``max_entries`` caps the number of probed entries
    per group (sampled with ``rng``); None probes every entry.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    base = float(loss_fn(params))
    if not np.isfinite(base):
        raise ValueError("loss is not finite at the check point")
    report = GradReport(step=h)
    for name in groups or list(params):
        theta = params[name]
        grad = np.asarray(analytic[name])
        if grad.shape != theta.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        flat_idx = np.arange(theta.size)
        if max_entries is not None and theta.size > max_entries:
            rng = rng or np.random.default_rng(0)
            flat_idx = np.sort(rng.choice(theta.size, max_entries, replace=False))
        worst, worst_at = 0.0, ()
        for k in flat_idx:
            idx = np.unravel_index(k, theta.shape)
            old = theta[idx]
            theta[idx] = old + h
            plus = float(loss_fn(params))
            theta[idx] = old - h
            minus = float(loss_fn(params))
            theta[idx] = old
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise ValueError(f"non-finite loss while probing {name}{idx}")
            numeric = (plus - minus) / (2.0 * h)
            err = float(relative_error(grad[idx], numeric, floor))
            if err > worst:
                worst, worst_at = err, idx
        report.max_rel_error[name] = worst
        report.worst_index[name] = worst_at
    return report
