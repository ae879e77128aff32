"""Numeric core: activations, parameter initialization, the bidirectional GRU
encoder, the dense softmax head, and the finite-difference gradient checker.

All backward passes are written by hand against the forward definitions; the
gradient checker is the oracle that keeps them honest. Arrays are float64 in
tests and may be float32 for training throughput.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import NumericError, ShapeMismatch

N_CLASSES = 6


def sigmoid(x):
    # piecewise form avoids overflow warnings for large |x|
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(y: np.ndarray) -> np.ndarray:
    """Stabilized softmax over a 1-D logit vector."""
    shifted = y - np.max(y)
    expd = np.exp(shifted)
    return expd / expd.sum()


def row_softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis of a 2-D array, one distribution per row."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def row_softmax_backward(grad_probs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient through row_softmax: dL/dlogits from dL/dprobs."""
    inner = (grad_probs * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_probs - inner)


def check_finite(array: np.ndarray, context: str = "tensor") -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"non-finite values in {context}")


def glorot_uniform(shape, rng) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class GruParams:
    """Gate weights for one direction; inputs hit W_i*, the recurrent state
    hits W_h*, suffixes r/z/n are the reset, update and candidate gates."""

    W_ir: np.ndarray
    W_iz: np.ndarray
    W_in: np.ndarray
    W_hr: np.ndarray
    W_hz: np.ndarray
    W_hn: np.ndarray
    b_ir: np.ndarray
    b_iz: np.ndarray
    b_in: np.ndarray
    b_hr: np.ndarray
    b_hz: np.ndarray
    b_hn: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_ir.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W_ir.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def init_gru(input_dim: int, hidden_dim: int, rng, dtype=np.float64) -> GruParams:
    def w(rows, cols):
        return glorot_uniform((rows, cols), rng).astype(dtype)

    zero = lambda: np.zeros(hidden_dim, dtype=dtype)
    return GruParams(
        W_ir=w(input_dim, hidden_dim),
        W_iz=w(input_dim, hidden_dim),
        W_in=w(input_dim, hidden_dim),
        W_hr=w(hidden_dim, hidden_dim),
        W_hz=w(hidden_dim, hidden_dim),
        W_hn=w(hidden_dim, hidden_dim),
        b_ir=zero(),
        b_iz=zero(),
        b_in=zero(),
        b_hr=zero(),
        b_hz=zero(),
        b_hn=zero(),
    )


def zeros_like_gru(p: GruParams) -> GruParams:
    return GruParams(**{k: np.zeros_like(v) for k, v in p.tensors().items()})


@dataclass
class GruStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: np.ndarray
    hh: np.ndarray  # the biased recurrent candidate term, gated by r


def gru_cell_forward(x_t, h_prev, p: GruParams):
    """One GRU step.

    r = sig(x W_ir + b_ir + h W_hr + b_hr)
    z = sig(x W_iz + b_iz + h W_hz + b_hz)
    n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
    h = (1 - z) * n + z * h_prev

    The reset gate multiplies the already-biased recurrent term.
    """
    if x_t.shape != (p.input_dim,) or h_prev.shape != (p.hidden_dim,):
        raise ShapeMismatch(
            f"x {x_t.shape} / h {h_prev.shape} vs params "
            f"({p.input_dim}, {p.hidden_dim})"
        )
    r = sigmoid(x_t @ p.W_ir + p.b_ir + h_prev @ p.W_hr + p.b_hr)
    z = sigmoid(x_t @ p.W_iz + p.b_iz + h_prev @ p.W_hz + p.b_hz)
    hh = h_prev @ p.W_hn + p.b_hn
    n = np.tanh(x_t @ p.W_in + p.b_in + r * hh)
    h_t = (1.0 - z) * n + z * h_prev
    return h_t, GruStepCache(x=x_t, h_prev=h_prev, r=r, z=z, n=n, hh=hh)


def gru_cell_backward(grad_h, cache: GruStepCache, p: GruParams, grads: GruParams):
    """Backward through one step; accumulates into `grads` (same layout as
    the params) and returns (grad_x, grad_h_prev)."""
    if grad_h.shape != (p.hidden_dim,):
        raise ShapeMismatch(f"grad_h {grad_h.shape} vs hidden {p.hidden_dim}")
    x, h_prev, r, z, n, hh = (
        cache.x,
        cache.h_prev,
        cache.r,
        cache.z,
        cache.n,
        cache.hh,
    )
    dn = grad_h * (1.0 - z)
    dz = grad_h * (h_prev - n)
    dh_prev = grad_h * z

    da = dn * (1.0 - n * n)  # pre-tanh
    dr = da * hh
    dhh = da * r
    dr_pre = dr * r * (1.0 - r)
    dz_pre = dz * z * (1.0 - z)

    grads.W_in += np.outer(x, da)
    grads.b_in += da
    grads.W_hn += np.outer(h_prev, dhh)
    grads.b_hn += dhh
    grads.W_ir += np.outer(x, dr_pre)
    grads.b_ir += dr_pre
    grads.W_hr += np.outer(h_prev, dr_pre)
    grads.b_hr += dr_pre
    grads.W_iz += np.outer(x, dz_pre)
    grads.b_iz += dz_pre
    grads.W_hz += np.outer(h_prev, dz_pre)
    grads.b_hz += dz_pre

    grad_x = da @ p.W_in.T + dr_pre @ p.W_ir.T + dz_pre @ p.W_iz.T
    dh_prev = dh_prev + dhh @ p.W_hn.T + dr_pre @ p.W_hr.T + dz_pre @ p.W_hz.T
    return grad_x, dh_prev


@dataclass
class BigruCache:
    fwd_steps: list
    bwd_steps: list  # indexed by original position t; processed n-1 .. 0


def bigru_forward(X: np.ndarray, p_fwd: GruParams, p_bwd: GruParams):
    """Run both directions and concatenate per position: H[t] = (fwd_t, bwd_t).

    Both directions start from zero state; the backward direction reads the
    sequence last to first.
    """
    n = X.shape[0]
    if n < 1:
        raise ShapeMismatch("bigru needs at least one position")
    d_h = p_fwd.hidden_dim
    H = np.zeros((n, 2 * d_h), dtype=X.dtype)
    fwd_steps = [None] * n
    bwd_steps = [None] * n

    h = np.zeros(d_h, dtype=X.dtype)
    for t in range(n):
        h, fwd_steps[t] = gru_cell_forward(X[t], h, p_fwd)
        H[t, :d_h] = h
    h = np.zeros(d_h, dtype=X.dtype)
    for t in range(n - 1, -1, -1):
        h, bwd_steps[t] = gru_cell_forward(X[t], h, p_bwd)
        H[t, d_h:] = h
    return H, BigruCache(fwd_steps=fwd_steps, bwd_steps=bwd_steps)


def bigru_backward(grad_H: np.ndarray, cache: BigruCache, p_fwd, p_bwd):
    """Backprop through time for both directions; returns (grad_X, g_fwd, g_bwd)."""
    n = grad_H.shape[0]
    d_h = p_fwd.hidden_dim
    d_in = p_fwd.input_dim
    grad_X = np.zeros((n, d_in), dtype=grad_H.dtype)
    g_fwd = zeros_like_gru(p_fwd)
    g_bwd = zeros_like_gru(p_bwd)

    carry = np.zeros(d_h, dtype=grad_H.dtype)
    for t in range(n - 1, -1, -1):
        dx, carry = gru_cell_backward(grad_H[t, :d_h] + carry, cache.fwd_steps[t], p_fwd, g_fwd)
        grad_X[t] += dx
    carry = np.zeros(d_h, dtype=grad_H.dtype)
    for t in range(n):
        dx, carry = gru_cell_backward(grad_H[t, d_h:] + carry, cache.bwd_steps[t], p_bwd, g_bwd)
        grad_X[t] += dx
    return grad_X, g_fwd, g_bwd


@dataclass
class DenseParams:
    W: np.ndarray  # (input_dim, N_CLASSES)
    b: np.ndarray  # (N_CLASSES,)

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


def init_dense(input_dim: int, rng, dtype=np.float64) -> DenseParams:
    return DenseParams(
        W=glorot_uniform((input_dim, N_CLASSES), rng).astype(dtype),
        b=np.zeros(N_CLASSES, dtype=dtype),
    )


def dense_softmax_forward(c: np.ndarray, p: DenseParams, use_bias: bool = True):
    """Affine map to class logits followed by a stabilized softmax."""
    if c.shape != (p.input_dim,):
        raise ShapeMismatch(f"input {c.shape} vs dense ({p.input_dim}, {N_CLASSES})")
    y = c @ p.W
    if use_bias:
        y = y + p.b
    return softmax(y), y


def dense_backward(grad_logits: np.ndarray, c: np.ndarray, p: DenseParams, use_bias: bool = True):
    """Gradient of the affine layer given dL/dlogits; returns (grad_c, gW, gb)."""
    if grad_logits.shape != (N_CLASSES,):
        raise ShapeMismatch(f"grad_logits {grad_logits.shape} vs ({N_CLASSES},)")
    gW = np.outer(c, grad_logits)
    gb = grad_logits.copy() if use_bias else np.zeros_like(p.b)
    grad_c = grad_logits @ p.W.T
    return grad_c, gW, gb


def predict_class(f: np.ndarray) -> int:
    """Index of the largest probability; exact ties go to the lowest index."""
    return int(np.argmax(f))


def finite_diff_check(loss_and_grad, params: dict, eps: float = 1e-5, sample=None, rng=None) -> float:
    """Compare analytic gradients against central differences.

    `loss_and_grad()` evaluates the (deterministic) loss at the current
    parameter values and returns (loss, grads) with grads keyed like
    `params`. Entries are perturbed in place one at a time. Returns the
    worst relative error, |analytic - numeric| / max(1, |analytic|, |numeric|)
    (relative for large gradients, absolute near zero).

    `sample` caps the number of entries checked per tensor; entries are then
    chosen by `rng`.
    """
    _, grads = loss_and_grad()
    worst = 0.0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        grad_flat = grads[name].reshape(-1)
        indices = range(flat.size)
        if sample is not None and flat.size > sample:
            indices = rng.choice(flat.size, size=sample, replace=False)
        for i in indices:
            saved = flat[i]
            flat[i] = saved + eps
            loss_plus, _ = loss_and_grad()
            flat[i] = saved - eps
            loss_minus, _ = loss_and_grad()
            flat[i] = saved
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            analytic = grad_flat[i]
            err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            worst = max(worst, err)
    return worst
