"""Numpy implementation of the hot training kernels.

This is the fallback backend; attnalign.kernels._compiled provides the
same six functions in Cython.  Both operate on C-contiguous float64
arrays and must agree to floating-point roundoff (the test suite checks
parity at 1e-12).

Shapes use B for batch, H for hidden width, N for source positions and
V for vocabulary size.  LSTM gate blocks are laid out [i | f | g | o]
along the last axis of the (B, 4H) preactivation array.
"""

import numpy as np

NAME = "numpy"


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_gates_forward(pre, c_prev):
    """Apply LSTM gate nonlinearities and the state update.

    pre: (B, 4H) gate preactivations, c_prev: (B, H).
    Returns (h, c, gates, tanh_c) where gates is the (B, 4H) array of
    activated gate values kept for the backward pass.
    """
    hsize = c_prev.shape[1]
    gates = np.empty_like(pre)
    gates[:, : 2 * hsize] = _sigmoid(pre[:, : 2 * hsize])
    gates[:, 2 * hsize : 3 * hsize] = np.tanh(pre[:, 2 * hsize : 3 * hsize])
    gates[:, 3 * hsize :] = _sigmoid(pre[:, 3 * hsize :])
    i = gates[:, :hsize]
    f = gates[:, hsize : 2 * hsize]
    g = gates[:, 2 * hsize : 3 * hsize]
    o = gates[:, 3 * hsize :]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, gates, tanh_c


def lstm_gates_backward(dh, dc, gates, tanh_c, c_prev):
    """Backward of lstm_gates_forward.

    dh, dc: gradients w.r.t. h and c (dc may be all zeros).
    Returns (dpre, dc_prev).
    """
    hsize = c_prev.shape[1]
    i = gates[:, :hsize]
    f = gates[:, hsize : 2 * hsize]
    g = gates[:, 2 * hsize : 3 * hsize]
    o = gates[:, 3 * hsize :]
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dpre = np.empty_like(gates)
    dpre[:, :hsize] = dc_total * g * i * (1.0 - i)
    dpre[:, hsize : 2 * hsize] = dc_total * c_prev * f * (1.0 - f)
    dpre[:, 2 * hsize : 3 * hsize] = dc_total * i * (1.0 - g * g)
    dpre[:, 3 * hsize :] = dh * tanh_c * o * (1.0 - o)
    dc_prev = dc_total * f
    return dpre, dc_prev


def masked_softmax_forward(scores, mask):
    """Row softmax over the positions where mask is true.

    scores: (B, N) float64, mask: (B, N) bool with at least one true
    entry per row (the caller checks).  Masked-out positions are exactly
    zero in the result; the rest is stabilized by max subtraction.
    """
    shifted = np.where(mask, scores, -np.inf)
    shifted -= shifted.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def masked_softmax_backward(dprobs, probs):
    """Backward of masked_softmax_forward; zeros stay zero."""
    inner = (dprobs * probs).sum(axis=1, keepdims=True)
    return probs * (dprobs - inner)


def softmax_nll_forward(logits, targets):
    """Fused softmax + negative log likelihood of the target ids.

    logits: (B, V), targets: (B,) int64.
    Returns (losses (B,), probs (B, V)); probs feed the backward pass.
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    denom = expd.sum(axis=1)
    probs = expd / denom[:, None]
    rows = np.arange(logits.shape[0])
    losses = np.log(denom) - shifted[rows, targets]
    return losses, probs


def softmax_nll_backward(dlosses, probs, targets):
    """Backward of softmax_nll_forward; returns dlogits."""
    dlogits = probs * dlosses[:, None]
    rows = np.arange(probs.shape[0])
    dlogits[rows, targets] -= dlosses
    return dlogits
