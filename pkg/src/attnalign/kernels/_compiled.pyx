# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython implementation of the hot training kernels.

Mirrors attnalign.kernels._numpy function for function; see that module
for the shape conventions.  Loops are fused so each kernel makes a
single pass over its arrays instead of allocating numpy temporaries.
"""

import numpy as np

from libc.math cimport exp, log, tanh
from libc.stdint cimport int64_t

NAME = "compiled"


cdef inline double _sigmoid(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


cdef double[:, ::1] _c2d(arr):
    return np.ascontiguousarray(arr, dtype=np.float64)


def lstm_gates_forward(pre_in, c_prev_in):
    cdef double[:, ::1] pre = _c2d(pre_in)
    cdef double[:, ::1] c_prev = _c2d(c_prev_in)
    cdef Py_ssize_t b = pre.shape[0]
    cdef Py_ssize_t h = c_prev.shape[1]
    cdef Py_ssize_t r, k
    cdef double iv, fv, gv, ov, cv, tc

    h_out = np.empty((b, h), dtype=np.float64)
    c_out = np.empty((b, h), dtype=np.float64)
    gates = np.empty((b, 4 * h), dtype=np.float64)
    tanh_c = np.empty((b, h), dtype=np.float64)
    cdef double[:, ::1] hv = h_out
    cdef double[:, ::1] cov = c_out
    cdef double[:, ::1] gav = gates
    cdef double[:, ::1] tcv = tanh_c

    with nogil:
        for r in range(b):
            for k in range(h):
                iv = _sigmoid(pre[r, k])
                fv = _sigmoid(pre[r, h + k])
                gv = tanh(pre[r, 2 * h + k])
                ov = _sigmoid(pre[r, 3 * h + k])
                cv = fv * c_prev[r, k] + iv * gv
                tc = tanh(cv)
                gav[r, k] = iv
                gav[r, h + k] = fv
                gav[r, 2 * h + k] = gv
                gav[r, 3 * h + k] = ov
                cov[r, k] = cv
                tcv[r, k] = tc
                hv[r, k] = ov * tc
    return h_out, c_out, gates, tanh_c


def lstm_gates_backward(dh_in, dc_in, gates_in, tanh_c_in, c_prev_in):
    cdef double[:, ::1] dh = _c2d(dh_in)
    cdef double[:, ::1] dc = _c2d(dc_in)
    cdef double[:, ::1] gates = _c2d(gates_in)
    cdef double[:, ::1] tanh_c = _c2d(tanh_c_in)
    cdef double[:, ::1] c_prev = _c2d(c_prev_in)
    cdef Py_ssize_t b = dh.shape[0]
    cdef Py_ssize_t h = dh.shape[1]
    cdef Py_ssize_t r, k
    cdef double iv, fv, gv, ov, tc, dct

    dpre = np.empty((b, 4 * h), dtype=np.float64)
    dc_prev = np.empty((b, h), dtype=np.float64)
    cdef double[:, ::1] dpv = dpre
    cdef double[:, ::1] dcp = dc_prev

    with nogil:
        for r in range(b):
            for k in range(h):
                iv = gates[r, k]
                fv = gates[r, h + k]
                gv = gates[r, 2 * h + k]
                ov = gates[r, 3 * h + k]
                tc = tanh_c[r, k]
                dct = dc[r, k] + dh[r, k] * ov * (1.0 - tc * tc)
                dpv[r, k] = dct * gv * iv * (1.0 - iv)
                dpv[r, h + k] = dct * c_prev[r, k] * fv * (1.0 - fv)
                dpv[r, 2 * h + k] = dct * iv * (1.0 - gv * gv)
                dpv[r, 3 * h + k] = dh[r, k] * tc * ov * (1.0 - ov)
                dcp[r, k] = dct * fv
    return dpre, dc_prev


def masked_softmax_forward(scores_in, mask_in):
    cdef double[:, ::1] scores = _c2d(scores_in)
    cdef const unsigned char[:, ::1] mask = \
        np.ascontiguousarray(mask_in).view(np.uint8)
    cdef Py_ssize_t b = scores.shape[0]
    cdef Py_ssize_t n = scores.shape[1]
    cdef Py_ssize_t r, k
    cdef double mx, total, e

    probs = np.zeros((b, n), dtype=np.float64)
    cdef double[:, ::1] pv = probs

    with nogil:
        for r in range(b):
            mx = -1e308
            for k in range(n):
                if mask[r, k] and scores[r, k] > mx:
                    mx = scores[r, k]
            total = 0.0
            for k in range(n):
                if mask[r, k]:
                    e = exp(scores[r, k] - mx)
                    pv[r, k] = e
                    total += e
            for k in range(n):
                if mask[r, k]:
                    pv[r, k] /= total
    return probs


def masked_softmax_backward(dprobs_in, probs_in):
    cdef double[:, ::1] dprobs = _c2d(dprobs_in)
    cdef double[:, ::1] probs = _c2d(probs_in)
    cdef Py_ssize_t b = probs.shape[0]
    cdef Py_ssize_t n = probs.shape[1]
    cdef Py_ssize_t r, k
    cdef double inner

    dscores = np.empty((b, n), dtype=np.float64)
    cdef double[:, ::1] dv = dscores

    with nogil:
        for r in range(b):
            inner = 0.0
            for k in range(n):
                inner += dprobs[r, k] * probs[r, k]
            for k in range(n):
                dv[r, k] = probs[r, k] * (dprobs[r, k] - inner)
    return dscores


def softmax_nll_forward(logits_in, targets_in):
    cdef double[:, ::1] logits = _c2d(logits_in)
    cdef const int64_t[::1] targets = \
        np.ascontiguousarray(targets_in, dtype=np.int64)
    cdef Py_ssize_t b = logits.shape[0]
    cdef Py_ssize_t v = logits.shape[1]
    cdef Py_ssize_t r, k
    cdef double mx, total

    losses = np.empty(b, dtype=np.float64)
    probs = np.empty((b, v), dtype=np.float64)
    cdef double[::1] lv = losses
    cdef double[:, ::1] pv = probs

    with nogil:
        for r in range(b):
            mx = logits[r, 0]
            for k in range(1, v):
                if logits[r, k] > mx:
                    mx = logits[r, k]
            total = 0.0
            for k in range(v):
                pv[r, k] = exp(logits[r, k] - mx)
                total += pv[r, k]
            for k in range(v):
                pv[r, k] /= total
            lv[r] = log(total) - (logits[r, targets[r]] - mx)
    return losses, probs


def softmax_nll_backward(dlosses_in, probs_in, targets_in):
    cdef double[::1] dlosses = \
        np.ascontiguousarray(dlosses_in, dtype=np.float64)
    cdef double[:, ::1] probs = _c2d(probs_in)
    cdef const int64_t[::1] targets = \
        np.ascontiguousarray(targets_in, dtype=np.int64)
    cdef Py_ssize_t b = probs.shape[0]
    cdef Py_ssize_t v = probs.shape[1]
    cdef Py_ssize_t r, k

    dlogits = np.empty((b, v), dtype=np.float64)
    cdef double[:, ::1] dv = dlogits

    with nogil:
        for r in range(b):
            for k in range(v):
                dv[r, k] = probs[r, k] * dlosses[r]
            dv[r, targets[r]] -= dlosses[r]
    return dlogits
