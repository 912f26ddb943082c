"""Backend parity: the compiled kernels must match the numpy fallback."""

import numpy as np
import pytest

from attnalign.kernels import _numpy

try:
    from attnalign.kernels import _compiled
except ImportError:
    _compiled = None

needs_compiled = pytest.mark.skipif(
    _compiled is None, reason="compiled kernels not built")


def _random_case(rng, b=5, h=4, n=7, v=9):
    pre = rng.normal(size=(b, 4 * h)) * 2
    c_prev = rng.normal(size=(b, h))
    dh = rng.normal(size=(b, h))
    dc = rng.normal(size=(b, h))
    scores = rng.normal(size=(b, n)) * 5
    mask = rng.random((b, n)) < 0.7
    mask[:, 0] = True
    dprobs = rng.normal(size=(b, n))
    logits = rng.normal(size=(b, v)) * 3
    targets = rng.integers(0, v, size=b)
    dlosses = rng.normal(size=b)
    return pre, c_prev, dh, dc, scores, mask, dprobs, logits, targets, dlosses


@needs_compiled
class TestBackendParity:
    def test_all_kernels_agree(self):
        rng = np.random.default_rng(123)
        for _ in range(25):
            (pre, c_prev, dh, dc, scores, mask, dprobs, logits, targets,
             dlosses) = _random_case(rng)

            ref = _numpy.lstm_gates_forward(pre, c_prev)
            got = _compiled.lstm_gates_forward(pre, c_prev)
            for r, g in zip(ref, got):
                np.testing.assert_allclose(g, r, rtol=1e-12, atol=1e-14)

            h_ref, c_ref, gates, tanh_c = ref
            ref_b = _numpy.lstm_gates_backward(dh, dc, gates, tanh_c, c_prev)
            got_b = _compiled.lstm_gates_backward(dh, dc, gates, tanh_c,
                                                  c_prev)
            for r, g in zip(ref_b, got_b):
                np.testing.assert_allclose(g, r, rtol=1e-12, atol=1e-14)

            p_ref = _numpy.masked_softmax_forward(scores, mask)
            p_got = _compiled.masked_softmax_forward(scores, mask)
            np.testing.assert_allclose(p_got, p_ref, rtol=1e-12, atol=1e-15)
            np.testing.assert_allclose(
                _compiled.masked_softmax_backward(dprobs, p_got),
                _numpy.masked_softmax_backward(dprobs, p_ref),
                rtol=1e-12, atol=1e-14)

            l_ref, q_ref = _numpy.softmax_nll_forward(logits, targets)
            l_got, q_got = _compiled.softmax_nll_forward(logits, targets)
            np.testing.assert_allclose(l_got, l_ref, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(q_got, q_ref, rtol=1e-12, atol=1e-15)
            np.testing.assert_allclose(
                _compiled.softmax_nll_backward(dlosses, q_got, targets),
                _numpy.softmax_nll_backward(dlosses, q_ref, targets),
                rtol=1e-12, atol=1e-14)

    def test_noncontiguous_inputs_accepted(self):
        rng = np.random.default_rng(5)
        wide = rng.normal(size=(4, 10))
        view = wide[:, ::2]  # not C-contiguous
        mask = np.ones((4, 5), dtype=bool)
        np.testing.assert_allclose(
            _compiled.masked_softmax_forward(view, mask),
            _numpy.masked_softmax_forward(np.ascontiguousarray(view), mask),
            rtol=1e-12)


class TestNumpyKernelContracts:
    def test_nll_matches_log_softmax(self):
        rng = np.random.default_rng(77)
        logits = rng.normal(size=(6, 11)) * 4
        targets = rng.integers(0, 11, size=6)
        losses, probs = _numpy.softmax_nll_forward(logits, targets)
        ref = logits - logits.max(axis=1, keepdims=True)
        ref = ref - np.log(np.exp(ref).sum(axis=1, keepdims=True))
        np.testing.assert_allclose(
            losses, -ref[np.arange(6), targets], atol=1e-12)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_huge_masked_scores_do_not_overflow(self):
        scores = np.array([[1.0, 2.0, 1e6]])
        mask = np.array([[True, True, False]])
        probs = _numpy.masked_softmax_forward(scores, mask)
        assert np.isfinite(probs).all()
        assert probs[0, 2] == 0.0
