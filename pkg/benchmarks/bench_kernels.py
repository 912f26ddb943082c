"""Benchmark the compiled kernels against the numpy fallback.

Times each kernel on training-shaped arrays, then a full teacher-forced
training step at the desk-scale configuration with either backend.

Run after installing the package:

    python benchmarks/bench_kernels.py [--batch 16] [--hidden 64]
    ATTNALIGN_KERNELS=numpy python benchmarks/bench_kernels.py --step-only
"""

import argparse
import time

import numpy as np

from attnalign.kernels import _numpy

try:
    from attnalign.kernels import _compiled
except ImportError:
    _compiled = None


def timeit(fn, repeat=2000):
    fn()  # warm up
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def bench_kernels(batch, hidden, src_len, vocab):
    rng = np.random.default_rng(0)
    pre = rng.normal(size=(batch, 4 * hidden))
    c_prev = rng.normal(size=(batch, hidden))
    dh = rng.normal(size=(batch, hidden))
    dc = rng.normal(size=(batch, hidden))
    scores = rng.normal(size=(batch, src_len))
    mask = np.ones((batch, src_len), dtype=bool)
    dprobs = rng.normal(size=(batch, src_len))
    logits = rng.normal(size=(batch, vocab))
    targets = rng.integers(0, vocab, size=batch)
    dlosses = rng.normal(size=batch)

    _, _, gates, tanh_c = _numpy.lstm_gates_forward(pre, c_prev)
    probs = _numpy.masked_softmax_forward(scores, mask)
    _, nll_probs = _numpy.softmax_nll_forward(logits, targets)

    cases = [
        ("lstm_gates_forward", lambda m: m.lstm_gates_forward(pre, c_prev)),
        ("lstm_gates_backward",
         lambda m: m.lstm_gates_backward(dh, dc, gates, tanh_c, c_prev)),
        ("masked_softmax_forward",
         lambda m: m.masked_softmax_forward(scores, mask)),
        ("masked_softmax_backward",
         lambda m: m.masked_softmax_backward(dprobs, probs)),
        ("softmax_nll_forward",
         lambda m: m.softmax_nll_forward(logits, targets)),
        ("softmax_nll_backward",
         lambda m: m.softmax_nll_backward(dlosses, nll_probs, targets)),
    ]
    print(f"\nkernels at batch={batch} hidden={hidden} src_len={src_len} "
          f"vocab={vocab}")
    print(f"{'kernel':26s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, call in cases:
        t_np = timeit(lambda: call(_numpy))
        if _compiled is None:
            print(f"{name:26s} {t_np * 1e6:9.1f}u {'-':>10s} {'-':>8s}")
            continue
        t_cy = timeit(lambda: call(_compiled))
        print(f"{name:26s} {t_np * 1e6:9.1f}u {t_cy * 1e6:9.1f}u "
              f"{t_np / t_cy:7.2f}x")


def bench_training_step(batch, hidden):
    from attnalign import data as dt
    from attnalign import kernels
    from attnalign import model as md
    from attnalign import tensor as tz
    from attnalign import synth

    pairs, _ = synth.lexicon_task(batch * 8, seed=0, vocab_size=40)
    src_vocab = dt.build_vocab((p.source for p in pairs), 1000)
    tgt_vocab = dt.build_vocab((p.target for p in pairs), 1000)
    cfg = md.ModelConfig(src_vocab_size=len(src_vocab),
                         tgt_vocab_size=len(tgt_vocab), dim=hidden, layers=2,
                         attention="input_feeding", seed=0)
    model = md.AttentionModel(cfg)
    batches = dt.make_batches(pairs, src_vocab, tgt_vocab, batch, seed=0)
    rng = np.random.default_rng(0)

    def step():
        for b in batches:
            with tz.Tape() as tape:
                loss, _ = model.forced_loss(b, training=True, rng=rng)
                tape.backward(loss)
            tz.sgd_step(model.parameters(), 0.1, 5.0)

    step()
    start = time.perf_counter()
    for _ in range(3):
        step()
    per_batch = (time.perf_counter() - start) / (3 * len(batches))
    print(f"\nfull training step ({kernels.BACKEND} backend, batch={batch}, "
          f"hidden={hidden}): {per_batch * 1e3:.2f} ms/batch")
    print("rerun with ATTNALIGN_KERNELS=numpy or =compiled to compare "
          "backends")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--src-len", type=int, default=10)
    parser.add_argument("--vocab", type=int, default=1000)
    parser.add_argument("--step-only", action="store_true",
                        help="skip kernel microbenchmarks")
    args = parser.parse_args()
    if not args.step_only:
        if _compiled is None:
            print("compiled kernels not built; timing numpy only")
        bench_kernels(args.batch, args.hidden, args.src_len, args.vocab)
    bench_training_step(args.batch, args.hidden)


if __name__ == "__main__":
    main()
