"""Independent reference implementations used only by the tests.

Everything here is written as plainly as possible (explicit loops,
textbook formulas) and never calls into the code paths it checks.
"""

import math

import numpy as np


def naive_matmul(a, b):
    """Triple-loop matrix product."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def direct_softmax(scores):
    """exp / sum without stabilization tricks."""
    e = [math.exp(s) for s in scores]
    z = sum(e)
    return np.array([v / z for v in e])


def fd_gradient(func, array, step=1e-5):
    """Central finite differences of a scalar function w.r.t. an array.

    func() must read the current contents of array; the array is
    restored element by element.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = func()
        flat[i] = orig - step
        fm = func()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_rel_error(analytic, numeric):
    """max |a - n| / max(1, |a|, |n|) over all elements."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def average_ranks(values):
    """1-based ranks with ties sharing the average rank, O(n^2)."""
    n = len(values)
    ranks = []
    for i in range(n):
        less = sum(1 for v in values if v < values[i])
        equal = sum(1 for v in values if v == values[i])
        # ranks occupied by the tie group: less+1 .. less+equal
        ranks.append(less + (equal + 1) / 2.0)
    return ranks


def spearman_bruteforce(xs, ys):
    """Covariance of average ranks over the product of rank stddevs."""
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    n = len(rx)
    mx = sum(rx) / n
    my = sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry)) / n
    sx = math.sqrt(sum((a - mx) ** 2 for a in rx) / n)
    sy = math.sqrt(sum((b - my) ** 2 for b in ry) / n)
    return cov / (sx * sy)


def gdfa_literal(forward, backward, src_len, tgt_len):
    """Grow-diag-final-and transcribed from the classic pseudocode.

    Operates on coverage arrays and scans the grid row-major (source
    outer, target inner).  The grow stage repeats until no link is
    added; additions take effect immediately.  The final stage requires
    both endpoints uncovered and runs over the forward links first,
    then the backward links.
    """
    neighbors = [(-1, 0), (0, -1), (1, 0), (0, 1),
                 (-1, -1), (-1, 1), (1, -1), (1, 1)]
    union = forward | backward
    alignment = set(forward & backward)
    src_cov = [False] * src_len
    tgt_cov = [False] * tgt_len
    for s, t in alignment:
        src_cov[s] = True
        tgt_cov[t] = True

    added = True
    while added:
        added = False
        for s in range(src_len):
            for t in range(tgt_len):
                if (s, t) not in alignment:
                    continue
                for ds, dt in neighbors:
                    s2, t2 = s + ds, t + dt
                    if not (0 <= s2 < src_len and 0 <= t2 < tgt_len):
                        continue
                    if (s2, t2) in alignment:
                        continue
                    if (not src_cov[s2] or not tgt_cov[t2]) and \
                            (s2, t2) in union:
                        alignment.add((s2, t2))
                        src_cov[s2] = True
                        tgt_cov[t2] = True
                        added = True

    for links in (forward, backward):
        for s in range(src_len):
            for t in range(tgt_len):
                if (s, t) in links and (s, t) not in alignment and \
                        not src_cov[s] and not tgt_cov[t]:
                    alignment.add((s, t))
                    src_cov[s] = True
                    tgt_cov[t] = True
    return alignment
