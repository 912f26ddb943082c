"""Alignment algebra: soft conversion, argmax extraction, AER, GDFA.

Candidate alignments are plain sets of (source index, target index)
pairs; soft alignments are row-stochastic (target x source) matrices.
"""

import numpy as np

from attnalign.errors import ContractError, DegenerateInputError


def to_soft(hard, src_len, tgt_len, include_possible=True):
    """Spread each target word's link weight uniformly over its sources.

    A target word aligned to k sources gets 1/k on each of them; an
    unaligned target word is treated as aligned to every source word,
    i.e. a uniform row.  Returns a (tgt_len, src_len) matrix whose rows
    each sum to one.
    """
    if src_len < 1 or tgt_len < 1:
        raise ContractError(
            f"sentence lengths must be positive, got {src_len}x{tgt_len}")
    for s, t in hard.possible:
        if not (0 <= s < src_len and 0 <= t < tgt_len):
            raise ContractError(
                f"link {s}-{t} out of bounds for {src_len}x{tgt_len}")
    soft = np.zeros((tgt_len, src_len))
    for t in range(tgt_len):
        sources = hard.aligned_sources(t, include_possible)
        if sources:
            soft[t, sorted(sources)] = 1.0 / len(sources)
        else:
            soft[t, :] = 1.0 / src_len
    return soft


def attention_to_hard(attention):
    """Link each target word to its most attended source word.

    Ties go to the lowest source index (np.argmax's convention).
    """
    attention = np.asarray(attention)
    return {(int(np.argmax(row)), t) for t, row in enumerate(attention)}


def aer(candidate, gold):
    """Alignment error rate against sure/possible gold links.

    1 - (|A n S| + |A n P|) / (|A| + |S|), with P already normalized to
    contain S.  Zero means every candidate link is at least possible
    and every sure link was found.
    """
    a = set(candidate)
    s = gold.sure
    p = gold.possible
    denom = len(a) + len(s)
    if denom == 0:
        raise DegenerateInputError(
            "AER undefined: no candidate links and no sure links")
    return 1.0 - (len(a & s) + len(a & p)) / denom


def corpus_aer(candidates, golds):
    """AER over a corpus: intersection and size counts are pooled
    across sentences before applying the formula."""
    if len(candidates) != len(golds):
        raise ContractError(
            f"{len(candidates)} candidate sets vs {len(golds)} gold sets")
    a_total = s_total = hits = 0
    for cand, gold in zip(candidates, golds):
        cand = set(cand)
        a_total += len(cand)
        s_total += len(gold.sure)
        hits += len(cand & gold.sure) + len(cand & gold.possible)
    if a_total + s_total == 0:
        raise DegenerateInputError(
            "AER undefined: no candidate links and no sure links")
    return 1.0 - hits / (a_total + s_total)


def symmetrize_gdfa(forward, backward, src_len, tgt_len):
    """Grow-diag-final-and symmetrization of two directed alignments.

    Starts from the intersection, repeatedly sweeps the grid row-major
    (source outer, target inner) adding union links adjacent (in the
    8-neighborhood) to the current alignment whenever either endpoint
    is still uncovered, until a sweep adds nothing.  Additions take
    effect within the sweep.  The final stage then adds links whose
    endpoints are BOTH uncovered, first from the forward set, then from
    the backward set, in the same scan order.  The fixed order makes
    the result reproducible; it matches the classic pseudocode run
    with a row-major scan.
    """
    forward = set(forward)
    backward = set(backward)
    union = forward | backward
    aligned = np.zeros((src_len, tgt_len), dtype=bool)
    in_union = np.zeros((src_len, tgt_len), dtype=bool)
    for s, t in union:
        in_union[s, t] = True
    src_cov = np.zeros(src_len, dtype=bool)
    tgt_cov = np.zeros(tgt_len, dtype=bool)
    for s, t in forward & backward:
        aligned[s, t] = True
        src_cov[s] = True
        tgt_cov[t] = True

    neighborhood = ((-1, 0), (0, -1), (1, 0), (0, 1),
                    (-1, -1), (-1, 1), (1, -1), (1, 1))
    changed = True
    while changed:
        changed = False
        for s in range(src_len):
            for t in range(tgt_len):
                if not aligned[s, t]:
                    continue
                for ds, dt in neighborhood:
                    s2, t2 = s + ds, t + dt
                    if not (0 <= s2 < src_len and 0 <= t2 < tgt_len):
                        continue
                    if aligned[s2, t2] or not in_union[s2, t2]:
                        continue
                    if not src_cov[s2] or not tgt_cov[t2]:
                        aligned[s2, t2] = True
                        src_cov[s2] = True
                        tgt_cov[t2] = True
                        changed = True

    for direction in (forward, backward):
        for s in range(src_len):
            for t in range(tgt_len):
                if (s, t) in direction and not aligned[s, t] and \
                        not src_cov[s] and not tgt_cov[t]:
                    aligned[s, t] = True
                    src_cov[s] = True
                    tgt_cov[t] = True

    return {(int(s), int(t)) for s, t in zip(*np.nonzero(aligned))}
