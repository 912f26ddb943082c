"""Corpus-level BLEU with 4-gram precisions and brevity penalty."""

import math
from collections import Counter

from attnalign.errors import ContractError


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n])
                   for i in range(len(tokens) - n + 1))


def bleu(candidates, references, max_n=4, smooth=False):
    """Geometric mean of modified n-gram precisions times brevity penalty.

    candidates and references are parallel lists of token lists; scores
    are in [0, 1].  Without smoothing any zero n-gram precision makes
    the score 0; with smooth=True, precisions for n >= 2 get add-one
    smoothing on both counts.
    """
    if not candidates:
        raise ContractError("BLEU needs a non-empty corpus")
    if len(candidates) != len(references):
        raise ContractError(
            f"{len(candidates)} candidates vs {len(references)} references")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            totals[n - 1] += max(len(cand) - n + 1, 0)
            for gram, count in cand_counts.items():
                matches[n - 1] += min(count, ref_counts.get(gram, 0))
    log_sum = 0.0
    for n in range(max_n):
        num, den = matches[n], totals[n]
        if smooth and n >= 1:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_sum += math.log(num / den)
    if cand_len == 0:
        return 0.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_sum / max_n)
