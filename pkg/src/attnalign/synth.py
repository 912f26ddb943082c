"""Synthetic lexicon-translation task with known gold alignments.

Source sentences are random words from a closed vocabulary.  A fixed
word class (ids divisible by drop_every) never translates, mimicking
function words that real word alignments leave unaligned; every other
word has exactly one target-side translation.  The translated words
keep their source order up to local reorderings (non-overlapping
adjacent swaps), so the true word-level alignment is known by
construction: each target token links to exactly one source position
and dropped source words stay unaligned.

The dropped words are what make the task attention-hungry: the target
history never reveals how many source words were skipped, so the
decoder has to track source positions through its attention rather
than by counting emitted tokens.

Every vocabulary word also carries a deterministic POS tag and a
dependency role so the full analysis pipeline can run on generated
data.
"""

import numpy as np

from attnalign.data import (
    HardAlignmentSet,
    SentencePair,
    TokenAnnotation,
    save_alignments,
)

POS_CYCLE = ("NOUN", "VERB", "ADJ", "DET", "ADV", "PRON", "ADP", "NUM")
ROLE_CYCLE = ("subj", "root", "attr", "det", "adv", "pn", "pp", "obja")


def lexicon_task(n_sentences, seed, vocab_size=30, min_len=4, max_len=9,
                 swap_prob=0.3, drop_every=5):
    """Generate pairs plus their gold alignments.

    Returns (pairs, golds): pairs[i].target holds the translations of
    the non-dropped source words with adjacent swaps applied, and
    golds[i] records the resulting permutation as sure links.
    Sentences are resampled until at least two words translate.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    golds = []
    sent_id = 0
    while sent_id < n_sentences:
        length = int(rng.integers(min_len, max_len + 1))
        word_ids = rng.integers(0, vocab_size, size=length)
        kept = [i for i in range(length)
                if word_ids[i] % drop_every != 0]
        if len(kept) < 2:
            continue
        order = list(range(len(kept)))
        i = 0
        while i < len(order) - 1:
            if rng.random() < swap_prob:
                order[i], order[i + 1] = order[i + 1], order[i]
                i += 2
            else:
                i += 1
        positions = [kept[j] for j in order]
        source = [f"s{w}" for w in word_ids]
        target = [f"t{word_ids[p]}" for p in positions]
        links = {(p, t) for t, p in enumerate(positions)}
        pairs.append(SentencePair(source, target, sent_id))
        golds.append(HardAlignmentSet(sure=links))
        sent_id += 1
    return pairs, golds


def word_pos(token):
    """Deterministic POS tag for a synthetic vocabulary word."""
    return POS_CYCLE[int(token[1:]) % len(POS_CYCLE)]


def word_role(token):
    return ROLE_CYCLE[int(token[1:]) % len(ROLE_CYCLE)]


def annotate(pairs, side):
    """Synthetic annotations for one side of the generated corpus."""
    annotations = []
    for pair in pairs:
        tokens = pair.source if side == "source" else pair.target
        annotations.append(TokenAnnotation(
            tokens=list(tokens),
            pos=[word_pos(t) for t in tokens],
            roles=[word_role(t) for t in tokens],
            heads=[-1] * len(tokens)))
    return annotations


def save_task(out_dir, pairs, golds):
    """Write the generated corpus as pipeline-ready files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "source.txt", "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(" ".join(pair.source) + "\n")
    with open(out_dir / "target.txt", "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(" ".join(pair.target) + "\n")
    save_alignments(out_dir / "gold.align", golds)
    for side in ("source", "target"):
        with open(out_dir / f"{side}_annotations.tsv", "w",
                  encoding="utf-8") as fh:
            for ann in annotate(pairs, side):
                for tok, pos, role, head in zip(ann.tokens, ann.pos,
                                                ann.roles, ann.heads):
                    fh.write(f"{tok}\t{pos}\t{role}\t{head}\n")
                fh.write("\n")
    return out_dir
