"""Corpora, vocabularies, gold alignments, annotations and batching.

File formats (all UTF-8, whitespace-tokenized text):

  parallel corpus   two aligned files, one sentence per line
  alignments        one line per sentence of 0-based "src-tgt" pairs;
                    an S or P token (spaced or attached) marks the
                    preceding pair sure/possible, default is sure
  annotations       one "token TAB pos TAB role TAB head" row per
                    token, blank line between sentences, head is the
                    0-based index of the syntactic head or -1 for root
  attention export  JSON lines; each record carries the sentence id,
                    source/target tokens, attention rows and per-token
                    word prediction losses
"""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from attnalign.errors import ConfigError, ConsistencyError, ParseError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")

# coarse POS inventory used for flagging unexpected tags
UNIVERSAL_POS_TAGS = frozenset({
    "ADJ", "ADP", "ADV", "CONJ", "DET", "NOUN", "NUM", "PRT", "PRON",
    "PUNC", "VERB",
})


class Vocabulary:
    """Frequency-ranked token inventory with reserved ids 0..3."""

    def __init__(self, tokens):
        self.tokens = list(RESERVED_TOKENS) + list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ConfigError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.tokens)

    def encode(self, words):
        """Token ids with out-of-vocabulary words mapped to UNK."""
        idx = self.index
        return np.array([idx.get(w, UNK) for w in words], dtype=np.int64)

    def decode(self, ids):
        return [self.tokens[int(i)] for i in ids]

    def __contains__(self, word):
        return word in self.index


def build_vocab(sentences, max_size):
    """Keep the max_size most frequent tokens.

    Ties are broken by first occurrence order, so the result is a pure
    function of the corpus.
    """
    if max_size < 1:
        raise ConfigError(f"max_size must be >= 1, got {max_size}")
    counts = Counter()
    first_seen = {}
    pos = 0
    for sent in sentences:
        for tok in sent:
            counts[tok] += 1
            if tok not in first_seen:
                first_seen[tok] = pos
                pos += 1
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return Vocabulary(ranked[:max_size])


@dataclass
class SentencePair:
    source: list
    target: list
    sent_id: int


def load_parallel(source_path, target_path, max_len=None):
    """Read two aligned one-sentence-per-line files.

    Empty-on-either-side lines and, when max_len is given, overlong
    pairs are dropped; surviving pairs keep their original 0-based line
    number as sent_id so alignment/annotation files stay addressable.
    """
    with open(source_path, encoding="utf-8") as fh:
        src_lines = fh.read().split("\n")
    with open(target_path, encoding="utf-8") as fh:
        tgt_lines = fh.read().split("\n")
    if src_lines and src_lines[-1] == "":
        src_lines.pop()
    if tgt_lines and tgt_lines[-1] == "":
        tgt_lines.pop()
    if len(src_lines) != len(tgt_lines):
        raise ConsistencyError(
            f"{source_path} has {len(src_lines)} lines but {target_path} "
            f"has {len(tgt_lines)}")
    pairs = []
    for i, (src, tgt) in enumerate(zip(src_lines, tgt_lines)):
        s = src.split()
        t = tgt.split()
        if not s or not t:
            continue
        if max_len is not None and (len(s) > max_len or len(t) > max_len):
            continue
        pairs.append(SentencePair(s, t, i))
    return pairs


@dataclass
class HardAlignmentSet:
    """Gold sure/possible links; possible is normalized to include sure."""

    sure: set = field(default_factory=set)
    possible: set = field(default_factory=set)

    def __post_init__(self):
        self.sure = set(self.sure)
        self.possible = set(self.possible) | self.sure

    def links(self, include_possible=True):
        return self.possible if include_possible else self.sure

    def aligned_sources(self, t, include_possible=True):
        """Source positions linked to target position t."""
        return {s for s, t2 in self.links(include_possible) if t2 == t}


def parse_alignment_line(line, path=None, lineno=None):
    sure = set()
    possible = set()
    last = None
    for tok in line.split():
        marker = None
        body = tok
        if tok in ("S", "P"):
            if last is None:
                raise ParseError(f"marker {tok!r} without a preceding link",
                                 path=path, line=lineno)
            if tok == "P":
                sure.discard(last)
                possible.add(last)
            last = None
            continue
        if body[-1] in ("S", "P"):
            marker = body[-1]
            body = body[:-1]
        s_str, sep, t_str = body.partition("-")
        if not sep or not s_str.isdigit() or not t_str.isdigit():
            raise ParseError(f"malformed alignment token {tok!r}",
                             path=path, line=lineno)
        link = (int(s_str), int(t_str))
        if marker == "P":
            possible.add(link)
        else:
            sure.add(link)
        last = link
    return HardAlignmentSet(sure, possible)


def load_alignments(path, pairs=None):
    """One HardAlignmentSet per line; blank lines mean no links.

    When pairs is given, link indices are validated against the
    sentence lengths (by position in the file).
    """
    sets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            sets.append(parse_alignment_line(line.strip(), path, lineno))
    if pairs is not None:
        for pair in pairs:
            if pair.sent_id >= len(sets):
                raise ConsistencyError(
                    f"{path} has {len(sets)} lines, sentence "
                    f"{pair.sent_id} missing")
            aset = sets[pair.sent_id]
            for s, t in aset.possible:
                if s >= len(pair.source) or t >= len(pair.target):
                    raise ParseError(
                        f"link {s}-{t} out of range for sentence of "
                        f"{len(pair.source)}x{len(pair.target)}",
                        path=path, line=pair.sent_id)
    return sets


def format_alignment(aset):
    """Canonical serialization: sorted links, bare sure, 's-t P' rest."""
    parts = []
    for s, t in sorted(aset.possible):
        if (s, t) in aset.sure:
            parts.append(f"{s}-{t}")
        else:
            parts.append(f"{s}-{t} P")
    return " ".join(parts)


def save_alignments(path, sets):
    with open(path, "w", encoding="utf-8") as fh:
        for aset in sets:
            fh.write(format_alignment(aset) + "\n")


@dataclass
class TokenAnnotation:
    tokens: list
    pos: list
    roles: list
    heads: list

    def __len__(self):
        return len(self.tokens)


def load_annotations(path):
    """Read tab-separated per-token annotation blocks."""
    annotations = []
    tokens, pos, roles, heads = [], [], [], []

    def flush():
        if tokens:
            annotations.append(TokenAnnotation(list(tokens), list(pos),
                                               list(roles), list(heads)))
            for col in (tokens, pos, roles, heads):
                col.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh):
            line = raw.rstrip("\n")
            if not line.strip():
                flush()
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ParseError(
                    f"expected 4 tab-separated fields, got {len(fields)}",
                    path=path, line=lineno)
            try:
                head = int(fields[3])
            except ValueError:
                raise ParseError(f"head index {fields[3]!r} is not an "
                                 "integer", path=path, line=lineno)
            tokens.append(fields[0])
            pos.append(fields[1])
            roles.append(fields[2])
            heads.append(head)
    flush()
    return annotations


def check_annotations(annotations, pairs, side):
    """Token counts must match the corpus; returns flag notes.

    side is 'source' or 'target'.  A count mismatch raises; unknown POS
    tags are reported, not rejected.
    """
    if len(annotations) < len(pairs) or any(
            p.sent_id >= len(annotations) for p in pairs):
        raise ConsistencyError(
            f"{side} annotations cover {len(annotations)} sentences, "
            f"corpus needs ids up to "
            f"{max(p.sent_id for p in pairs) if pairs else 0}")
    notes = []
    unknown = Counter()
    for pair in pairs:
        ann = annotations[pair.sent_id]
        expect = pair.source if side == "source" else pair.target
        if len(ann) != len(expect):
            raise ConsistencyError(
                f"sentence {pair.sent_id}: {side} has {len(expect)} tokens "
                f"but annotation has {len(ann)}")
        for tag in ann.pos:
            if tag not in UNIVERSAL_POS_TAGS:
                unknown[tag] += 1
    for tag, count in sorted(unknown.items()):
        notes.append(f"unknown POS tag {tag!r} on {count} {side} tokens")
    return notes


@dataclass
class Batch:
    """Padded index matrices; target rows end with the EOS id."""

    src: np.ndarray
    tgt: np.ndarray
    src_mask: np.ndarray
    tgt_mask: np.ndarray
    sent_ids: list

    @property
    def size(self):
        return self.src.shape[0]


def make_batches(pairs, src_vocab, tgt_vocab, batch_size, seed):
    """Shuffle deterministically, pad per batch, build masks."""
    if not pairs:
        return []
    order = np.random.default_rng(seed).permutation(len(pairs))
    batches = []
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start:start + batch_size]]
        s_len = max(len(p.source) for p in chunk)
        t_len = max(len(p.target) for p in chunk) + 1  # room for EOS
        b = len(chunk)
        src = np.full((b, s_len), PAD, dtype=np.int64)
        tgt = np.full((b, t_len), PAD, dtype=np.int64)
        src_mask = np.zeros((b, s_len), dtype=bool)
        tgt_mask = np.zeros((b, t_len), dtype=bool)
        for r, pair in enumerate(chunk):
            s_ids = src_vocab.encode(pair.source)
            t_ids = tgt_vocab.encode(pair.target)
            src[r, : len(s_ids)] = s_ids
            src_mask[r, : len(s_ids)] = True
            tgt[r, : len(t_ids)] = t_ids
            tgt[r, len(t_ids)] = EOS
            tgt_mask[r, : len(t_ids) + 1] = True
        batches.append(Batch(src, tgt, src_mask, tgt_mask,
                             [p.sent_id for p in chunk]))
    return batches


@dataclass
class AttentionRecord:
    """One force-decoded sentence: attention rows plus per-token losses."""

    sent_id: int
    source: list
    target: list
    attention: np.ndarray  # (len(target), len(source))
    word_losses: list
    unk_targets: list = None

    def __post_init__(self):
        self.attention = np.asarray(self.attention, dtype=np.float64)
        if self.attention.shape != (len(self.target), len(self.source)):
            raise ConsistencyError(
                f"sentence {self.sent_id}: attention shape "
                f"{self.attention.shape} != ({len(self.target)}, "
                f"{len(self.source)})")
        if len(self.word_losses) != len(self.target):
            raise ConsistencyError(
                f"sentence {self.sent_id}: {len(self.word_losses)} losses "
                f"for {len(self.target)} target tokens")
        if self.unk_targets is None:
            self.unk_targets = [False] * len(self.target)


def write_attention_records(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            doc = {
                "id": rec.sent_id,
                "source": rec.source,
                "target": rec.target,
                "attention": [list(map(float, row)) for row in rec.attention],
                "word_losses": [float(v) for v in rec.word_losses],
                "unk_targets": [bool(v) for v in rec.unk_targets],
            }
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_attention_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON record: {exc}", path=path,
                                 line=lineno)
            try:
                records.append(AttentionRecord(
                    sent_id=doc["id"], source=doc["source"],
                    target=doc["target"],
                    attention=np.array(doc["attention"], dtype=np.float64),
                    word_losses=doc["word_losses"],
                    unk_targets=doc.get("unk_targets")))
            except KeyError as exc:
                raise ParseError(f"record missing field {exc}", path=path,
                                 line=lineno)
    return records
