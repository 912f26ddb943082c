"""Per-token measurements and their aggregation into reports.

The per-token quantities are the cross entropy from the gold soft
alignment to the attention row (attention loss), the Shannon entropy of
the attention row, and the word prediction loss carried over from
forced decoding.  Aggregations are micro-averages over tokens, Spearman
rank correlations within POS classes, attention-mass accounting against
alignment points, and the distribution of off-alignment mass over
source dependency roles.

All logarithms are natural.  Attention values are floored at LOG_FLOOR
inside logs so masked or degenerate rows cannot produce infinities.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from attnalign import alignment as al
from attnalign.errors import (
    ConsistencyError,
    ContractError,
    DegenerateInputError,
)

LOG_FLOOR = 1e-12

REPORT_SCHEMA = "attnalign-report"
REPORT_VERSION = 1

# role labels merged before reporting: every object variant is one
# class, as are all members of a coordination
DEFAULT_ROLE_MERGE = {
    "obja": "obj", "obja2": "obj", "objc": "obj", "objd": "obj",
    "objg": "obj", "obji": "obj", "objp": "obj",
    "kon": "conj", "cj": "conj", "koord": "conj", "konj": "conj",
}

# source tokens with these POS tags are reported as role "punc"
# regardless of the parser-assigned role
DEFAULT_PUNCT_TAGS = frozenset({"PUNC", "PUNCT", "$.", "$,", "$("})


def attention_loss(soft_row, attention_row):
    """Cross entropy from a soft alignment row to an attention row.

    Zero-weight alignment entries contribute nothing regardless of the
    attention value; attention values are floored at LOG_FLOOR inside
    the log.
    """
    soft_row = np.asarray(soft_row, dtype=np.float64)
    attention_row = np.asarray(attention_row, dtype=np.float64)
    if soft_row.shape != attention_row.shape:
        raise ContractError(
            f"row lengths differ: {soft_row.shape} vs "
            f"{attention_row.shape}")
    support = soft_row > 0.0
    logs = np.log(np.maximum(attention_row[support], LOG_FLOOR))
    return float(-np.sum(soft_row[support] * logs))


def attention_entropy(attention_row):
    """Shannon entropy of an attention row, with 0 log 0 = 0."""
    row = np.asarray(attention_row, dtype=np.float64)
    support = row > 0.0
    return float(-np.sum(row[support] * np.log(row[support])))


def average_ranks(values):
    """1-based ranks; ties share the average of their rank span."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(arr.size)
    sorted_vals = arr[order]
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys):
    """Rank correlation: Pearson correlation of average ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ContractError(
            f"inputs must be equal-length vectors: {xs.shape} vs {ys.shape}")
    if xs.size < 2:
        raise ContractError("need at least two observations")
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    sx = float(np.sqrt(np.mean(rx * rx)))
    sy = float(np.sqrt(np.mean(ry * ry)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError(
            "rank variance is zero; correlation undefined")
    return float(np.mean(rx * ry) / (sx * sy))


def mass_on_alignment(attention_row, aligned_positions):
    """Total attention falling on the aligned source positions."""
    row = np.asarray(attention_row, dtype=np.float64)
    positions = sorted(aligned_positions)
    if positions and (positions[0] < 0 or positions[-1] >= row.size):
        raise ContractError(
            f"aligned position out of range for row of {row.size}")
    if not positions:
        return 0.0
    return float(row[positions].sum())


@dataclass
class TokenRecord:
    """Everything measured about one force-decoded target token."""

    sent_id: int
    position: int
    token: str
    pos_tag: str
    attention_row: np.ndarray
    attention_loss: float
    attention_entropy: float
    word_loss: float
    aligned_sources: tuple
    mass_on_alignment: float
    unaligned: bool


def build_token_records(records, gold_sets, target_annotations,
                        include_possible=True):
    """Join attention export, gold alignments and target POS tags.

    records are AttentionRecords; gold_sets and target_annotations are
    indexed by sentence id.  Raises ConsistencyError listing sentence
    ids that are missing from either side input.
    """
    missing_gold = [r.sent_id for r in records
                    if r.sent_id >= len(gold_sets)]
    missing_ann = [r.sent_id for r in records
                   if r.sent_id >= len(target_annotations)]
    if missing_gold or missing_ann:
        raise ConsistencyError(
            f"sentence ids missing from gold alignments: {missing_gold}; "
            f"from target annotations: {missing_ann}")
    out = []
    for rec in records:
        gold = gold_sets[rec.sent_id]
        ann = target_annotations[rec.sent_id]
        if len(ann) != len(rec.target):
            raise ConsistencyError(
                f"sentence {rec.sent_id}: annotation has {len(ann)} tokens, "
                f"export has {len(rec.target)}")
        src_len = len(rec.source)
        soft = al.to_soft(gold, src_len, len(rec.target), include_possible)
        for t, token in enumerate(rec.target):
            row = rec.attention[t]
            aligned = tuple(sorted(
                gold.aligned_sources(t, include_possible)))
            out.append(TokenRecord(
                sent_id=rec.sent_id,
                position=t,
                token=token,
                pos_tag=ann.pos[t],
                attention_row=row,
                attention_loss=attention_loss(soft[t], row),
                attention_entropy=attention_entropy(row),
                word_loss=float(rec.word_losses[t]),
                aligned_sources=aligned,
                mass_on_alignment=mass_on_alignment(row, aligned),
                unaligned=not aligned,
            ))
    return out


MEASURES = ("attention_loss", "word_loss", "attention_entropy")
_ATTR = {"attention_loss": "attention_loss", "word_loss": "word_loss",
         "attention_entropy": "attention_entropy"}


def aggregate_by_pos(records):
    """Micro-averaged per-POS means; classes ordered by frequency."""
    groups = {}
    for rec in records:
        groups.setdefault(rec.pos_tag, []).append(rec)
    table = {}
    for pos, group in groups.items():
        table[pos] = {
            "count": len(group),
            "attention_loss": float(np.mean(
                [r.attention_loss for r in group])),
            "word_loss": float(np.mean([r.word_loss for r in group])),
            "attention_entropy": float(np.mean(
                [r.attention_entropy for r in group])),
        }
    return table


def correlate_by_pos(records, measure_x, measure_y, min_count=2):
    """Spearman rho of two measures within each POS class.

    Classes with fewer than min_count tokens or with degenerate ranks
    are flagged (value None plus a note) instead of reported.
    """
    if measure_x not in MEASURES or measure_y not in MEASURES:
        raise ContractError(f"measures must be among {MEASURES}")
    groups = {}
    for rec in records:
        groups.setdefault(rec.pos_tag, []).append(rec)
    table = {}
    for pos, group in groups.items():
        if len(group) < max(min_count, 2):
            table[pos] = {"count": len(group), "rho": None,
                          "note": "below minimum class size"}
            continue
        xs = [getattr(r, _ATTR[measure_x]) for r in group]
        ys = [getattr(r, _ATTR[measure_y]) for r in group]
        try:
            rho = spearman(xs, ys)
            table[pos] = {"count": len(group), "rho": rho}
        except DegenerateInputError:
            table[pos] = {"count": len(group), "rho": None,
                          "note": "degenerate ranks"}
    return table


def mass_by_pos(records):
    """Aligned-vs-other attention mass per POS, in percent.

    Unaligned tokens have no alignment points, so they are excluded
    here and reported through the excluded count.
    """
    groups = {}
    excluded = 0
    for rec in records:
        if rec.unaligned:
            excluded += 1
            continue
        groups.setdefault(rec.pos_tag, []).append(rec.mass_on_alignment)
    table = {}
    for pos, masses in groups.items():
        mean = float(np.mean(masses))
        table[pos] = {
            "count": len(masses),
            "to_alignment_pct": 100.0 * mean,
            "to_other_pct": 100.0 * (1.0 - mean),
        }
    overall = ([m for v in groups.values() for m in v])
    summary = None
    if overall:
        mean = float(np.mean(overall))
        summary = {
            "count": len(overall),
            "to_alignment_pct": 100.0 * mean,
            "to_other_pct": 100.0 * (1.0 - mean),
        }
    return table, summary, excluded


def merge_role(role, src_pos, merge_map=None, punct_tags=DEFAULT_PUNCT_TAGS):
    """Apply the reporting merges to one source token's role label."""
    if merge_map is None:
        merge_map = DEFAULT_ROLE_MERGE
    if src_pos in punct_tags:
        return "punc"
    return merge_map.get(role, role)


def role_distribution(records, source_annotations, merge_map=None,
                      punct_tags=DEFAULT_PUNCT_TAGS):
    """Share of off-alignment attention mass per source dependency role.

    For every aligned target token, the attention mass on non-aligned
    source positions is summed per (target POS, merged source role) and
    normalized to shares within each POS class.  Sentences without a
    source annotation and unaligned tokens are skipped; the counts of
    both are returned alongside the table.
    """
    mass = {}
    excluded_sentences = set()
    skipped_tokens = 0
    for rec in records:
        if rec.sent_id >= len(source_annotations):
            excluded_sentences.add(rec.sent_id)
            continue
        if rec.unaligned:
            skipped_tokens += 1
            continue
        ann = source_annotations[rec.sent_id]
        if len(ann) != len(rec.attention_row):
            raise ConsistencyError(
                f"sentence {rec.sent_id}: source annotation has "
                f"{len(ann)} tokens, attention row has "
                f"{len(rec.attention_row)}")
        aligned = set(rec.aligned_sources)
        bucket = mass.setdefault(rec.pos_tag, {})
        for i, weight in enumerate(rec.attention_row):
            if i in aligned or weight == 0.0:
                continue
            role = merge_role(ann.roles[i], ann.pos[i], merge_map,
                              punct_tags)
            bucket[role] = bucket.get(role, 0.0) + float(weight)
    table = {}
    for pos, bucket in mass.items():
        total = sum(bucket.values())
        if total <= 0.0:
            continue
        table[pos] = {role: 100.0 * v / total
                      for role, v in sorted(bucket.items())}
    return table, sorted(excluded_sentences), skipped_tokens


@dataclass
class AnalysisReport:
    """Aggregated analysis results, serializable to JSON and CSV."""

    totals: dict
    pos_means: dict
    correlations: dict
    mass: dict
    mass_overall: dict
    roles: dict
    settings: dict
    notes: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "settings": self.settings,
            "totals": self.totals,
            "pos_means": self.pos_means,
            "correlations": self.correlations,
            "attention_mass": {"per_pos": self.mass,
                               "overall": self.mass_overall},
            "role_distribution": self.roles,
            "notes": self.notes,
        }


CORRELATION_PAIRS = (
    ("word_loss", "attention_loss"),
    ("word_loss", "attention_entropy"),
    ("attention_entropy", "attention_loss"),
)


def build_report(records, export_records, gold_sets, source_annotations,
                 include_possible=True, min_count=2, merge_map=None,
                 punct_tags=DEFAULT_PUNCT_TAGS):
    """Assemble the full AnalysisReport from token records."""
    notes = []
    pos_means = aggregate_by_pos(records)
    correlations = {}
    for mx, my in CORRELATION_PAIRS:
        correlations[f"{mx}__vs__{my}"] = correlate_by_pos(
            records, mx, my, min_count)
    mass, mass_overall, unaligned_count = mass_by_pos(records)
    roles, excluded_ids, skipped = role_distribution(
        records, source_annotations, merge_map, punct_tags)
    if excluded_ids:
        notes.append(
            f"{len(excluded_ids)} sentences lacked source annotations and "
            f"were excluded from the role distribution")
    candidates = [al.attention_to_hard(rec.attention)
                  for rec in export_records]
    golds = [gold_sets[rec.sent_id] for rec in export_records]
    try:
        corpus_aer = al.corpus_aer(candidates, golds)
    except DegenerateInputError:
        corpus_aer = None
    totals = {
        "sentences": len(export_records),
        "tokens": len(records),
        "unaligned_tokens": unaligned_count,
        "mean_attention_loss": float(np.mean(
            [r.attention_loss for r in records])) if records else None,
        "mean_word_loss": float(np.mean(
            [r.word_loss for r in records])) if records else None,
        "mean_attention_entropy": float(np.mean(
            [r.attention_entropy for r in records])) if records else None,
        "aer": corpus_aer,
    }
    settings = {
        "include_possible": include_possible,
        "min_class_count": min_count,
        "log_base": "e",
        "averaging": "micro over tokens, pooled across sentences",
    }
    return AnalysisReport(totals=totals, pos_means=pos_means,
                          correlations=correlations, mass=mass,
                          mass_overall=mass_overall, roles=roles,
                          settings=settings, notes=notes)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_files(report, out_dir):
    """Emit report.json plus one CSV per table; returns written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    json_path = out_dir / "report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    paths.append(json_path)

    def csv_out(name, header, rows):
        path = out_dir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        paths.append(path)

    order = sorted(report.pos_means,
                   key=lambda p: (-report.pos_means[p]["count"], p))
    csv_out("pos_means.csv",
            ["pos", "count", "mean_attention_loss", "mean_word_loss",
             "mean_attention_entropy"],
            [[p, report.pos_means[p]["count"],
              _fmt(report.pos_means[p]["attention_loss"]),
              _fmt(report.pos_means[p]["word_loss"]),
              _fmt(report.pos_means[p]["attention_entropy"])]
             for p in order])

    rows = []
    for pair, table in sorted(report.correlations.items()):
        for pos in sorted(table, key=lambda p: (-table[p]["count"], p)):
            entry = table[pos]
            rows.append([pair, pos, entry["count"], _fmt(entry["rho"]),
                         entry.get("note", "")])
    csv_out("pos_correlations.csv",
            ["pair", "pos", "count", "spearman_rho", "note"], rows)

    order = sorted(report.mass, key=lambda p: (-report.mass[p]["count"], p))
    mass_rows = [[p, report.mass[p]["count"],
                  _fmt(report.mass[p]["to_alignment_pct"]),
                  _fmt(report.mass[p]["to_other_pct"])] for p in order]
    if report.mass_overall:
        mass_rows.append(["Overall", report.mass_overall["count"],
                          _fmt(report.mass_overall["to_alignment_pct"]),
                          _fmt(report.mass_overall["to_other_pct"])])
    csv_out("attention_mass.csv",
            ["pos", "count", "to_alignment_pct", "to_other_pct"], mass_rows)

    rows = []
    for pos in sorted(report.roles):
        shares = report.roles[pos]
        for role in sorted(shares, key=lambda r: (-shares[r], r)):
            rows.append([pos, role, _fmt(shares[role])])
    csv_out("role_distribution.csv", ["pos", "role", "share_pct"], rows)
    return paths
