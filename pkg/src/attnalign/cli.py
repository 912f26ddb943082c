"""Command-line pipeline: train, force-decode, analyze, heatmap, aer.

Every subcommand accepts --config pointing at a JSON object whose keys
are the subcommand's option names (dashes or underscores); explicit
command-line flags override config values.  Outputs are deterministic
for fixed inputs and seed.

Exit codes: 0 success, 1 runtime failure (bad data, divergence),
2 usage or configuration error (unknown flags, missing files).
Set ATTNALIGN_VERBOSE=1 for progress lines on stderr.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from attnalign import __version__
from attnalign import alignment as al
from attnalign import data as dt
from attnalign import kernels
from attnalign import metrics as mt
from attnalign import model as md
from attnalign.errors import AttnAlignError, ConfigError
from attnalign.heatmap import render_heatmap

# options marked required are checked after the config merge, so they
# may come from either the command line or the config file
REQUIRED = {
    "train": ("source", "target", "out"),
    "force-decode": ("checkpoint", "source", "target", "out"),
    "analyze": ("export", "alignments", "target_annotations", "out"),
    "heatmap": ("export", "out"),
    "aer": ("gold",),
}


def _verbose():
    return os.environ.get("ATTNALIGN_VERBOSE", "") not in ("", "0")


def _note(message):
    if _verbose():
        print(message, file=sys.stderr)


def _require_files(args, fields):
    for field in fields:
        value = getattr(args, field, None)
        if value is None:
            continue
        if not Path(value).exists():
            raise ConfigError(f"--{field.replace('_', '-')}: no such file: "
                              f"{value}")


def _parse_pairs(path):
    """Directed alignment file -> list of link sets (markers ignored)."""
    return [aset.possible for aset in dt.load_alignments(path)]


def cmd_train(args):
    _require_files(args, ["source", "target"])
    preset = dict(md.PRESETS[args.preset])
    for key in ("dim", "layers", "dropout", "epochs", "batch_size",
                "learning_rate", "clip_norm", "decay", "decay_from",
                "decay_floor", "vocab_size", "max_len"):
        if getattr(args, key) is not None:
            preset[key] = getattr(args, key)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    pairs = dt.load_parallel(args.source, args.target,
                             max_len=preset["max_len"])
    if not pairs:
        raise ConfigError("training corpus is empty after filtering")
    src_vocab = dt.build_vocab((p.source for p in pairs),
                               preset["vocab_size"])
    tgt_vocab = dt.build_vocab((p.target for p in pairs),
                               preset["vocab_size"])
    config = md.ModelConfig(
        src_vocab_size=len(src_vocab), tgt_vocab_size=len(tgt_vocab),
        dim=preset["dim"], layers=preset["layers"],
        attention=args.attention, dropout=preset["dropout"],
        seed=args.seed)
    model = md.AttentionModel(config)

    manifest = {
        "command": "train",
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "preset": args.preset,
        "resolved": dict(preset, attention=args.attention, seed=args.seed),
        "sentences": len(pairs),
        "source": str(args.source),
        "target": str(args.target),
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    losses = md.train_model(
        model, pairs, src_vocab, tgt_vocab, epochs=preset["epochs"],
        learning_rate=preset["learning_rate"],
        clip_norm=preset["clip_norm"], batch_size=preset["batch_size"],
        decay=preset["decay"], decay_from=preset["decay_from"],
        decay_floor=preset["decay_floor"],
        seed=args.seed, checkpoint_dir=out_dir,
        log_fn=lambda e, v: _note(f"epoch {e + 1}: loss {v:.4f}"))
    with open(out_dir / "loss_log.json", "w", encoding="utf-8") as fh:
        json.dump({"per_epoch_mean_loss": losses}, fh, indent=2)
        fh.write("\n")
    md.save_model(out_dir / "model.ckpt", model, src_vocab, tgt_vocab)
    print(f"trained {preset['epochs']} epochs; final loss "
          f"{losses[-1]:.6f}; checkpoint {out_dir / 'model.ckpt'}")
    return 0


def cmd_force_decode(args):
    _require_files(args, ["checkpoint", "source", "target"])
    model, src_vocab, tgt_vocab = md.load_model(args.checkpoint)
    pairs = dt.load_parallel(args.source, args.target)
    records = []
    for pair in pairs:
        steps = md.force_decode(model, pair.source, pair.target, src_vocab,
                                tgt_vocab)
        records.append(dt.AttentionRecord(
            sent_id=pair.sent_id,
            source=pair.source,
            target=pair.target,
            attention=np.stack([s.attention for s in steps]),
            word_losses=[s.word_loss for s in steps],
            unk_targets=[s.unk_target for s in steps]))
        _note(f"decoded sentence {pair.sent_id}")
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    dt.write_attention_records(out, records)
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_analyze(args):
    _require_files(args, ["export", "alignments", "target_annotations",
                          "source_annotations", "role_merge"])
    records = dt.read_attention_records(args.export)
    golds = dt.load_alignments(args.alignments)
    tgt_ann = dt.load_annotations(args.target_annotations)
    src_ann = (dt.load_annotations(args.source_annotations)
               if args.source_annotations else [])
    merge_map = None
    if args.role_merge:
        with open(args.role_merge, encoding="utf-8") as fh:
            merge_map = json.load(fh)
        if not isinstance(merge_map, dict):
            raise ConfigError("role merge file must map labels to groups")
    include_possible = not args.sure_only
    tokens = mt.build_token_records(records, golds, tgt_ann,
                                    include_possible)
    report = mt.build_report(
        tokens, records, golds, src_ann,
        include_possible=include_possible, min_count=args.min_class_count,
        merge_map=merge_map)
    paths = mt.write_report_files(report, Path(args.out))
    for note in report.notes:
        _note(f"note: {note}")
    print(f"analyzed {report.totals['sentences']} sentences, "
          f"{report.totals['tokens']} tokens; wrote "
          f"{len(paths)} files to {args.out}")
    return 0


def cmd_heatmap(args):
    _require_files(args, ["export", "alignments"])
    records = dt.read_attention_records(args.export)
    by_id = {rec.sent_id: rec for rec in records}
    golds = dt.load_alignments(args.alignments) if args.alignments else None
    if args.ids:
        wanted = [int(v) for v in str(args.ids).split(",")]
        unknown = [i for i in wanted if i not in by_id]
        if unknown:
            raise ConfigError(
                f"unknown sentence ids {unknown}; available: "
                f"{sorted(by_id)}")
    else:
        wanted = sorted(by_id)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for sent_id in wanted:
        rec = by_id[sent_id]
        links = None
        if golds is not None:
            if sent_id >= len(golds):
                raise ConfigError(
                    f"gold alignments have no line for sentence {sent_id}")
            links = golds[sent_id].possible
        svg = render_heatmap(rec.source, rec.target, rec.attention, links)
        path = out_dir / f"heatmap_{sent_id:05d}.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)
    print(f"wrote {len(written)} heatmaps to {out_dir}")
    return 0


def cmd_aer(args):
    _require_files(args, ["gold", "export", "forward", "backward",
                          "source", "target"])
    golds = dt.load_alignments(args.gold)
    printed = False
    if args.export:
        records = dt.read_attention_records(args.export)
        for rec in records:
            if rec.sent_id >= len(golds):
                raise ConfigError(
                    f"gold alignments have no line for sentence "
                    f"{rec.sent_id}")
        cands = [al.attention_to_hard(rec.attention) for rec in records]
        used = [golds[rec.sent_id] for rec in records]
        print(f"attention {al.corpus_aer(cands, used):.6f}")
        printed = True
    if args.forward or args.backward:
        if not (args.forward and args.backward):
            raise ConfigError("--forward and --backward must be given "
                              "together")
        fwd = _parse_pairs(args.forward)
        bwd = _parse_pairs(args.backward)
        if len(fwd) != len(bwd) or len(fwd) != len(golds):
            raise ConfigError(
                f"line counts differ: forward {len(fwd)}, backward "
                f"{len(bwd)}, gold {len(golds)}")
        bounds = None
        if args.source and args.target:
            corpus = dt.load_parallel(args.source, args.target)
            bounds = {p.sent_id: (len(p.source), len(p.target))
                      for p in corpus}
        cands = []
        for i, (f_links, b_links) in enumerate(zip(fwd, bwd)):
            if bounds is not None and i in bounds:
                src_len, tgt_len = bounds[i]
            else:
                every = f_links | b_links | golds[i].possible
                src_len = max((s for s, _ in every), default=0) + 1
                tgt_len = max((t for _, t in every), default=0) + 1
            cands.append(al.symmetrize_gdfa(f_links, b_links, src_len,
                                            tgt_len))
        print(f"gdfa {al.corpus_aer(cands, golds):.6f}")
        printed = True
    if not printed:
        raise ConfigError("give --export and/or --forward/--backward")
    return 0


def build_parser(suppress=False):
    kw = {"default": argparse.SUPPRESS} if suppress else {}

    parser = argparse.ArgumentParser(
        prog="attnalign",
        description="attention-vs-alignment diagnostics for LSTM "
                    "encoder-decoder translation models")
    parser.add_argument("--version", action="version",
                        version=f"attnalign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def opt(p, name, **kwargs):
        if suppress:
            kwargs["default"] = argparse.SUPPRESS
        p.add_argument(name, **kwargs)

    p = sub.add_parser("train", help="train a model on a parallel corpus")
    p.set_defaults(func=cmd_train)
    opt(p, "--config", help="JSON file with option defaults")
    opt(p, "--source", help="source corpus file")
    opt(p, "--target", help="target corpus file")
    opt(p, "--out", help="output directory")
    opt(p, "--preset", choices=sorted(md.PRESETS),
        **({} if suppress else {"default": "desk"}))
    opt(p, "--attention", choices=md.VARIANTS,
        **({} if suppress else {"default": "input_feeding"}))
    opt(p, "--seed", type=int, **({} if suppress else {"default": 0}))
    for name, conv in (("dim", int), ("layers", int), ("dropout", float),
                       ("epochs", int), ("batch-size", int),
                       ("learning-rate", float), ("clip-norm", float),
                       ("decay", float), ("decay-from", int),
                       ("decay-floor", float),
                       ("vocab-size", int), ("max-len", int)):
        opt(p, f"--{name}", type=conv, help="override the preset value")

    p = sub.add_parser("force-decode",
                       help="teacher-forced decode; exports attention")
    p.set_defaults(func=cmd_force_decode)
    for name in ("--config", "--checkpoint", "--source", "--target",
                 "--out"):
        opt(p, name)

    p = sub.add_parser("analyze",
                       help="compute the report from an attention export")
    p.set_defaults(func=cmd_analyze)
    for name in ("--config", "--export", "--alignments",
                 "--target-annotations", "--source-annotations", "--out",
                 "--role-merge"):
        opt(p, name)
    opt(p, "--sure-only", action="store_true",
        help="exclude possible links from the soft conversion")
    opt(p, "--min-class-count", type=int,
        **({} if suppress else {"default": 2}))

    p = sub.add_parser("heatmap", help="render attention grids as SVG")
    p.set_defaults(func=cmd_heatmap)
    for name in ("--config", "--export", "--out", "--ids", "--alignments"):
        opt(p, name)

    p = sub.add_parser("aer", help="alignment error rate of candidates")
    p.set_defaults(func=cmd_aer)
    for name in ("--config", "--gold", "--export", "--forward",
                 "--backward", "--source", "--target"):
        opt(p, name)
    return parser


def _merge_config(args, explicit):
    """Overlay config-file values under explicitly given flags."""
    if getattr(args, "config", None) is None:
        return args
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest in ("config", "command", "func") or \
                not hasattr(args, dest):
            raise ConfigError(f"unknown config field {key!r} for "
                              f"command {args.command!r}")
        if dest not in explicit:
            setattr(args, dest, value)
    return args


def _check_required(args):
    for field in REQUIRED[args.command]:
        if getattr(args, field, None) is None:
            raise ConfigError(
                f"missing required option --{field.replace('_', '-')} "
                f"(give it on the command line or in --config)")


def main(argv=None):
    parser = build_parser(suppress=False)
    args = parser.parse_args(argv)
    explicit = vars(build_parser(suppress=True).parse_args(argv))
    try:
        args = _merge_config(args, explicit)
        _check_required(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AttnAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
