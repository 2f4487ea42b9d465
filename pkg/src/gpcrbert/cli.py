"""``gpcrbert`` command line: dataset preparation, training, evaluation, analyses, baselines."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import tensorcore as tc
from .checkpoint import CheckpointError, load_model, save_model
from .config import dump_config, load_model_config, load_train_config
from .corpus import (
    CorpusError,
    MotifKind,
    build_motif_dataset,
    build_span_dataset,
    corpus_stats,
    filter_corpus,
    parse_corpus,
    read_pairs,
    split_dataset,
    write_pairs,
)
from .model import ConfigError, forward
from .tokenizer import TOKENS, TokenizerError, encode_all, encode_query, residue_sequence, vocab_csv, vocab_hash

log = logging.getLogger("gpcrbert")

EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_IO = 3


class CommandError(Exception):
    pass


def _out(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _input(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p


# ---------------------------------------------------------------- data


def cmd_prepare(args) -> int:
    records = parse_corpus(_input(args.input), args.format)
    kept = filter_corpus(records, args.max_len)
    kind = MotifKind.parse(args.motif)
    pairs = build_motif_dataset(kept, kind)
    write_pairs(pairs, args.out)
    print(f"{len(pairs)} pairs ({kind.label}) from {len(kept)} of {len(records)} records "
          f"within {args.max_len} residues; {len(kept) - len(pairs)} without a located motif -> {args.out}")
    return 0


def cmd_prepare_span(args) -> int:
    records = parse_corpus(_input(args.input), args.format)
    kept = filter_corpus(records, args.max_len)
    pairs = build_span_dataset(kept, args.start, args.count)
    write_pairs(pairs, args.out)
    print(f"{len(pairs)} pairs (positions {args.start}..{args.start + args.count - 1}) "
          f"from {len(kept)} of {len(records)} records -> {args.out}")
    return 0


def cmd_stats(args) -> int:
    records = parse_corpus(_input(args.input), args.format)
    stats = corpus_stats(records, args.bin_width)
    kept = filter_corpus(records, args.max_len)
    print(f"# {stats.n_records} records, {len(stats.class_counts)} classes, "
          f"{len(kept)} within {args.max_len} residues")
    sys.stdout.write(stats.histogram_csv())
    print()
    sys.stdout.write(stats.classes_csv())
    if args.figures:
        from .plotting import length_histogram

        out = Path(args.figures)
        out.mkdir(parents=True, exist_ok=True)
        (out / "lengths.csv").write_text(stats.histogram_csv())
        (out / "classes.csv").write_text(stats.classes_csv())
        length_histogram(stats, out / "lengths.svg", args.max_len)
    return 0


# ---------------------------------------------------------------- model


def _examples(path: str, max_len: int):
    pairs = read_pairs(_input(path))
    if not pairs:
        raise CommandError(f"{path}: no pairs")
    return encode_all(pairs, max_len)


def cmd_train(args) -> int:
    from .trainer import TrainConfig, train

    model_cfg = load_model_config(args.model_config)
    train_cfg = load_train_config(args.train_config)
    overrides = {k: v for k, v in (("n_runs", args.runs), ("seed", args.seed), ("epochs", args.epochs)) if v is not None}
    if args.freeze_encoder:
        overrides["freeze_encoder"] = True
    train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), **overrides})
    examples = _examples(args.data, model_cfg.max_len)

    def report(run, m):
        log.info("run %d epoch %d loss %.4f acc %.4f lr %.2e", run, m.epoch, m.train_loss, m.train_acc, m.lr)

    result = train(model_cfg, train_cfg, examples, on_epoch=report)
    out = Path(args.out)
    save_model(result.model, out)
    metrics = Path(args.metrics) if args.metrics else out.with_name(out.name + ".metrics.csv")
    metrics.write_text(result.metrics_csv())
    sys.stdout.write(result.summary_text())
    if args.figures:
        from .plotting import training_curves

        Path(args.figures).mkdir(parents=True, exist_ok=True)
        training_curves(result, Path(args.figures) / "training.svg")
    print(f"checkpoint -> {out}; metrics -> {metrics}")
    return 0


def cmd_eval(args) -> int:
    from .baselines import majority_baseline
    from .trainer import evaluate

    model = load_model(_input(args.ckpt))
    examples = _examples(args.data, model.config.max_len)
    loss, acc = evaluate(model, examples)
    labels = np.concatenate([e.label_ids[list(e.mask_positions)] for e in examples])
    _, majority = majority_baseline(labels, labels)
    print(f"pairs {len(examples)}, masked {labels.size}")
    print(f"loss {loss:.6f}")
    print(f"accuracy {acc:.6f}")
    print(f"majority-class accuracy {majority:.6f}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(_input(args.ckpt))
    example = encode_query(args.sequence, model.config.max_len)
    if not example.mask_positions:
        raise CommandError("the sequence has no 'J' positions to predict")
    with tc.no_grad():
        logits = forward(model, example).logits.data[0].astype(np.float64)
    for n, pos in enumerate(example.mask_positions, 1):
        z = logits[pos] - logits[pos].max()
        prob = np.exp(z) / np.exp(z).sum()
        order = np.argsort(-prob, kind="stable")[: args.top]
        print(f"mask {n} at sequence index {pos - 1}:")
        for i in order:
            print(f"  {TOKENS[i]} {prob[i]:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import grad_check
    from .model import ModelConfig

    config = load_model_config(args.model_config) if args.model_config else ModelConfig.tiny()
    report = grad_check(config, dtype=np.float64 if args.float64 else np.float32, seed=args.seed)
    if args.csv:
        Path(args.csv).write_text(report.csv())
    print(report.summary())
    return 0 if report.passed else EXIT_FAIL


def cmd_vocab(args) -> int:
    _out(vocab_csv(), args.out)
    print(f"# vocab sha256 {vocab_hash()}", file=sys.stderr)
    return 0


def cmd_config(args) -> int:
    cfg = load_train_config(args.name) if args.train else load_model_config(args.name)
    _out(dump_config(cfg), args.out)
    return 0


# ---------------------------------------------------------------- analyses


def cmd_attention(args) -> int:
    from . import interpret

    model = load_model(_input(args.ckpt))
    examples = _examples(args.data, model.config.max_len)
    annotations = interpret.read_annotations(_input(args.annotations)) if args.annotations else {}
    if args.limit:
        examples = examples[: args.limit]
    rows = []
    for ex in examples:
        ann = annotations.get(ex.source_id) if args.annotations else None
        if args.annotations and ann is None:
            ann = {}
        rows += interpret.top_k_attention(model, ex, args.k, args.layer, args.include_cls, ann)
    if args.out:
        interpret.write_report(rows, args.out)
    else:
        sys.stdout.write("id,head,mask_pos,rank,seq_index,residue,weight,bw\n")
        for r in rows:
            print(f"{r.id},{r.head},{r.mask_pos},{r.rank},{r.seq_index},{r.residue},{r.weight!r},{r.bw}")
    if args.repetition:
        seqs = {e.source_id: residue_sequence(e) for e in examples}
        classes = {e.source_id: e.receptor_class for e in examples}
        interpret.write_repetitions(interpret.repetition_table(rows, seqs, classes), args.repetition)
    if args.heatmap_svg:
        from .plotting import attention_heatmap_svg

        target = examples[0] if not args.heatmap_id else next((e for e in examples if e.source_id == args.heatmap_id), None)
        if target is None:
            raise CommandError(f"no example with id {args.heatmap_id!r}")
        mats = interpret.attention_matrices(model, target, args.layer)
        width = min(target.length + args.heatmap_pad, mats.shape[-1])
        attention_heatmap_svg(mats[:, :width, :width], args.heatmap_svg, title=target.source_id)
    log.info("%d report rows from %d examples", len(rows), len(examples))
    return 0


def cmd_tsne(args) -> int:
    from .interpret import extract_cls, write_coords
    from .tsne import TsneConfig, tsne

    model = load_model(_input(args.ckpt))
    records = parse_corpus(_input(args.input), args.format)
    emb = extract_cls(model, records)
    if emb.skipped:
        print(f"skipped {len(emb.skipped)} record(s) that do not fit max_len: {', '.join(emb.skipped)}", file=sys.stderr)
    cfg = TsneConfig(perplexity=args.perplexity, iterations=args.iterations, seed=args.seed)
    result = tsne(emb.matrix, cfg)
    write_coords(emb.ids, emb.classes, result.coords, args.out)
    if args.svg:
        from .plotting import tsne_scatter

        tsne_scatter(result.coords, emb.classes, args.svg)
    print(f"{len(emb.ids)} points, KL {result.kl_trace[0]:.4f} -> {result.kl_trace[-1]:.4f} -> {args.out}")
    return 0


def cmd_mutagenesis(args) -> int:
    from . import interpret

    rows = interpret.read_report(_input(args.report))
    annotations = interpret.read_annotations(_input(args.annotations))
    records = interpret.read_mutagenesis(_input(args.mutagenesis))
    classes = sequences = None
    if args.input:
        corpus = parse_corpus(_input(args.input))
        sequences = {r.id: r.sequence for r in corpus}
        classes = {r.id: r.receptor_class for r in corpus}
    matches = interpret.mutagenesis_match(rows, annotations, records, args.window, classes, sequences)
    if args.out:
        interpret.write_matches(matches, args.out)
    else:
        print(",".join(interpret.MATCH_FIELDS))
        for m in matches:
            print(f"{m.id},{m.head},{m.mask_pos},{m.rank},{m.seq_index},{m.residue},{m.bw},{m.match}")
    return 0


def cmd_svm(args) -> int:
    from .baselines import majority_baseline, save_svm, svm_instances, svm_predict, svm_train

    pairs = read_pairs(_input(args.data))
    examples = encode_all(pairs, args.max_len)
    train_set, test_set = split_dataset(examples, args.split_ratio, args.seed)
    if not train_set or not test_set:
        raise CommandError("split leaves an empty train or test set")
    Xtr, ytr = svm_instances(train_set, args.max_len)
    Xte, yte = svm_instances(test_set, args.max_len)
    model = svm_train(Xtr, ytr, args.lam, args.steps, args.seed)
    train_acc = float((svm_predict(model, Xtr) == ytr).mean())
    test_acc = float((svm_predict(model, Xte) == yte).mean())
    majority, majority_acc = majority_baseline(ytr, yte)
    print(f"train instances {len(ytr)}, test instances {len(yte)}, classes {len(model.classes)}")
    print(f"svm train accuracy {train_acc:.6f}")
    print(f"svm test accuracy {test_acc:.6f}")
    print(f"majority ({TOKENS[majority]}) test accuracy {majority_acc:.6f}")
    if args.out:
        save_svm(model, args.out)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpcrbert", description="Masked-residue modelling of GPCR conserved motifs.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def corpus_args(sp):
        sp.add_argument("--input", required=True, help="corpus CSV (id,class,sequence) or FASTA")
        sp.add_argument("--format", choices=["csv", "fasta"], help="override detection by extension")
        sp.add_argument("--max-len", type=int, default=370, help="length filter (default 370)")

    sp = sub.add_parser("prepare", help="build motif-masked pairs")
    corpus_args(sp)
    sp.add_argument("--motif", required=True, choices=["npxxy", "cwxp", "edry"])
    sp.add_argument("--out", required=True, help="pairs CSV to write")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("prepare-span", help="mask a contiguous span of every sequence")
    corpus_args(sp)
    sp.add_argument("--start", type=int, default=100)
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prepare_span)

    sp = sub.add_parser("stats", help="length histogram and class counts")
    corpus_args(sp)
    sp.add_argument("--bin-width", type=int, default=10)
    sp.add_argument("--figures", help="directory for CSV and SVG outputs")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("train", help="train and save run 0's checkpoint")
    sp.add_argument("--data", required=True, help="pairs CSV")
    sp.add_argument("--model-config", help="key = value file or preset name (desk, tiny, full)")
    sp.add_argument("--train-config", help="key = value file")
    sp.add_argument("--runs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--freeze-encoder", action="store_true", help="update only the prediction head")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--metrics", help="per-epoch metrics CSV (default: <out>.metrics.csv)")
    sp.add_argument("--figures", help="directory for training-curve SVG")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="masked loss and accuracy of a checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("predict", help="top residues for each 'J' in a sequence")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--sequence", required=True)
    sp.add_argument("--top", type=int, default=5)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("analyze", help="attention, t-SNE and mutagenesis analyses")
    an = sp.add_subparsers(dest="analysis", required=True)
    ap = an.add_parser("attention", help="top-k attended residues per head and masked position")
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--layer", type=int, default=-1)
    ap.add_argument("--include-cls", action="store_true")
    ap.add_argument("--annotations", help="BW annotations CSV (id,seq_index,bw_label)")
    ap.add_argument("--limit", type=int, help="analyse only the first N pairs")
    ap.add_argument("--out", help="report CSV (default: stdout)")
    ap.add_argument("--repetition", help="per-class repetition table CSV")
    ap.add_argument("--heatmap-svg", help="write per-head heatmaps of one example")
    ap.add_argument("--heatmap-id", help="example id for the heatmap (default: first)")
    ap.add_argument("--heatmap-pad", type=int, default=16, help="padding columns kept in the heatmap")
    ap.set_defaults(func=cmd_attention)
    ap = an.add_parser("tsne", help="t-SNE of final-layer [CLS] embeddings")
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--input", required=True)
    ap.add_argument("--format", choices=["csv", "fasta"])
    ap.add_argument("--out", required=True, help="coordinates CSV")
    ap.add_argument("--svg", help="scatter plot")
    ap.add_argument("--perplexity", type=float, default=15.0)
    ap.add_argument("--iterations", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.set_defaults(func=cmd_tsne)
    ap = an.add_parser("mutagenesis", help="match a report against mutagenesis records")
    ap.add_argument("--report", required=True)
    ap.add_argument("--annotations", required=True)
    ap.add_argument("--mutagenesis", required=True)
    ap.add_argument("--window", type=int, default=5)
    ap.add_argument("--input", help="corpus, to restrict matches by class and name residues")
    ap.add_argument("--out")
    ap.set_defaults(func=cmd_mutagenesis)

    sp = sub.add_parser("baseline", help="non-neural baselines")
    bl = sp.add_subparsers(dest="baseline", required=True)
    bp = bl.add_parser("svm", help="one-vs-rest linear SVM (Pegasos)")
    bp.add_argument("--data", required=True)
    bp.add_argument("--max-len", type=int, default=372)
    bp.add_argument("--lam", type=float, default=1e-4)
    bp.add_argument("--steps", type=int, default=20000)
    bp.add_argument("--split-ratio", type=float, default=0.75)
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--out", help="save the model container")
    bp.set_defaults(func=cmd_svm)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every parameter")
    sp.add_argument("--model-config", help="default: the tiny preset")
    sp.add_argument("--float64", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--csv", help="per-tensor errors")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("vocab", help="vocabulary utilities")
    vs = sp.add_subparsers(dest="vocab_cmd", required=True)
    vp = vs.add_parser("dump", help="write id,token CSV")
    vp.add_argument("--out")
    vp.set_defaults(func=cmd_vocab)

    sp = sub.add_parser("config", help="print a config file for a preset or existing file")
    sp.add_argument("name", nargs="?", help="preset name or config file")
    sp.add_argument("--train", action="store_true", help="train config instead of model config")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_config)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"gpcrbert: error: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        # Reader went away (e.g. piped into head); silence the flush at exit.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_FAIL
    except OSError as exc:
        print(f"gpcrbert: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CommandError, ConfigError, CorpusError, TokenizerError, ValueError, KeyError) as exc:
        print(f"gpcrbert: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
