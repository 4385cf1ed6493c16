"""binsbom command-line tool.

Subcommands mirror the pipeline stages: scan binaries, build a corpus,
train the matcher, evaluate it, index product names, match single strings,
and emit a reduced SBOM. Machine-readable JSON goes to stdout (or --out,
written atomically); --pretty adds aligned text tables; eval's --figures
renders charts to files alongside the report.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 protocol error.
"""

import argparse
import contextlib
import logging
import os
import sys

from . import __version__, binscan, corpus, evalx, sbomgen
from .encoder import EmbeddingModel
from .errors import (
    DimensionMismatch,
    EndpointUnavailable,
    IoError,
    ProtocolError,
)
from .simtrain import Similarity, TrainConfig
from .tokenizer import DEFAULT_MAX_LEN, DEFAULT_TARGET_SIZE, WordPieceVocab, train_vocab
from .util import atomic_write, canonical_json

logger = logging.getLogger("binsbom")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_PROTOCOL = 3


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    return int(os.environ.get("BINSBOM_SEED", "0"))


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=1)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--similarity", choices=["cosine", "dot"], default="cosine")


def _add_model_source_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", help="trained model JSON file")
    parser.add_argument("--vocab", help="vocabulary JSON file")
    parser.add_argument("--external-encoder", metavar="ENDPOINT",
                        help="external encoder endpoint (tcp:HOST:PORT or a command line)")


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size, epochs=args.epochs, learning_rate=args.lr,
        similarity=Similarity(args.similarity), seed=seed,
    )


@contextlib.contextmanager
def _make_embedder(args):
    if args.external_encoder:
        embedder = sbomgen.ExternalEmbedder(args.external_encoder)
        try:
            yield embedder
        finally:
            embedder.close()
        return
    if not args.model or not args.vocab:
        raise ValueError("need --model and --vocab (or --external-encoder)")
    yield sbomgen.ModelEmbedder(
        EmbeddingModel.load(args.model), WordPieceVocab.load(args.vocab)
    )


def cmd_scan(args) -> int:
    reports = [
        binscan.scan_file(path, min_len=args.min_len, pattern=args.pattern)
        for path in args.paths
    ]
    lines = [canonical_json(r.to_json_dict()) for r in reports]
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def cmd_corpus_synth(args) -> int:
    records = corpus.synth_corpus(args.products, args.per_product, seed=args.seed)
    corpus.save_jsonl(records, args.out)
    logger.info("wrote %d records to %s", len(records), args.out)
    return EXIT_OK


def cmd_corpus_ingest(args) -> int:
    files = []
    for path in args.files:
        try:
            with open(path, "rb") as fh:
                files.append((path, fh.read()))
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
    records = corpus.ingest_package(
        files, args.product, args.package, args.version,
        min_len=args.min_len, pattern=args.pattern,
    )
    corpus.save_jsonl(records, args.out)
    logger.info("wrote %d records to %s", len(records), args.out)
    return EXIT_OK


def cmd_corpus_pairs(args) -> int:
    records = corpus.load_records_jsonl(args.records)
    pairs = corpus.make_pairs(records, args.negatives, seed=args.seed)
    corpus.save_jsonl(pairs, args.out)
    logger.info("wrote %d pairs to %s", len(pairs), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .encoder import EncoderConfig, init_model
    from .simtrain import train

    pairs = corpus.load_pairs_jsonl(args.pairs)
    if os.path.exists(args.vocab):
        vocab = WordPieceVocab.load(args.vocab)
    else:
        texts = [p.product for p in pairs] + [p.version_string for p in pairs]
        vocab = train_vocab(texts, target_size=args.vocab_size, max_len=args.max_len)
        vocab.save(args.vocab)
        logger.info("trained vocabulary of %d pieces -> %s", len(vocab), args.vocab)
    config = EncoderConfig(
        vocab_size=len(vocab), embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim, pad_id=vocab.pad_id, seed=args.seed,
    )
    model, report = train(init_model(config), vocab, pairs, _train_config(args, args.seed))
    model.save(args.model)
    logger.info("trained model -> %s", args.model)
    _emit(canonical_json(report.to_json_dict()), args.out)
    return EXIT_OK


def _eval_report_json(mode, seed, config, result) -> dict:
    return {
        "mode": mode,
        "seed": seed,
        "config": config,
        "n_train_pairs": result.n_train_pairs,
        "n_test_pairs": result.n_test_pairs,
        "metrics": result.metrics.to_json_dict(),
        "train_loss": result.train_loss.to_json_dict(),
    }


def cmd_eval(args) -> int:
    records = corpus.load_records_jsonl(args.records)
    train_config = _train_config(args, args.seed)
    shared = dict(
        negatives_per_positive=args.negatives,
        embed_dim=args.embed_dim,
        vocab_target_size=args.vocab_size,
        threshold=args.threshold,
        root_seed=args.seed,
    )
    config_blob = {
        **shared,
        "batch_size": args.batch_size, "epochs": args.epochs, "lr": args.lr,
        "similarity": args.similarity, "mode": args.mode,
    }

    if args.sweep:
        epochs_list = tuple(int(tok) for tok in args.sweep.split(","))
        spec = corpus.SplitSpec(
            mode=corpus.SplitMode.ZERO_SHOT,
            k_classes=args.k_classes, n_per_class=args.n_per_class,
        )
        entries = evalx.run_epoch_sweep(
            records, spec, train_config, epochs_list, **shared
        )
        report = {
            "mode": "epoch-sweep", "seed": args.seed, "config": config_blob,
            "rows": [
                {
                    "epochs": e.epochs,
                    "metrics": e.result.metrics.to_json_dict(),
                    "train_loss": e.result.train_loss.to_json_dict(),
                    "n_train_pairs": e.result.n_train_pairs,
                    "n_test_pairs": e.result.n_test_pairs,
                }
                for e in entries
            ],
        }
        table_rows = [(str(e.epochs), e.result.metrics) for e in entries]
        label_header = "Epoch"
    else:
        if args.mode == "random":
            spec = corpus.SplitSpec(
                mode=corpus.SplitMode.RANDOM, train_fraction=args.train_fraction
            )
            result = evalx.run_fully_trained(records, spec, train_config, **shared)
            label = "Fully-Trained"
        else:
            spec = corpus.SplitSpec(
                mode=corpus.SplitMode.ZERO_SHOT,
                k_classes=args.k_classes, n_per_class=args.n_per_class,
            )
            result = evalx.run_zero_shot(records, spec, train_config, **shared)
            label = "Zero-Shot"
        report = _eval_report_json(args.mode, args.seed, config_blob, result)
        table_rows = [(label, result.metrics)]
        label_header = "Inference Type"

    _emit(canonical_json(report), args.out)
    if args.pretty:
        print(evalx.render_metrics_table(table_rows, label_header=label_header))
    if args.figures:
        from . import figures  # matplotlib import deferred to the report path

        os.makedirs(args.figures, exist_ok=True)
        figures.save_metrics_bars(table_rows, os.path.join(args.figures, "metrics.png"))
        if args.sweep:
            figures.save_sweep_curves(entries, os.path.join(args.figures, "epoch_sweep.png"))
            figures.save_loss_curve(
                entries[-1].result.train_loss, os.path.join(args.figures, "train_loss.png")
            )
            scored = entries[-1].result.scored
        else:
            figures.save_loss_curve(
                result.train_loss, os.path.join(args.figures, "train_loss.png")
            )
            scored = result.scored
        figures.save_score_histogram(
            scored, os.path.join(args.figures, "score_histogram.png")
        )
        if {sp.label for sp in scored} == {0, 1}:
            figures.save_roc_curve(scored, os.path.join(args.figures, "roc_curve.png"))
        logger.info("figures written to %s", args.figures)
    return EXIT_OK


def cmd_index(args) -> int:
    if args.products_file:
        try:
            with open(args.products_file, "r", encoding="utf-8") as fh:
                products = [line.strip() for line in fh if line.strip()]
        except OSError as exc:
            raise IoError(f"cannot read {args.products_file}: {exc}") from exc
    else:
        products = list(args.products)
    if not products:
        raise ValueError("no products given (positional names or --products-file)")
    with _make_embedder(args) as embedder:
        index = sbomgen.build_product_index(embedder, products)
    index.save(args.out)
    logger.info("indexed %d products -> %s", len(products), args.out)
    return EXIT_OK


def cmd_match(args) -> int:
    index = sbomgen.ProductIndex.load(args.index)
    with _make_embedder(args) as embedder:
        result = sbomgen.match_string(
            index, args.string, embedder,
            similarity=Similarity(args.similarity), threshold=args.threshold,
        )
    _emit(canonical_json(result.to_json_dict()), args.out)
    return EXIT_OK


def cmd_sbom(args) -> int:
    index = sbomgen.ProductIndex.load(args.index)
    reports = [
        binscan.scan_file(path, min_len=args.min_len, pattern=args.pattern)
        for path in args.paths
    ]
    with _make_embedder(args) as embedder:
        doc = sbomgen.generate_sbom(
            reports, index, embedder,
            similarity=Similarity(args.similarity), threshold=args.threshold,
            tool_config={"pattern": args.pattern, "min_len": args.min_len},
        )
    if args.feed:
        doc = sbomgen.lookup_cves(doc, sbomgen.load_cve_feed(args.feed))
    _emit(doc.to_json_text(pretty=args.pretty), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binsbom",
        description="Version-string scanning, similarity matching, and reduced SBOM generation.",
    )
    parser.add_argument("--version", action="version", version=f"binsbom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan ELF/PE files for version-string candidates")
    p.add_argument("paths", nargs="+")
    p.add_argument("--min-len", type=int, default=binscan.DEFAULT_MIN_LEN)
    p.add_argument("--pattern", default=binscan.DEFAULT_VERSION_PATTERN)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("corpus", help="build or synthesize labeled corpora")
    corpus_sub = p.add_subparsers(dest="corpus_command", required=True)

    ps = corpus_sub.add_parser("synth", help="generate a synthetic labeled corpus")
    ps.add_argument("--products", type=int, default=30)
    ps.add_argument("--per-product", type=int, default=200)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_corpus_synth)

    ps = corpus_sub.add_parser("ingest", help="scan one package's files into records")
    ps.add_argument("files", nargs="+")
    ps.add_argument("--product", required=True)
    ps.add_argument("--package", required=True)
    ps.add_argument("--version", required=True)
    ps.add_argument("--min-len", type=int, default=binscan.DEFAULT_MIN_LEN)
    ps.add_argument("--pattern", default=binscan.DEFAULT_VERSION_PATTERN)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_corpus_ingest)

    ps = corpus_sub.add_parser("pairs", help="generate labeled pairs from records")
    ps.add_argument("--records", required=True)
    ps.add_argument("--negatives", type=int, default=1)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_corpus_pairs)

    p = sub.add_parser("train", help="train the siamese matcher on labeled pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--vocab", required=True,
                   help="vocabulary file; trained from the pairs if missing")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--vocab-size", type=int, default=DEFAULT_TARGET_SIZE)
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=None)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run a desk-scale experiment and report metrics")
    p.add_argument("--records", required=True)
    p.add_argument("--mode", choices=["random", "zero-shot"], default="random")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--k-classes", type=int, default=20)
    p.add_argument("--n-per-class", type=int, default=4000)
    p.add_argument("--negatives", type=int, default=1)
    p.add_argument("--vocab-size", type=int, default=DEFAULT_TARGET_SIZE)
    p.add_argument("--embed-dim", type=int, default=32)
    _add_train_flags(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--sweep", metavar="EPOCHS",
                   help="comma-separated epoch counts; runs the zero-shot epoch sweep")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--figures", metavar="DIR",
                   help="render metric/score/loss figures into DIR")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("index", help="encode product names into a match index")
    p.add_argument("products", nargs="*")
    p.add_argument("--products-file")
    _add_model_source_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("match", help="match one version string against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--string", required=True)
    _add_model_source_flags(p)
    p.add_argument("--similarity", choices=["cosine", "dot"], default="cosine")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("sbom", help="scan binaries and emit a reduced SBOM")
    p.add_argument("paths", nargs="+")
    p.add_argument("--index", required=True)
    _add_model_source_flags(p)
    p.add_argument("--feed", help="local CVE feed (JSONL) for vulnerability lookup")
    p.add_argument("--similarity", choices=["cosine", "dot"], default="cosine")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-len", type=int, default=binscan.DEFAULT_MIN_LEN)
    p.add_argument("--pattern", default=binscan.DEFAULT_VERSION_PATTERN)
    p.add_argument("--out")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_sbom)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="binsbom: %(message)s")
    if hasattr(args, "seed"):
        args.seed = _resolve_seed(args.seed)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None}
    logger.info("v%s resolved config: %s", __version__, canonical_json(resolved))
    try:
        return args.func(args)
    except (ProtocolError, EndpointUnavailable, DimensionMismatch) as exc:
        print(f"binsbom: protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (IoError, OSError) as exc:
        print(f"binsbom: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"binsbom: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
