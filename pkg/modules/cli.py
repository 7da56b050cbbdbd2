# coding: utf-8
"""
Command Line
============
    python app.py ingest   --csv PATH --out DIR
    python app.py correct  --csv PATH --out PATH --report PATH
    python app.py eda      --csv PATH --ngrams N --out DIR
    python app.py train    --config PATH --out DIR
    python app.py evaluate --checkpoints DIR --test PATH
    python app.py ensemble --spec PATH --test PATH
    python app.py predict  --models DIR --text "..." [--gold-sentiment S] [--cam]

stdout carries one JSON record per result line, stderr the log.
Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 span, 6 tokenizer,
7 numeric, 8 model, 9 I/O, 1 anything else.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .config import EnsembleSpec, ExperimentConfig, load_config, parse_flat, resolve_config_path
from .corpus import (
    Sample, Sentiment, correct_corpus, correction_report_lines, jaccard_distribution, length_statistics,
    load_csv, ngram_counts, preprocess_sample, sentiment_distribution, top_ngrams, write_csv
)
from .errors import IO_EXIT_CODE, ConfigError, SpanSentError

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def emit(record: Dict[str, Any]):
    """One sorted-key JSON line on stdout."""
    sys.stdout.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def emit_frame(frame: pd.DataFrame):
    for row in frame.to_dict(orient="records"):
        emit(row)


def load_corpus(config: ExperimentConfig) -> List[Sample]:
    """The configured CSV, or the synthetic benchmark when none is set."""
    if config.csv_path:
        return load_csv(config.csv_path)
    from .synthetic import SyntheticTweetGenerator

    logger.info(f"No csv_path configured, generating {config.synthetic_samples} synthetic samples")
    return SyntheticTweetGenerator(seed=config.seed).generate(n_samples=config.synthetic_samples)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_ingest(args: argparse.Namespace) -> int:
    samples = [preprocess_sample(s) for s in load_csv(args.csv)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(samples, out / "preprocessed.csv")
    distribution = sentiment_distribution(samples)
    distribution.to_csv(out / "sentiment_distribution.csv", index=False, lineterminator="\n")
    length_statistics(samples).to_csv(out / "length_statistics.csv", index=False, lineterminator="\n")

    record = {'n_samples': len(samples)}
    record.update({row['sentiment']: int(row['count']) for _, row in distribution.iterrows()})
    emit(record)
    return 0


def cmd_correct(args: argparse.Namespace) -> int:
    corrected, report = correct_corpus(load_csv(args.csv))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(corrected, args.out)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text("\n".join(correction_report_lines(report)) + "\n", encoding="utf-8")
    emit({
        'n_total': report.n_total,
        'n_nonneutral': report.n_nonneutral,
        'n_corrected': report.n_corrected,
        'n_unrecoverable': report.n_unrecoverable,
        'fraction_corrected': report.fraction_corrected,
    })
    return 0


def cmd_eda(args: argparse.Namespace) -> int:
    from .visualization import create_jaccard_histogram_chart, create_ngram_chart, create_sentiment_distribution_chart

    if args.ngrams < 1:
        raise ConfigError(f"--ngrams must be >= 1, got {args.ngrams}")
    samples = load_csv(args.csv)
    out = Path(args.out)
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)

    rows = []
    for n in range(1, args.ngrams + 1):
        for sentiment in Sentiment:
            table = ngram_counts(samples, n, sentiment)
            rows.extend(
                {'n': n, 'sentiment': sentiment.label, 'rank': rank, 'gram': gram, 'count': count}
                for rank, (gram, count) in enumerate(top_ngrams(table, args.top), start=1)
            )
            create_ngram_chart(table, args.top).write_html(
                plots / f"ngrams_{n}_{sentiment.label}.html", include_plotlyjs="cdn", div_id=f"ngrams-{n}-{sentiment.label}"
            )
    pd.DataFrame(rows, columns=['n', 'sentiment', 'rank', 'gram', 'count']).to_csv(
        out / "ngrams.csv", index=False, lineterminator="\n"
    )

    distribution = sentiment_distribution(samples)
    distribution.to_csv(out / "sentiment_distribution.csv", index=False, lineterminator="\n")
    lengths = {
        s.label: [len(x.text) for x in samples if x.sentiment is s] for s in Sentiment
    }
    create_sentiment_distribution_chart(
        {row['sentiment']: int(row['count']) for _, row in distribution.iterrows()}, lengths
    ).write_html(plots / "sentiment_distribution.html", include_plotlyjs="cdn", div_id="sentiment-distribution")

    histograms = jaccard_distribution(samples)
    hist_rows = [
        {'sentiment': s.label, 'bin_start': float(h.edges[i]), 'bin_end': float(h.edges[i + 1]), 'count': int(c)}
        for s, h in histograms.items() for i, c in enumerate(h.counts)
    ]
    pd.DataFrame(hist_rows, columns=['sentiment', 'bin_start', 'bin_end', 'count']).to_csv(
        out / "jaccard_histogram.csv", index=False, lineterminator="\n"
    )
    create_jaccard_histogram_chart(histograms).write_html(
        plots / "jaccard_histogram.html", include_plotlyjs="cdn", div_id="jaccard-histogram"
    )
    emit({'n_samples': len(samples), 'ngram_orders': args.ngrams, 'out': str(out)})
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from .evaluation import run_experiment

    config = load_config(resolve_config_path(args.config))
    report = run_experiment(config, load_corpus(config), out_dir=args.out)
    mean, std = report.mean_std()
    record = {
        'experiment': report.experiment,
        'seed': report.seed,
        'config_hash': report.config_hash,
        'metric': report.metric_name,
        'mean': mean,
        'std': std,
        'out': str(args.out),
    }
    summary = report.ensemble_summary()
    if summary is not None:
        record['test'] = summary
    emit(record)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .evaluation import evaluate_checkpoints

    emit_frame(evaluate_checkpoints(args.checkpoints, load_csv(args.test)))
    return 0


def cmd_ensemble(args: argparse.Namespace) -> int:
    from .evaluation import evaluate_ensemble

    spec_path = Path(args.spec)
    try:
        spec = EnsembleSpec(**parse_flat(spec_path.read_text(encoding="utf-8")))
    except ValueError as e:
        raise ConfigError(f"Invalid ensemble spec {spec_path}: {e}") from e
    frame = evaluate_ensemble(spec, load_csv(args.test), base_dir=spec_path.parent)
    emit_frame(frame[frame['member'] == 'ensemble'])
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    from .pipeline import ModelBundle, to_record

    pipeline = ModelBundle.load(args.models, share_encoder=args.share_encoder).pipeline()
    gold = Sentiment.from_label(args.gold_sentiment) if args.gold_sentiment else None
    prediction = pipeline.predict(args.text, gold_sentiment=gold, use_coverage=not args.no_coverage)
    activation = pipeline.cam(args.text) if args.cam else None
    emit(to_record(args.text, prediction, activation).model_dump(mode="json"))
    return 0


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spansent",
        description="Tweet sentiment classification and subsentence extraction."
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging on stderr.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="Load and preprocess a dataset CSV, report class counts.")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="Output directory.")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("correct", help="Fix word-fragment labels and write a correction report.")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="Corrected CSV path.")
    p.add_argument("--report", required=True, help="Correction report path.")
    p.set_defaults(handler=cmd_correct)

    p = sub.add_parser("eda", help="N-gram tables, sentiment distribution and Jaccard histograms.")
    p.add_argument("--csv", required=True)
    p.add_argument("--ngrams", type=int, default=2, help="Highest n-gram order.")
    p.add_argument("--top", type=int, default=10, help="Grams kept per table.")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eda)

    p = sub.add_parser("train", help="Cross-validated training of one experiment.")
    p.add_argument("--config", default=None, help="Config file (overridden by $SPANSENT_CONFIG).")
    p.add_argument("--out", required=True, help="Experiment directory.")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="Score fold checkpoints and their ensemble on a test CSV.")
    p.add_argument("--checkpoints", required=True, help="Experiment directory.")
    p.add_argument("--test", required=True)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ensemble", help="Weighted fusion of listed checkpoints, scored on a test CSV.")
    p.add_argument("--spec", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(handler=cmd_ensemble)

    p = sub.add_parser("predict", help="Sentiment and subsentence for one sentence.")
    p.add_argument("--models", required=True, help="Directory holding classifier/, span/ and coverage/.")
    p.add_argument("--text", required=True)
    p.add_argument("--gold-sentiment", choices=[s.label for s in Sentiment], default=None)
    p.add_argument("--cam", action="store_true", help="Add per-token class activations.")
    p.add_argument("--no-coverage", action="store_true", help="Skip coverage refinement.")
    p.add_argument("--share-encoder", action="store_true", help="Coverage stage reuses the span encoder.")
    p.set_defaults(handler=cmd_predict)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except SpanSentError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return IO_EXIT_CODE
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return 1
