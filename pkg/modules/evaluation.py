# coding: utf-8
"""
Evaluation
==========
Metrics (Jaccard, precision/recall/F1, ROC AUC, accuracy), the
cross-validated experiment runner and the 24-cell experiment matrix.

Multiclass F1 and AUC are macro averages over one-vs-rest problems.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .config import (
    Dataset, EncoderSize, EnsembleSpec, ExperimentConfig, SpanEncoding, Task, config_hash, dump_config
)
from .corpus import Sample, Sentiment, preprocess_sample
from .errors import DegenerateLabels, LengthMismatch

logger = logging.getLogger(__name__)


# ============================================================================
# METRICS
# ============================================================================

def jaccard(a: str, b: str) -> float:
    """|A & B| / |A | B| over whitespace-split token sets; two empty strings score 1."""
    set_a, set_b = set(a.split()), set(b.split())
    if not set_a and not set_b:
        return 1.0
    common = len(set_a & set_b)
    return common / (len(set_a) + len(set_b) - common)


@dataclass
class ConfusionCounts:
    """Per-class one-vs-rest counts."""
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def __post_init__(self):
        self.tp, self.fp, self.fn, self.tn = (np.atleast_1d(np.asarray(x, dtype=np.int64))
                                              for x in (self.tp, self.fp, self.fn, self.tn))

    @classmethod
    def from_labels(cls, y_true: Sequence[int], y_pred: Sequence[int], n_classes: int = 3) -> "ConfusionCounts":
        y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
        if y_true.shape != y_pred.shape:
            raise LengthMismatch(f"{len(y_true)} labels vs {len(y_pred)} predictions")
        classes = np.arange(n_classes)
        truth = y_true[:, None] == classes
        guess = y_pred[:, None] == classes
        return cls(
            tp=(truth & guess).sum(axis=0),
            fp=(~truth & guess).sum(axis=0),
            fn=(truth & ~guess).sum(axis=0),
            tn=(~truth & ~guess).sum(axis=0),
        )


def _safe_ratio(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    num, den = np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64)
    zero = den == 0
    if zero.any():
        logger.warning(f"{what}: 0/0 for class(es) {np.flatnonzero(zero).tolist()}, scored as 0")
    return np.where(zero, 0.0, num / np.where(zero, 1.0, den))


def precision_recall(counts: ConfusionCounts, average: Optional[str] = "macro") -> Tuple:
    """P = TP/(TP+FP), R = TP/(TP+FN); ``average=None`` keeps per-class arrays."""
    precision = _safe_ratio(counts.tp, counts.tp + counts.fp, "precision")
    recall = _safe_ratio(counts.tp, counts.tp + counts.fn, "recall")
    if average is None:
        return precision, recall
    if average != "macro":
        raise ValueError(f"Unknown average '{average}'. Use 'macro' or None")
    return float(precision.mean()), float(recall.mean())


def f1(counts: ConfusionCounts, average: Optional[str] = "macro"):
    """TP / (TP + (FP + FN) / 2), macro-averaged by default."""
    scores = _safe_ratio(counts.tp, counts.tp + 0.5 * (counts.fp + counts.fn), "f1")
    if average is None:
        return scores
    if average != "macro":
        raise ValueError(f"Unknown average '{average}'. Use 'macro' or None")
    return float(scores.mean())


def accuracy(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{len(y_true)} labels vs {len(y_pred)} predictions")
    if y_true.size == 0:
        return 0.0
    return float((y_true == y_pred).mean())


def _binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"AUC needs both classes, got {n_pos} positive / {n_neg} negative")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc(scores: Sequence, labels: Sequence[int]) -> float:
    """
    ROC AUC by rank sums (tied pairs count one half).

    1-D ``scores`` with 0/1 labels is the binary case. (n, C) scores with
    integer labels give the macro average of the C one-vs-rest AUCs.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape[0] != labels.shape[0]:
        raise LengthMismatch(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    if scores.ndim == 1:
        return _binary_auc(scores, labels.astype(bool))
    per_class = [_binary_auc(scores[:, c], labels == c) for c in range(scores.shape[1])]
    return float(np.mean(per_class))


def classification_metrics(probs: np.ndarray, labels: Sequence[int]) -> Dict[str, float]:
    """accuracy, macro precision/recall/F1 and macro AUC (NaN when a class is missing)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    predictions = probs.argmax(axis=1) if probs.size else np.zeros(0, dtype=np.int64)
    counts = ConfusionCounts.from_labels(labels, predictions, n_classes=len(Sentiment))
    precision, recall = precision_recall(counts)
    try:
        area = auc(probs, labels)
    except DegenerateLabels as e:
        logger.warning(f"AUC undefined: {e}")
        area = float("nan")
    return {
        'accuracy': accuracy(labels, predictions),
        'precision': precision,
        'recall': recall,
        'f1': f1(counts),
        'auc': area,
    }


# ============================================================================
# REPORTS
# ============================================================================

def primary_metric(task: Task) -> str:
    return 'f1' if task == Task.SC else 'jaccard'


def ensemble_report(member_metrics: Sequence[float], ensemble_metric: float) -> Dict[str, float]:
    """Average member score against the fused model's score."""
    members = np.asarray(member_metrics, dtype=np.float64)
    if members.size == 0:
        raise LengthMismatch("ensemble report needs at least one member score")
    return {
        'members_mean': float(members.mean()),
        'members_std': float(members.std(ddof=0)),
        'ensemble': float(ensemble_metric),
        'gain': float(ensemble_metric - members.mean()),
    }


@dataclass
class FoldReport:
    """
    Cross-validation results of one experiment.

    Attributes:
        history: one row per (fold, epoch) with train_loss, lr and validation metrics
        best: one row per fold, the epoch kept as that fold's checkpoint
        test: one row per fold model plus an ``ensemble`` row on the held-out split
    """
    experiment: str
    metric_name: str
    seed: int
    config_hash: str
    history: pd.DataFrame
    best: pd.DataFrame
    test: Optional[pd.DataFrame] = None

    @property
    def n_folds(self) -> int:
        return int(self.best['fold'].nunique())

    def fold_values(self, metric: Optional[str] = None) -> np.ndarray:
        return self.best[metric or self.metric_name].to_numpy(dtype=np.float64)

    def mean_std(self, metric: Optional[str] = None) -> Tuple[float, float]:
        values = self.fold_values(metric)
        return float(values.mean()), float(values.std(ddof=0))

    def epoch_summary(self) -> pd.DataFrame:
        """Mean, std (ddof=0), min and max across folds of every metric per epoch."""
        metrics = [c for c in self.history.columns if c not in ('fold', 'epoch')]
        grouped = self.history.groupby('epoch')[metrics]
        parts = []
        for stat in ('mean', 'std', 'min', 'max'):
            frame = grouped.std(ddof=0) if stat == 'std' else getattr(grouped, stat)()
            frame.columns = [f"{c}_{stat}" for c in frame.columns]
            parts.append(frame)
        return pd.concat(parts, axis=1).reset_index()

    def ensemble_summary(self) -> Optional[Dict[str, float]]:
        if self.test is None or self.test.empty:
            return None
        members = self.test[self.test['member'] != 'ensemble'][self.metric_name]
        fused = self.test[self.test['member'] == 'ensemble'][self.metric_name]
        return ensemble_report(members.to_numpy(), float(fused.iloc[0]))

    def to_text(self) -> str:
        lines = [
            f"experiment\t{self.experiment}",
            f"seed\t{self.seed}",
            f"config_hash\t{self.config_hash}",
            f"metric\t{self.metric_name}",
            "",
            "fold\tepoch\t" + "\t".join(c for c in self.best.columns if c not in ('fold', 'epoch')),
        ]
        for _, row in self.best.iterrows():
            values = [f"{row[c]:.6f}" for c in self.best.columns if c not in ('fold', 'epoch')]
            lines.append(f"{int(row['fold'])}\t{int(row['epoch'])}\t" + "\t".join(values))
        mean, std = self.mean_std()
        lines.append(f"mean±std\t{self.metric_name}\t{mean:.6f}\t{std:.6f}")
        summary = self.ensemble_summary()
        if summary is not None:
            lines.append("")
            lines.append("test\t" + "\t".join(f"{k}={v:.6f}" for k, v in summary.items()))
        return "\n".join(lines) + "\n"


# ============================================================================
# EXPERIMENTS
# ============================================================================

def experiment_matrix(**overrides) -> List[Tuple[int, ExperimentConfig]]:
    """The 24 numbered experiment cells: datasets x {SC, SE-En, SE-Es, SE-Esc} x encoder sizes."""
    sizes = [EncoderSize.BERT, EncoderSize.ROB, EncoderSize.ROB_L]
    cells = []
    for dataset in (Dataset.TR, Dataset.TR_CORR):
        for size in sizes:
            cells.append(ExperimentConfig(dataset=dataset, task=Task.SC, encoder_size=size, **overrides))
    for dataset in (Dataset.TR, Dataset.TR_CORR):
        for size in sizes:
            for encoding in (SpanEncoding.EN, SpanEncoding.ES, SpanEncoding.ESC):
                cells.append(ExperimentConfig(
                    dataset=dataset, task=Task.SE, encoding=encoding, encoder_size=size, **overrides
                ))
    return list(enumerate(cells, start=1))


def prepare_corpus(config: ExperimentConfig, corpus: Sequence[Sample]) -> List[Sample]:
    """Label correction for TR_CORR on the raw text, then preprocessing."""
    from .corpus import correct_corpus

    samples = list(corpus)
    if config.dataset == Dataset.TR_CORR:
        samples, report = correct_corpus(samples)
        logger.info(f"Corrected {report.n_corrected}/{report.n_nonneutral} non-neutral labels")
    return [preprocess_sample(s) for s in samples]


def run_experiment(
    config: ExperimentConfig,
    corpus: Sequence[Sample],
    out_dir: Optional[Union[str, Path]] = None
) -> FoldReport:
    """
    Outer stratified train/test split, stratified k-fold CV on the train
    part, one model per fold, test metrics for every fold model and for
    their equal-weight ensemble. Writes the experiment directory when
    ``out_dir`` is given.
    """
    from .corpus import stratified_kfold, train_test_split
    from .training import FoldTrainer, build_vocabulary, evaluate_members, write_experiment

    samples = prepare_corpus(config, corpus)
    train, test = train_test_split(samples, ratio=config.train_ratio, seed=config.seed)
    folds = stratified_kfold(train, k=config.folds, seed=config.seed)
    vocab = build_vocabulary(config, train)
    logger.info(f"{config.name}: {len(train)} train / {len(test)} test, folds {folds.sizes()}, vocab {len(vocab)}")

    trainer = FoldTrainer(config, vocab)
    results = []
    for fold in range(config.folds):
        train_idx, val_idx = folds.indices(fold)
        result = trainer.fit(fold, [train[i] for i in train_idx], [train[i] for i in val_idx])
        results.append(result)

    metric = primary_metric(config.task)
    history = pd.DataFrame([
        {'fold': r.fold, 'epoch': e.epoch, 'lr': e.lr, 'train_loss': e.train_loss, **e.metrics}
        for r in results for e in r.history
    ])
    best = pd.DataFrame([
        {'fold': r.fold, 'epoch': r.best.epoch, **r.best.metrics} for r in results
    ])
    test_frame = None
    if test:
        base_models = [r.base_model for r in results] if config.encoding == SpanEncoding.ESC else None
        test_frame = evaluate_members(
            config, vocab, [trainer.restore(r) for r in results], test, base_models=base_models
        )

    report = FoldReport(
        experiment=config.name,
        metric_name=metric,
        seed=config.seed,
        config_hash=config_hash(config),
        history=history,
        best=best,
        test=test_frame,
    )
    if out_dir is not None:
        write_experiment(Path(out_dir), config, vocab, train, test, folds, results, report)
    mean, std = report.mean_std()
    logger.info(f"{config.name}: {metric} {mean:.4f} ± {std:.4f} over {config.folds} folds")
    return report


def evaluate_checkpoints(checkpoint_dir: Union[str, Path], samples: Sequence[Sample]) -> pd.DataFrame:
    """Score every fold checkpoint of an experiment directory and their ensemble."""
    from .pipeline import load_stage
    from .training import evaluate_members

    stage = load_stage(checkpoint_dir)
    prepared = [preprocess_sample(s) for s in samples]
    return evaluate_members(stage.config, stage.vocab, stage.members, prepared, base_models=stage.base_members or None)


def write_manifest(path: Path, config: ExperimentConfig, **extra):
    """Seed and config hash of a run; no timestamps."""
    manifest = {'experiment': config.name, 'seed': config.seed, 'config_hash': config_hash(config), **extra}
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_config(path: Path, config: ExperimentConfig):
    path.write_text(dump_config(config), encoding="utf-8")


def evaluate_ensemble(spec: EnsembleSpec, samples: Sequence[Sample], base_dir: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """
    Fuse the checkpoints listed in an ensemble spec and score them.

    Each member's config comes from its checkpoint manifest and its
    vocabulary from the ``vocab.json``/``merges.txt`` beside it. Members
    must agree on task, encoding and vocabulary.
    """
    from .checkpoint import load_checkpoint
    from .config import build_config, parse_flat
    from .errors import BadConfig, ModelMissing
    from .stages import build_model
    from .tokenizer import Vocabulary
    from .training import base_config, evaluate_members

    base = Path(base_dir) if base_dir is not None else Path(".")
    models, base_models, configs, vocab = [], [], [], None
    for member in spec.members:
        path = Path(member) if Path(member).is_absolute() else base / member
        state, manifest = load_checkpoint(path)
        config = build_config(parse_flat(manifest.config))
        member_vocab = Vocabulary.load(path.parent / "vocab.json", path.parent / "merges.txt")
        if vocab is None:
            vocab = member_vocab
        elif member_vocab != vocab:
            raise BadConfig(f"{path}: vocabulary differs from the first ensemble member")
        if configs and (config.task, config.encoding) != (configs[0].task, configs[0].encoding):
            raise BadConfig(f"{path}: {config.name} cannot be fused with {configs[0].name}")
        model = build_model(config, len(member_vocab), seed=manifest.seed)
        model.load_state_dict(state)
        models.append(model.eval())
        configs.append(config)
        if config.encoding == SpanEncoding.ESC:
            base_path = path.parent / f"base_{path.name}"
            if not base_path.exists():
                raise ModelMissing(f"{path}: coverage member has no {base_path.name} beside it")
            base_state, base_manifest = load_checkpoint(base_path)
            base_model = build_model(base_config(config), len(member_vocab), seed=base_manifest.seed)
            base_model.load_state_dict(base_state)
            base_models.append(base_model.eval())

    prepared = [preprocess_sample(s) for s in samples]
    return evaluate_members(configs[0], vocab, models, prepared, weights=spec.weights, base_models=base_models or None)
