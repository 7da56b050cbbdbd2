# coding: utf-8
"""
Fold Training
=============
Mini-batch Adam training of one stage model per cross-validation fold.

Every source of randomness is derived from the experiment seed:

- parameter init        seed * 1000 + fold
- dropout masks         DropoutStream(seed * 1000 + fold)
- epoch shuffling       default_rng([seed, fold, epoch])
- coverage jitter       the same epoch generator, after the shuffle

so two runs of one config produce identical checkpoints.

Coverage (Esc) models learn from the gold span but are validated and
tested the way they run in the pipeline: an Es model trained on the same
fold predicts the base span and ``refine`` takes it from there.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .checkpoint import CheckpointManifest, save_checkpoint
from .config import ExperimentConfig, SpanEncoding, Task, config_hash, dump_config
from .corpus import FoldAssignment, Sample, Sentiment, write_csv
from .coverage import CoverageFeatures, Span, compute_coverage, coverage_features, refine
from .errors import ConfigError, EmptyInput, ModelMissing, TooLong
from .evaluation import (
    FoldReport, classification_metrics, jaccard, primary_metric, write_config, write_manifest
)
from .numcore import (
    AdamState, DropoutStream, LRSchedule, Module, Tensor, adam_step, backward,
    cross_entropy_smoothed, lr_at, smooth_labels
)
from .pipeline import ClassifierEnsemble, SpanEnsemble
from .stages import ModelBatch, build_model, make_batch
from .tokenizer import Encoding, SpanLabel, Vocabulary, assemble_example, token_span_to_text, train_bpe

logger = logging.getLogger(__name__)


@dataclass
class TrainingExample:
    sample: Sample
    encoding: Encoding
    gold_span: Optional[Span] = None


@dataclass
class EpochResult:
    epoch: int
    lr: float
    train_loss: float
    metrics: Dict[str, float]


@dataclass
class FoldResult:
    fold: int
    seed: int
    history: List[EpochResult]
    best: EpochResult
    best_state: Dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    base: Optional["FoldResult"] = field(repr=False, default=None)
    base_model: Optional[Module] = field(repr=False, default=None)


def build_vocabulary(config: ExperimentConfig, train: Sequence[Sample]) -> Vocabulary:
    """Pinned vocabulary files when configured, else BPE trained on the train split."""
    tokenizer = config.tokenizer
    if tokenizer.vocab_path:
        if not tokenizer.merges_path:
            raise ConfigError("tokenizer.vocab_path needs tokenizer.merges_path")
        return Vocabulary.load(tokenizer.vocab_path, tokenizer.merges_path)
    if not train:
        raise EmptyInput("cannot train a vocabulary on an empty split")
    return train_bpe([s.text for s in train], tokenizer.vocab_size)


def conditioning(config: ExperimentConfig, sentiment: Sentiment) -> Optional[Sentiment]:
    """Sentiment token for the input layout; classification and En see none."""
    if config.task == Task.SC or config.encoding == SpanEncoding.EN:
        return None
    return sentiment


def jitter_span(span: Span, n_text: int, jitter: int, rng: np.random.Generator) -> Span:
    start = int(np.clip(span[0] + rng.integers(-jitter, jitter + 1), 1, n_text))
    end = int(np.clip(span[1] + rng.integers(-jitter, jitter + 1), start, n_text))
    return start, end


def gold_coverage(
    config: ExperimentConfig,
    encoding: Encoding,
    gold_span: Span,
    rng: np.random.Generator
) -> CoverageFeatures:
    """Coverage channels from the gold span: exact gold length, jittered indicator."""
    n_text = encoding.n_text_tokens
    kappa = config.refinement.kappa
    c = compute_coverage(gold_span[1] - gold_span[0] + 1, n_text, kappa)
    indicator = jitter_span(gold_span, n_text, config.training.coverage_jitter, rng)
    return coverage_features(c, indicator, encoding.max_len, n_text, kappa)


def prepare_examples(config: ExperimentConfig, vocab: Vocabulary, samples: Sequence[Sample]) -> List[TrainingExample]:
    """
    Encode training samples. Span extraction keeps positive and negative
    samples whose label can be located in the text.
    """
    max_len = config.tokenizer.max_len
    examples = []
    too_long = unlocated = 0
    for sample in samples:
        if config.task == Task.SE and sample.sentiment is Sentiment.NEUTRAL:
            continue
        span = SpanLabel.locate(sample.text, sample.selected_text) if config.task == Task.SE else None
        if config.task == Task.SE and span is None:
            unlocated += 1
            continue
        try:
            encoding = assemble_example(vocab, sample.text, conditioning(config, sample.sentiment), span=span, max_len=max_len)
        except TooLong:
            too_long += 1
            continue
        gold = None
        if config.task == Task.SE:
            if encoding.start_index is None:
                unlocated += 1
                continue
            gold = (encoding.start_index, encoding.end_index)
        examples.append(TrainingExample(sample=sample, encoding=encoding, gold_span=gold))
    if too_long or unlocated:
        logger.warning(f"Skipped {too_long} over-long and {unlocated} unlocatable training samples")
    return examples


# ============================================================================
# LOSSES
# ============================================================================

def classification_loss(logits: Tensor, labels: np.ndarray, alpha: float) -> Tensor:
    """Smoothed cross entropy summed over the batch."""
    onehot = np.eye(logits.shape[-1])[labels]
    return cross_entropy_smoothed(logits, smooth_labels(onehot, alpha))


def span_targets(index: np.ndarray, valid: np.ndarray, alpha: float) -> np.ndarray:
    """One-hot positions smoothed over the valid positions only."""
    valid = valid.astype(np.float64)
    onehot = np.zeros_like(valid)
    onehot[np.arange(len(index)), index] = 1.0
    return onehot * (1.0 - alpha) + alpha * valid / valid.sum(axis=1, keepdims=True)


def span_loss(logits: Tensor, batch: ModelBatch, alpha: float) -> Tensor:
    """Start CE + end CE, softmax restricted to the text tokens."""
    valid = batch.valid_mask
    start = cross_entropy_smoothed(logits[:, :, 0], span_targets(batch.start_idx, valid, alpha), mask=valid)
    end = cross_entropy_smoothed(logits[:, :, 1], span_targets(batch.end_idx, valid, alpha), mask=valid)
    return start + end


# ============================================================================
# SCORING
# ============================================================================

def base_config(config: ExperimentConfig) -> ExperimentConfig:
    """The Es experiment whose predictions seed coverage refinement."""
    return config.model_copy(update={'encoding': SpanEncoding.ES})


def score_samples(
    config: ExperimentConfig,
    vocab: Vocabulary,
    predictor,
    samples: Sequence[Sample],
    base_predictor=None
) -> Dict[str, float]:
    """
    Validation metrics of a model or ensemble.

    Classification: accuracy, macro P/R/F1, macro AUC. Span extraction:
    mean Jaccard over every sample, neutral ones scored with the full text.
    Coverage models refine the span predicted by ``base_predictor`` exactly
    as the pipeline does; the label is only read for the score.

    Raises:
        ModelMissing: a coverage model is scored without a base predictor
    """
    max_len = config.tokenizer.max_len
    if config.task == Task.SC:
        probs, labels = [], []
        for sample in samples:
            try:
                encoding = assemble_example(vocab, sample.text, None, max_len=max_len)
            except TooLong:
                continue
            probs.append(predictor.predict_proba(encoding))
            labels.append(sample.sentiment.value)
        return classification_metrics(np.asarray(probs).reshape(-1, len(Sentiment)), labels)

    uses_coverage = config.encoding == SpanEncoding.ESC
    if uses_coverage and base_predictor is None:
        raise ModelMissing("scoring a coverage model needs a base span model")
    scores = []
    for sample in samples:
        prediction = sample.text
        if sample.sentiment is not Sentiment.NEUTRAL:
            try:
                encoding = assemble_example(vocab, sample.text, conditioning(config, sample.sentiment), max_len=max_len)
            except TooLong:
                continue
            if uses_coverage:
                base = base_predictor.predict_span(encoding, sample.sentiment)
                start, end = refine(encoding, sample.sentiment, base, predictor, config.refinement).span
            else:
                start, end = predictor.predict_span(encoding, sample.sentiment)
            prediction = token_span_to_text(encoding, start, end)
        scores.append(jaccard(prediction, sample.selected_text))
    return {'jaccard': float(np.mean(scores)) if scores else 0.0}


def evaluate_members(
    config: ExperimentConfig,
    vocab: Vocabulary,
    models: Sequence[Module],
    samples: Sequence[Sample],
    weights: Optional[Sequence[float]] = None,
    base_models: Optional[Sequence[Module]] = None
) -> pd.DataFrame:
    """
    One metrics row per member and one for their weighted ensemble.
    Coverage members are paired with ``base_models`` by position; the
    ensemble refines the fused base prediction.
    """
    if config.encoding == SpanEncoding.ESC and (not base_models or len(base_models) != len(models)):
        raise ModelMissing(f"{config.name}: every coverage member needs a base span model")
    bases = list(base_models) if base_models else [None] * len(models)
    rows = [
        {'member': f"fold_{i}", **score_samples(config, vocab, model, samples, base)}
        for i, (model, base) in enumerate(zip(models, bases))
    ]
    if config.task == Task.SC:
        ensemble, base_ensemble = ClassifierEnsemble(models, weights), None
    else:
        ensemble = SpanEnsemble(models, weights)
        base_ensemble = SpanEnsemble(bases, weights) if base_models else None
    rows.append({'member': 'ensemble', **score_samples(config, vocab, ensemble, samples, base_ensemble)})
    return pd.DataFrame(rows)


# ============================================================================
# TRAINER
# ============================================================================

class FoldTrainer:
    """
    Trains one model per fold and keeps its best validation epoch.

    Args:
        config: Experiment configuration
        vocab: Vocabulary shared by every fold
    """

    def __init__(self, config: ExperimentConfig, vocab: Vocabulary):
        self.config = config
        self.vocab = vocab
        self.metric = primary_metric(config.task)

    def fold_seed(self, fold: int) -> int:
        return self.config.seed * 1000 + fold

    def build(self, fold: int) -> Module:
        return build_model(self.config, len(self.vocab), seed=self.fold_seed(fold))

    def restore(self, result: FoldResult) -> Module:
        model = build_model(self.config, len(self.vocab), seed=result.seed)
        model.load_state_dict(result.best_state)
        return model.eval()

    def loss(self, model: Module, batch: ModelBatch) -> Tensor:
        alpha = self.config.training.label_smoothing
        logits = model.logits(batch)
        if self.config.task == Task.SC:
            return classification_loss(logits, batch.labels, alpha)
        return span_loss(logits, batch, alpha)

    def fit(
        self,
        fold: int,
        train: Sequence[Sample],
        val: Sequence[Sample],
        base_model: Optional[Module] = None
    ) -> FoldResult:
        """
        Train one fold. A coverage model is validated by refining the spans
        of ``base_model``; without one, an Es model is trained on the same
        fold first and returned alongside.
        """
        cfg = self.config.training
        seed = self.fold_seed(fold)
        examples = prepare_examples(self.config, self.vocab, train)
        if not examples:
            raise EmptyInput(f"fold {fold}: no usable training samples")

        uses_coverage = self.config.task == Task.SE and self.config.encoding == SpanEncoding.ESC
        base: Optional[FoldResult] = None
        if uses_coverage and base_model is None:
            base_trainer = FoldTrainer(base_config(self.config), self.vocab)
            base = base_trainer.fit(fold, train, val)
            base_model = base_trainer.restore(base)

        model = self.build(fold)
        model.set_stream(DropoutStream(seed))
        params = model.parameters()
        adam = AdamState.init(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
        schedule = LRSchedule(base_lr=cfg.lr, gamma=cfg.gamma, milestones=tuple(cfg.milestones))

        history: List[EpochResult] = []
        best: Optional[EpochResult] = None
        best_state: Dict[str, np.ndarray] = {}
        for epoch in range(cfg.epochs):
            adam.lr = lr_at(schedule, epoch)
            rng = np.random.default_rng([self.config.seed, fold, epoch])
            order = rng.permutation(len(examples))
            coverage = None
            if uses_coverage:
                coverage = [gold_coverage(self.config, e.encoding, e.gold_span, rng) for e in examples]

            model.train()
            total = 0.0
            for start in range(0, len(order), cfg.batch_size):
                chunk = order[start:start + cfg.batch_size]
                batch = make_batch(
                    [examples[i].encoding for i in chunk],
                    [examples[i].sample.sentiment for i in chunk],
                    coverage=[coverage[i] for i in chunk] if coverage is not None else None,
                    with_targets=True,
                )
                model.zero_grad()
                loss = self.loss(model, batch)
                backward(loss)
                adam_step(params, adam)
                total += loss.item()

            metrics = score_samples(self.config, self.vocab, model, val, base_model)
            result = EpochResult(epoch=epoch, lr=adam.lr, train_loss=total / len(examples), metrics=metrics)
            history.append(result)
            logger.info(
                f"fold {fold} epoch {epoch}: loss {result.train_loss:.4f}, "
                f"{self.metric} {metrics[self.metric]:.4f}"
            )
            if best is None or metrics[self.metric] > best.metrics[self.metric]:
                best, best_state = result, model.state_dict()

        model.eval()
        return FoldResult(
            fold=fold, seed=seed, history=history, best=best, best_state=best_state, base=base, base_model=base_model
        )


# ============================================================================
# ARTIFACTS
# ============================================================================

def write_experiment(
    out_dir: Path,
    config: ExperimentConfig,
    vocab: Vocabulary,
    train: Sequence[Sample],
    test: Sequence[Sample],
    folds: FoldAssignment,
    results: Sequence[FoldResult],
    report: FoldReport
):
    """
    Experiment directory: config, vocabulary, splits, one checkpoint per
    fold, history and report. The fold-curve chart goes to ``plots/``.
    """
    from .visualization import create_fold_curve_chart

    out_dir.mkdir(parents=True, exist_ok=True)
    write_config(out_dir / "config.txt", config)
    vocab.save(out_dir / "vocab.json", out_dir / "merges.txt")
    write_csv(train, out_dir / "train.csv")
    write_csv(test, out_dir / "test.csv")
    pd.DataFrame({
        'textID': [s.text_id for s in train],
        'fold': folds.fold_of_sample,
    }).to_csv(out_dir / "folds.csv", index=False, lineterminator="\n")

    def save(path: Path, stage_config: ExperimentConfig, result: FoldResult):
        manifest = CheckpointManifest(
            experiment=stage_config.name,
            task=stage_config.task.value,
            encoding=stage_config.encoding.value if stage_config.encoding is not None else None,
            config_hash=config_hash(stage_config),
            config=dump_config(stage_config),
            seed=result.seed,
            fold=result.fold,
            epoch=result.best.epoch,
            metric_name=report.metric_name,
            metric=result.best.metrics[report.metric_name],
            vocab_size=len(vocab),
        )
        save_checkpoint(path, result.best_state, manifest)

    base_checkpoints = []
    for result in results:
        save(out_dir / f"fold_{result.fold}.ckpt", config, result)
        if result.base is not None:
            save(out_dir / f"base_fold_{result.fold}.ckpt", base_config(config), result.base)
            base_checkpoints.append(f"base_fold_{result.fold}.ckpt")

    report.history.to_csv(out_dir / "history.csv", index=False, lineterminator="\n")
    if report.test is not None:
        report.test.to_csv(out_dir / "test_metrics.csv", index=False, lineterminator="\n")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    write_manifest(
        out_dir / "manifest.json",
        config,
        n_train=len(train),
        n_test=len(test),
        folds=folds.sizes(),
        checkpoints=[f"fold_{r.fold}.ckpt" for r in results],
        base_checkpoints=base_checkpoints,
    )

    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)
    fig = create_fold_curve_chart(report)
    fig.write_html(plots / "fold_curve.html", include_plotlyjs="cdn", div_id="fold-curve")
    logger.info(f"Wrote experiment {config.name} to {out_dir}")
