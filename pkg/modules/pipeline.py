# coding: utf-8
"""
Prediction Pipeline
===================
The end-to-end cascade from a raw sentence to sentiment and subsentence:

    preprocess -> classify -> (neutral: whole text)
               -> base span -> coverage refinement -> text

plus weighted probability ensembling over fold checkpoints and
class-activation token attribution.

Stage models are duck-typed: a classifier needs ``predict_proba`` (and
``token_activations`` for CAM); span models need ``predict_span`` and
``span_probs``.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .checkpoint import load_checkpoint
from .config import ExperimentConfig, PredictionRecord, RefinementParams, SpanEncoding, Task, load_config
from .corpus import Sample, Sentiment, preprocess_text
from .coverage import CoverageFeatures, RefinementResult, Span, refine
from .errors import BadConfig, EmptyInput, LengthMismatch, ModelMissing
from .heads import SentimentProbs, SpanLogits, decode_span
from .stages import SentimentClassifier, SpanExtractor, build_model
from .tokenizer import Encoding, Vocabulary, assemble_example, token_span_to_text

logger = logging.getLogger(__name__)


def ensemble_average(member_outputs: Sequence[np.ndarray], weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """Weighted average sum_i w_i * y_i; equal weights 1/N by default."""
    outputs = [np.asarray(o, dtype=np.float64) for o in member_outputs]
    if not outputs:
        raise LengthMismatch("ensemble needs at least one member output")
    shape = outputs[0].shape
    for o in outputs[1:]:
        if o.shape != shape:
            raise LengthMismatch(f"member outputs differ in shape: {shape} vs {o.shape}")
    if weights is None:
        weights = [1.0 / len(outputs)] * len(outputs)
    if len(weights) != len(outputs):
        raise LengthMismatch(f"{len(weights)} weights for {len(outputs)} members")
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"ensemble weights must be non-negative and sum to 1, got {list(weights)}")

    # Anchored on the first member: identical members reproduce it bitwise
    anchor = outputs[0]
    total = anchor.copy()
    for w, o in zip(weights[1:], outputs[1:]):
        total = total + w * (o - anchor)
    return total


def probs_to_logits(start_probs: np.ndarray, end_probs: np.ndarray, valid_mask: np.ndarray) -> SpanLogits:
    with np.errstate(divide='ignore'):
        return SpanLogits(np.log(start_probs), np.log(end_probs), np.asarray(valid_mask, dtype=bool))


class ClassifierEnsemble:
    """Weighted average of member sentiment probabilities."""

    def __init__(self, members: Sequence[SentimentClassifier], weights: Optional[Sequence[float]] = None):
        if not members:
            raise ModelMissing("classifier ensemble has no members")
        self.members = list(members)
        self.weights = list(weights) if weights is not None else None

    def predict_proba(self, encoding: Encoding) -> np.ndarray:
        return ensemble_average([m.predict_proba(encoding) for m in self.members], self.weights)

    def token_activations(self, encoding: Encoding) -> np.ndarray:
        return ensemble_average([m.token_activations(encoding) for m in self.members], self.weights)


class SpanEnsemble:
    """Weighted average of member start/end probabilities, decoded jointly."""

    def __init__(self, members: Sequence[SpanExtractor], weights: Optional[Sequence[float]] = None):
        if not members:
            raise ModelMissing("span ensemble has no members")
        self.members = list(members)
        self.weights = list(weights) if weights is not None else None

    @property
    def uses_sentiment(self) -> bool:
        return self.members[0].uses_sentiment

    def span_probs(
        self,
        encoding: Encoding,
        sentiment: Sentiment,
        features: Optional[CoverageFeatures] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        outputs = [m.span_probs(encoding, sentiment, features) for m in self.members]
        start = ensemble_average([o[0] for o in outputs], self.weights)
        end = ensemble_average([o[1] for o in outputs], self.weights)
        return start, end

    def predict_span(
        self,
        encoding: Encoding,
        sentiment: Sentiment,
        features: Optional[CoverageFeatures] = None
    ) -> Span:
        start, end = self.span_probs(encoding, sentiment, features)
        return decode_span(probs_to_logits(start, end, encoding.valid_mask))


# ============================================================================
# PREDICTIONS
# ============================================================================

@dataclass
class PipelinePrediction:
    text: str
    sentiment: Sentiment
    sentiment_probs: Optional[SentimentProbs]
    subsentence: str
    span: Span
    refined: bool
    char_span: Tuple[int, int]
    base_span: Optional[Span] = None
    inference_ms: Optional[float] = None


@dataclass
class TokenActivationMap:
    """Per text-token scores, non-negative and summing to 1."""
    tokens: List[str]
    scores: np.ndarray
    offsets: np.ndarray

    def top_token(self) -> int:
        return int(np.argmax(self.scores))


class Pipeline:
    """
    The sentiment -> span -> coverage cascade.

    Args:
        vocab: Shared vocabulary of all stages
        classifier: Sentiment model (may be None when gold sentiment is injected)
        span_model: Base span extractor
        coverage_model: Coverage span extractor (needed only when refinement fires)
        params: Refinement parameters
        max_len: Sequence length L
    """

    def __init__(
        self,
        vocab: Vocabulary,
        classifier: Any = None,
        span_model: Any = None,
        coverage_model: Any = None,
        params: Optional[RefinementParams] = None,
        max_len: int = 96
    ):
        self.vocab = vocab
        self.classifier = classifier
        self.span_model = span_model
        self.coverage_model = coverage_model
        self.params = params or RefinementParams()
        self.max_len = max_len

    def _encode(self, model: Any, text: str, sentiment: Optional[Sentiment]) -> Encoding:
        if sentiment is not None and not getattr(model, "uses_sentiment", True):
            sentiment = None
        return assemble_example(self.vocab, text, sentiment, max_len=self.max_len)

    def predict(
        self,
        sentence: str,
        gold_sentiment: Optional[Sentiment] = None,
        use_coverage: bool = True
    ) -> PipelinePrediction:
        """
        Run the cascade on one raw sentence.

        ``gold_sentiment`` replaces the classifier's prediction for the
        downstream stages. ``use_coverage=False`` skips refinement.
        """
        started = time.perf_counter()
        text = preprocess_text(sentence)
        if not text:
            raise EmptyInput(f"sentence is empty after preprocessing: {sentence!r}")

        cls_encoding = assemble_example(self.vocab, text, None, max_len=self.max_len)
        probs = None
        if self.classifier is not None:
            probs = SentimentProbs(probs=np.asarray(self.classifier.predict_proba(cls_encoding)))
        elif gold_sentiment is None:
            raise ModelMissing("no classifier loaded and no gold sentiment given")
        sentiment = gold_sentiment if gold_sentiment is not None else probs.sentiment

        if sentiment is Sentiment.NEUTRAL:
            encoding = cls_encoding
            base_span = None
            result = RefinementResult(span=encoding.text_region, refined=False)
        else:
            if self.span_model is None:
                raise ModelMissing("span model not loaded")
            encoding = self._encode(self.span_model, text, sentiment)
            base_span = tuple(int(i) for i in self.span_model.predict_span(encoding, sentiment))
            if use_coverage:
                coverage_encoding = self._encode(self.coverage_model, text, sentiment)
                result = refine(coverage_encoding, sentiment, base_span, self.coverage_model, self.params)
            else:
                result = RefinementResult(span=base_span, refined=False)

        start, end = result.span
        prediction = PipelinePrediction(
            text=text,
            sentiment=sentiment,
            sentiment_probs=probs,
            subsentence=token_span_to_text(encoding, start, end),
            span=(start, end),
            refined=result.refined,
            char_span=(int(encoding.offsets[start][0]), int(encoding.offsets[end][1])),
            base_span=base_span,
        )
        prediction.inference_ms = (time.perf_counter() - started) * 1000.0
        return prediction

    def cam(self, sentence: str) -> TokenActivationMap:
        """Class-activation scores of the text tokens for the predicted class."""
        if self.classifier is None:
            raise ModelMissing("class activation mapping needs a classifier")
        text = preprocess_text(sentence)
        if not text:
            raise EmptyInput(f"sentence is empty after preprocessing: {sentence!r}")
        encoding = assemble_example(self.vocab, text, None, max_len=self.max_len)
        scores = np.asarray(self.classifier.token_activations(encoding), dtype=np.float64)
        first, last = encoding.text_region
        offsets = encoding.offsets[first:last + 1]
        return TokenActivationMap(
            tokens=[text[a:b] for a, b in offsets],
            scores=scores,
            offsets=offsets,
        )


def to_record(
    sentence: str,
    prediction: PipelinePrediction,
    activation: Optional[TokenActivationMap] = None
) -> PredictionRecord:
    cam = None
    if activation is not None:
        cam = [
            {'token': token, 'start': int(a), 'end': int(b), 'score': float(score)}
            for token, (a, b), score in zip(activation.tokens, activation.offsets, activation.scores)
        ]
    probs = prediction.sentiment_probs.as_dict() if prediction.sentiment_probs is not None else {}
    return PredictionRecord(
        input=sentence,
        sentiment=prediction.sentiment.label,
        probs=probs,
        span_tokens=list(prediction.span),
        span_chars=list(prediction.char_span),
        subsentence=prediction.subsentence,
        refined=prediction.refined,
        cam=cam,
        inference_ms=prediction.inference_ms,
    )


# ============================================================================
# LOADING
# ============================================================================

@dataclass
class StageArtifacts:
    config: ExperimentConfig
    vocab: Vocabulary
    members: List[Any] = field(default_factory=list)
    base_members: List[Any] = field(default_factory=list)


def _load_members(paths: Sequence[Path], config: ExperimentConfig, vocab: Vocabulary) -> List[Any]:
    members = []
    for path in paths:
        state, manifest = load_checkpoint(path)
        model = build_model(config, len(vocab), seed=manifest.seed)
        model.load_state_dict(state)
        members.append(model.eval())
    return members


def load_stage(directory: Union[str, Path]) -> StageArtifacts:
    """
    Load config, vocabulary and every ``fold_<k>.ckpt`` of an experiment,
    plus the ``base_fold_<k>.ckpt`` span models a coverage experiment keeps.
    """
    from .training import base_config

    directory = Path(directory)
    if not (directory / "config.txt").exists():
        raise ModelMissing(f"{directory}: no config.txt, not an experiment directory")
    config = load_config(directory / "config.txt")
    vocab = Vocabulary.load(directory / "vocab.json", directory / "merges.txt")
    checkpoints = sorted(directory.glob("fold_*.ckpt"))
    if not checkpoints:
        raise ModelMissing(f"{directory}: no fold checkpoints")
    members = _load_members(checkpoints, config, vocab)
    base_members = []
    if config.encoding == SpanEncoding.ESC:
        base_members = _load_members(sorted(directory.glob("base_fold_*.ckpt")), base_config(config), vocab)
    logger.info(f"Loaded {len(members)} member(s) of {config.name} from {directory}")
    return StageArtifacts(config=config, vocab=vocab, members=members, base_members=base_members)


class ModelBundle:
    """
    Classifier, base span and coverage stages loaded from ``classifier/``,
    ``span/`` and ``coverage/`` experiment directories. All stages must
    share one vocabulary. The coverage stage is optional.
    """

    def __init__(self, classifier: StageArtifacts, span: StageArtifacts, coverage: Optional[StageArtifacts] = None):
        self.classifier = classifier
        self.span = span
        self.coverage = coverage
        for stage in (span, coverage):
            if stage is not None and stage.vocab != classifier.vocab:
                raise BadConfig(f"stage {stage.config.name} uses a different vocabulary than the classifier")
        if classifier.config.task != Task.SC:
            raise BadConfig(f"classifier stage holds a {classifier.config.task.value} experiment")
        if span.config.task != Task.SE:
            raise BadConfig(f"span stage holds a {span.config.task.value} experiment")
        if coverage is not None and coverage.config.encoding != SpanEncoding.ESC:
            raise BadConfig(f"coverage stage must use the Esc encoding, got {coverage.config.name}")

    @classmethod
    def load(cls, models_dir: Union[str, Path], share_encoder: bool = False) -> "ModelBundle":
        models_dir = Path(models_dir)
        classifier = load_stage(models_dir / "classifier")
        span = load_stage(models_dir / "span")
        coverage = None
        if (models_dir / "coverage").exists():
            coverage = load_stage(models_dir / "coverage")
            if share_encoder:
                for i, model in enumerate(coverage.members):
                    model.share_encoder(span.members[i % len(span.members)])
        return cls(classifier, span, coverage)

    def pipeline(self) -> Pipeline:
        stages = [s for s in (self.classifier, self.span, self.coverage) if s is not None]
        max_len = min(s.config.tokenizer.max_len for s in stages)
        return Pipeline(
            vocab=self.classifier.vocab,
            classifier=ClassifierEnsemble(self.classifier.members),
            span_model=SpanEnsemble(self.span.members),
            coverage_model=SpanEnsemble(self.coverage.members) if self.coverage else None,
            params=self.coverage.config.refinement if self.coverage else self.span.config.refinement,
            max_len=max_len,
        )


# ============================================================================
# ABLATION
# ============================================================================

def evaluate_pipeline(pipeline: Union[Pipeline, ModelBundle], samples: Sequence[Sample]) -> pd.DataFrame:
    """
    Mean Jaccard of the full cascade for each combination of sentiment
    source (classifier / manual label) and coverage refinement (off / on).
    Refinement rows are left out when no coverage model is loaded.
    """
    from .evaluation import jaccard

    if isinstance(pipeline, ModelBundle):
        pipeline = pipeline.pipeline()
    if not samples:
        raise EmptyInput("no samples to evaluate the pipeline on")
    coverage_modes = (False, True) if pipeline.coverage_model is not None else (False,)
    rows = []
    for source in ("classifier", "manual"):
        for use_coverage in coverage_modes:
            scores = []
            for sample in samples:
                gold = sample.sentiment if source == "manual" else None
                prediction = pipeline.predict(sample.text, gold_sentiment=gold, use_coverage=use_coverage)
                scores.append(jaccard(prediction.subsentence, preprocess_text(sample.selected_text)))
            rows.append({
                'sentiment_source': source,
                'coverage': use_coverage,
                'jaccard': float(np.mean(scores)),
                'n_samples': len(scores),
            })
    return pd.DataFrame(rows)
