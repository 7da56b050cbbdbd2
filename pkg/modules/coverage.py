# coding: utf-8
"""
Coverage Refinement
===================
Coverage ``c = M / N * kappa`` of a predicted span and the refinement
loop that feeds it back into a coverage-conditioned span model:

    if neutral: return the whole text
    for each pass (max_iterations):
        if pred_len / text_len <= epsilon: stop, keep the current span
        c = compute_coverage(pred_len, text_len, kappa)
        span = coverage_model(text, sentiment, span, c)
        stop if the span did not change

Lengths are measured in tokens.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Protocol, Tuple

import numpy as np

from .config import RefinementParams
from .corpus import Sentiment
from .errors import BadLengths, BadSpan, ModelMissing
from .tokenizer import Encoding

logger = logging.getLogger(__name__)

Span = Tuple[int, int]


def compute_coverage(M: int, N: int, kappa: float) -> float:
    """(M / N) * kappa for 1 <= M <= N."""
    if N < 1 or not 1 <= M <= N:
        raise BadLengths(f"coverage needs 1 <= M <= N, got M={M}, N={N}")
    return M / N * kappa


def coverage_bucket(c: float, kappa: float) -> int:
    """floor(c), clipped to [0, floor(kappa)]."""
    return int(min(max(math.floor(c), 0), math.floor(kappa)))


@dataclass
class CoverageFeatures:
    """
    Attributes:
        span_indicator: (L,) 1 inside the base span, 0 elsewhere
        bucket_ids: (L,) coverage bucket broadcast to every position
    """
    span_indicator: np.ndarray
    bucket_ids: np.ndarray
    coverage: float

    @property
    def bucket(self) -> int:
        return int(self.bucket_ids[0])


def coverage_features(
    c: float,
    base_span: Span,
    L: int,
    n_text: Optional[int] = None,
    kappa: float = 15.0
) -> CoverageFeatures:
    """Auxiliary channels for the coverage model. ``n_text`` bounds the text region when given."""
    start, end = base_span
    last = n_text if n_text is not None else L - 1
    if not 1 <= start <= end <= last or end >= L:
        raise BadSpan(f"base span {base_span} outside text region [1, {last}]")
    indicator = np.zeros(L, dtype=np.int64)
    indicator[start:end + 1] = 1
    bucket_ids = np.full(L, coverage_bucket(c, kappa), dtype=np.int64)
    return CoverageFeatures(span_indicator=indicator, bucket_ids=bucket_ids, coverage=c)


class SpanPredictor(Protocol):
    """Anything that decodes a span from an encoding plus coverage features."""

    def predict_span(
        self,
        encoding: Encoding,
        sentiment: Sentiment,
        features: Optional[CoverageFeatures] = None
    ) -> Span:
        ...


@dataclass
class RefinementResult:
    span: Span
    refined: bool
    iterations: int = 0
    coverage: Optional[float] = None


def _check_span(span: Span, n_text: int, what: str):
    start, end = int(span[0]), int(span[1])
    if not 1 <= start <= end <= n_text:
        raise BadSpan(f"{what} {span} outside text region [1, {n_text}]")


def refine(
    sentence_encoding: Encoding,
    sentiment: Sentiment,
    base_pred: Span,
    coverage_model: Optional[SpanPredictor],
    params: Optional[RefinementParams] = None
) -> RefinementResult:
    """
    Refine a base span prediction with the coverage model.

    Neutral input returns the whole text region without touching any
    model. Otherwise the base span is kept whenever its token ratio is at
    or below ``epsilon``.

    Raises:
        ModelMissing: refinement is needed but no coverage model is loaded
        BadSpan: base_pred or the model output leaves the text region
    """
    params = params or RefinementParams()
    first, last = sentence_encoding.text_region
    if sentiment is Sentiment.NEUTRAL:
        return RefinementResult(span=(first, last), refined=False)

    n_text = sentence_encoding.n_text_tokens
    _check_span(base_pred, n_text, "base prediction")
    span = base_pred
    refined = False
    iterations = 0
    c: Optional[float] = None
    for _ in range(params.max_iterations):
        pred_len = span[1] - span[0] + 1
        if pred_len / n_text <= params.epsilon:
            break
        if coverage_model is None:
            raise ModelMissing("coverage model required for refinement but not loaded")
        c = compute_coverage(pred_len, n_text, params.kappa)
        features = coverage_features(c, span, sentence_encoding.max_len, n_text, params.kappa)
        new_span = tuple(int(i) for i in coverage_model.predict_span(sentence_encoding, sentiment, features))
        _check_span(new_span, n_text, "coverage prediction")
        refined = True
        iterations += 1
        if new_span == span:
            break
        span = new_span

    if refined:
        logger.debug(f"refined {base_pred} -> {span} in {iterations} pass(es), c={c:.3f}")
    return RefinementResult(span=span, refined=refined, iterations=iterations, coverage=c)


class CoverageRefiner:
    """
    Holds a coverage model and its refinement parameters.

    Args:
        coverage_model: Coverage-conditioned span predictor (may be None)
        params: epsilon / kappa / max_iterations
    """

    def __init__(self, coverage_model: Optional[SpanPredictor], params: Optional[RefinementParams] = None):
        self.coverage_model = coverage_model
        self.params = params or RefinementParams()

    def refine(self, sentence_encoding: Encoding, sentiment: Sentiment, base_pred: Span) -> RefinementResult:
        return refine(sentence_encoding, sentiment, base_pred, self.coverage_model, self.params)
