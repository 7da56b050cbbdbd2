# coding: utf-8
"""
Stage Models
============
The models of the cascade: a sentiment classifier and a span extractor
whose conditioning (En / Es / Esc) selects between the base span model
and the coverage model.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import EncoderConfig, ExperimentConfig, HeadConfig, SpanEncoding, Task
from .corpus import Sentiment
from .coverage import CoverageFeatures, Span
from .encoder import EncoderModel
from .heads import AuxInputs, ClassifierHead, SpanHead, SpanLogits, decode_span
from .numcore import Module, Tensor, softmax
from .tokenizer import Encoding, SpanLabel, Vocabulary, assemble_example

logger = logging.getLogger(__name__)


@dataclass
class ModelBatch:
    """Stacked encodings plus whatever targets and conditioning apply."""
    input_ids: np.ndarray
    attention_mask: np.ndarray
    valid_mask: np.ndarray
    sentiment: np.ndarray
    labels: Optional[np.ndarray] = None
    start_idx: Optional[np.ndarray] = None
    end_idx: Optional[np.ndarray] = None
    span_indicator: Optional[np.ndarray] = None
    bucket: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.input_ids.shape[0])

    def aux(self) -> AuxInputs:
        return AuxInputs(sentiment=self.sentiment, span_indicator=self.span_indicator, bucket=self.bucket)


def make_batch(
    encodings: Sequence[Encoding],
    sentiments: Sequence[Sentiment],
    coverage: Optional[Sequence[CoverageFeatures]] = None,
    with_targets: bool = False
) -> ModelBatch:
    batch = ModelBatch(
        input_ids=np.stack([e.input_ids for e in encodings]),
        attention_mask=np.stack([e.attention_mask for e in encodings]),
        valid_mask=np.stack([e.valid_mask for e in encodings]),
        sentiment=np.asarray([s.value for s in sentiments], dtype=np.int64),
    )
    if with_targets:
        batch.labels = batch.sentiment.copy()
        batch.start_idx = np.asarray([e.start_index if e.start_index is not None else -1 for e in encodings])
        batch.end_idx = np.asarray([e.end_index if e.end_index is not None else -1 for e in encodings])
    if coverage is not None:
        batch.span_indicator = np.stack([f.span_indicator for f in coverage])
        batch.bucket = np.asarray([f.bucket for f in coverage], dtype=np.int64)
    return batch


class SentimentClassifier(Module):
    """
    Encoder + classification head.

    Args:
        encoder_config: Encoder shape (vocab_size must match the vocabulary)
        head_config: Head hyperparameters
        seed: Initialization seed
    """

    def __init__(self, encoder_config: EncoderConfig, head_config: HeadConfig, seed: int = 0):
        super().__init__()
        self.encoder = self.child('encoder', EncoderModel(encoder_config, seed))
        self.head = self.child('head', ClassifierHead(encoder_config.hidden_dim, head_config, np.random.default_rng([seed, 1])))

    def encode(self, vocab: Vocabulary, text: str, max_len: int) -> Encoding:
        return assemble_example(vocab, text, None, max_len=max_len)

    def logits(self, batch: ModelBatch) -> Tensor:
        return self.head(self.encoder.forward_batch(batch.input_ids, batch.attention_mask))

    def predict_proba(self, encoding: Encoding) -> np.ndarray:
        self.eval()
        batch = make_batch([encoding], [Sentiment.NEUTRAL])
        return softmax(self.logits(batch).data[0])

    def token_activations(self, encoding: Encoding) -> np.ndarray:
        """
        Softmax over text tokens of feature . weight column of the predicted
        class, centered across classes. A token's feature is what it feeds
        into the pooled bos representation through the last attention layer.
        """
        self.eval()
        features = self.encoder.bos_contributions(encoding)
        probs = self.predict_proba(encoding)
        weights = self.head.linear.weight.data
        weight = weights[:, int(np.argmax(probs))] - weights.mean(axis=1)
        first, last = encoding.text_region
        return softmax(features[first:last + 1] @ weight)


class SpanExtractor(Module):
    """
    Encoder + span head conditioned per ``encoding`` mode:
    En (text only), Es (+ sentiment) or Esc (+ sentiment + coverage).

    Args:
        encoder_config: Encoder shape
        head_config: Head hyperparameters
        mode: Span encoding
        n_buckets: Coverage buckets (kappa + 1)
        seed: Initialization seed
    """

    def __init__(
        self,
        encoder_config: EncoderConfig,
        head_config: HeadConfig,
        mode: SpanEncoding = SpanEncoding.ES,
        n_buckets: int = 16,
        seed: int = 0
    ):
        super().__init__()
        self.mode = SpanEncoding(mode)
        self.encoder = self.child('encoder', EncoderModel(encoder_config, seed))
        self.head = self.child('head', SpanHead(
            encoder_config.hidden_dim,
            head_config,
            np.random.default_rng([seed, 2]),
            use_sentiment=self.mode != SpanEncoding.EN,
            use_coverage=self.mode == SpanEncoding.ESC,
            n_buckets=n_buckets,
        ))

    @property
    def uses_sentiment(self) -> bool:
        return self.mode != SpanEncoding.EN

    @property
    def uses_coverage(self) -> bool:
        return self.mode == SpanEncoding.ESC

    def conditioning(self, sentiment: Optional[Sentiment]) -> Optional[Sentiment]:
        """Sentiment token placed in the sequence (none for En)."""
        return sentiment if self.uses_sentiment else None

    def encode(
        self,
        vocab: Vocabulary,
        text: str,
        sentiment: Optional[Sentiment],
        max_len: int,
        span: Optional[SpanLabel] = None
    ) -> Encoding:
        return assemble_example(vocab, text, self.conditioning(sentiment), span=span, max_len=max_len)

    def logits(self, batch: ModelBatch) -> Tensor:
        features = self.encoder.forward_batch(batch.input_ids, batch.attention_mask)
        return self.head(features, batch.aux())

    def span_logits(
        self,
        encoding: Encoding,
        sentiment: Sentiment,
        features: Optional[CoverageFeatures] = None
    ) -> SpanLogits:
        self.eval()
        batch = make_batch([encoding], [sentiment], coverage=[features] if self.uses_coverage else None)
        out = self.logits(batch).data[0]
        return SpanLogits(start_logits=out[:, 0], end_logits=out[:, 1], valid_mask=encoding.valid_mask)

    def span_probs(
        self,
        encoding: Encoding,
        sentiment: Sentiment,
        features: Optional[CoverageFeatures] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Start/end probabilities over the valid positions (zero elsewhere)."""
        start, end = self.span_logits(encoding, sentiment, features).masked()
        return softmax(start), softmax(end)

    def predict_span(
        self,
        encoding: Encoding,
        sentiment: Sentiment,
        features: Optional[CoverageFeatures] = None
    ) -> Span:
        return decode_span(self.span_logits(encoding, sentiment, features))

    def share_encoder(self, other: "SpanExtractor"):
        """Reuse ``other``'s encoder weights (the head stays separate)."""
        self.encoder = other.encoder
        self._children['encoder'] = other.encoder


def build_model(config: ExperimentConfig, vocab_size: int, seed: Optional[int] = None) -> Module:
    """Fresh stage model for an experiment config."""
    seed = config.seed if seed is None else seed
    encoder_config = config.encoder_config(vocab_size=vocab_size)
    if config.task == Task.SC:
        return SentimentClassifier(encoder_config, config.head, seed=seed)
    return SpanExtractor(
        encoder_config,
        config.head,
        mode=config.encoding,
        n_buckets=config.refinement.n_buckets,
        seed=seed,
    )
