# coding: utf-8
"""
Task Heads
==========
Sentiment classifier, span-logit extractor and constrained span decoding.

Classifier: bos features -> dropout(0.1) -> Linear(H, 3) -> softmax.

Span head:
    features + aux embeddings -> dropout(0.3)
    -> Conv1d(H, 256) -> ReLU -> Conv1d(256, 128) -> ReLU -> Conv1d(128, 64) -> ReLU
    -> Linear(64, 32) -> ReLU -> Linear(32, 2)

Aux embeddings are summed into every token feature: a 3-way sentiment
embedding, a 2-way "inside base span" embedding and a coverage-bucket
embedding.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .config import HeadConfig
from .corpus import Sentiment
from .errors import NoValidPosition, ShapeMismatch
from .numcore import Conv1d, Dropout, Embedding, Linear, Module, Tensor, as_tensor, softmax

N_CLASSES = len(Sentiment)


@dataclass
class SentimentProbs:
    probs: np.ndarray

    @property
    def sentiment(self) -> Sentiment:
        return Sentiment(int(np.argmax(self.probs)))

    def as_dict(self) -> dict:
        return {s.label: float(self.probs[s.value]) for s in Sentiment}


@dataclass
class SpanLogits:
    """Start/end scores per position; only ``valid_mask`` positions may be chosen."""
    start_logits: np.ndarray
    end_logits: np.ndarray
    valid_mask: np.ndarray

    def masked(self) -> Tuple[np.ndarray, np.ndarray]:
        """Logits with -inf outside the valid region."""
        valid = np.asarray(self.valid_mask, dtype=bool)
        return np.where(valid, self.start_logits, -np.inf), np.where(valid, self.end_logits, -np.inf)


@dataclass
class AuxInputs:
    """
    Per-example conditioning for the span head.

    Attributes:
        sentiment: (B,) sentiment codes
        span_indicator: (B, L) 1 inside the base span
        bucket: (B,) coverage bucket ids
    """
    sentiment: Optional[np.ndarray] = None
    span_indicator: Optional[np.ndarray] = None
    bucket: Optional[np.ndarray] = None


class ClassifierHead(Module):
    def __init__(self, hidden_dim: int, config: HeadConfig, rng: np.random.Generator):
        super().__init__()
        self.dropout = self.child('dropout', Dropout(config.classifier_dropout))
        self.linear = self.child('linear', Linear(hidden_dim, N_CLASSES, rng))

    def __call__(self, features: Tensor) -> Tensor:
        """(B, L, H) features -> (B, 3) logits from the bos position."""
        if features.ndim != 3 or features.shape[-1] != self.linear.weight.shape[0]:
            raise ShapeMismatch(f"classifier expects (B, L, {self.linear.weight.shape[0]}) features, got {features.shape}")
        return self.linear(self.dropout(features[:, 0, :]))


def classify(head: ClassifierHead, features: Tensor) -> SentimentProbs:
    """Softmax over the three sentiments for one example's (L, H) features."""
    features = as_tensor(features)
    if features.ndim != 2:
        raise ShapeMismatch(f"classify expects (L, H) features, got {features.shape}")
    logits = head(features.reshape(1, *features.shape))
    return SentimentProbs(probs=softmax(logits.data[0]))


class SpanHead(Module):
    """
    Args:
        hidden_dim: Encoder width H
        config: Head hyperparameters
        use_sentiment: Add the sentiment embedding
        use_coverage: Add span-indicator and coverage-bucket embeddings
        n_buckets: Coverage buckets (kappa + 1)
        rng: Initialization generator
    """

    def __init__(
        self,
        hidden_dim: int,
        config: HeadConfig,
        rng: np.random.Generator,
        use_sentiment: bool = False,
        use_coverage: bool = False,
        n_buckets: int = 16
    ):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.use_sentiment = use_sentiment
        self.use_coverage = use_coverage
        if use_sentiment:
            self.sentiment_embedding = self.child('sentiment_embedding', Embedding(N_CLASSES, hidden_dim, rng))
        if use_coverage:
            self.span_embedding = self.child('span_embedding', Embedding(2, hidden_dim, rng))
            self.bucket_embedding = self.child('bucket_embedding', Embedding(n_buckets, hidden_dim, rng))
        self.dropout = self.child('dropout', Dropout(config.span_dropout))

        self.convs: List[Conv1d] = []
        in_channels = hidden_dim
        for i, out_channels in enumerate(config.conv_channels):
            self.convs.append(self.child(f'conv_{i}', Conv1d(in_channels, out_channels, config.conv_kernel, rng)))
            in_channels = out_channels
        self.fc_hidden = self.child('fc_hidden', Linear(in_channels, config.fc_dim, rng))
        self.fc_out = self.child('fc_out', Linear(config.fc_dim, 2, rng))

    def __call__(self, features: Tensor, aux: Optional[AuxInputs] = None) -> Tensor:
        """(B, L, H) features -> (B, L, 2) start/end logits."""
        if features.ndim != 3 or features.shape[-1] != self.hidden_dim:
            raise ShapeMismatch(f"span head expects (B, L, {self.hidden_dim}) features, got {features.shape}")
        batch, length, _ = features.shape
        aux = aux or AuxInputs()
        x = features
        if self.use_sentiment:
            if aux.sentiment is None:
                raise ShapeMismatch("span head conditioned on sentiment needs aux.sentiment")
            x = x + self.sentiment_embedding(np.asarray(aux.sentiment).reshape(batch, 1))
        if self.use_coverage:
            if aux.span_indicator is None or aux.bucket is None:
                raise ShapeMismatch("span head conditioned on coverage needs span_indicator and bucket")
            indicator = np.asarray(aux.span_indicator, dtype=np.int64)
            if indicator.shape != (batch, length):
                raise ShapeMismatch(f"span_indicator {indicator.shape} vs features ({batch}, {length})")
            x = x + self.span_embedding(indicator)
            x = x + self.bucket_embedding(np.asarray(aux.bucket).reshape(batch, 1))

        x = self.dropout(x)
        for conv in self.convs:
            x = conv(x).relu()
        return self.fc_out(self.fc_hidden(x).relu())


def span_logits(
    head: SpanHead,
    features: Tensor,
    valid_mask: np.ndarray,
    aux: Optional[AuxInputs] = None
) -> SpanLogits:
    """Start/end logits for one example's (L, H) features."""
    features = as_tensor(features)
    if features.ndim != 2:
        raise ShapeMismatch(f"span_logits expects (L, H) features, got {features.shape}")
    out = head(features.reshape(1, *features.shape), aux).data[0]
    return SpanLogits(start_logits=out[:, 0], end_logits=out[:, 1], valid_mask=np.asarray(valid_mask, dtype=bool))


def decode_span(logits: SpanLogits) -> Tuple[int, int]:
    """
    Joint argmax of start[s] + end[e] over valid s <= e.

    Single left-to-right pass with a running best start. Ties go to the
    smallest s, then the smallest e.
    """
    start, end = logits.start_logits, logits.end_logits
    valid = np.asarray(logits.valid_mask, dtype=bool)
    if not valid.any():
        raise NoValidPosition("no valid position to decode a span from")

    best_score = -np.inf
    best_pair: Optional[Tuple[int, int]] = None
    run_value = -np.inf
    run_index: Optional[int] = None
    for j in np.flatnonzero(valid):
        if run_index is None or start[j] > run_value:
            run_value, run_index = start[j], int(j)
        score = run_value + end[j]
        candidate = (run_index, int(j))
        if best_pair is None or score > best_score or (score == best_score and candidate < best_pair):
            best_score, best_pair = score, candidate
    return best_pair
