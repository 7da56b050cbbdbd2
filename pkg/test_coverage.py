"""
Coverage Refinement Test Suite
==============================
Coverage arithmetic, conditioning features and the refinement loop,
exercised with stub coverage models.
"""

import numpy as np
import pytest

from modules.config import RefinementParams
from modules.corpus import Sentiment
from modules.coverage import (
    CoverageRefiner, compute_coverage, coverage_bucket, coverage_features, refine
)
from modules.errors import BadLengths, BadSpan, ModelMissing
from modules.tokenizer import Encoding


def fake_encoding(n_text: int, max_len: int = 128) -> Encoding:
    """Encoding with ``n_text`` one-character text tokens."""
    text = "x" * n_text
    offsets = np.full((max_len, 2), -1, dtype=np.int64)
    offsets[1:n_text + 1] = [(i, i + 1) for i in range(n_text)]
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:n_text + 5] = 1
    return Encoding(
        text=text,
        tokens=["x"] * max_len,
        input_ids=np.zeros(max_len, dtype=np.int64),
        attention_mask=mask,
        offsets=offsets,
        start_onehot=np.zeros(max_len, dtype=np.int64),
        end_onehot=np.zeros(max_len, dtype=np.int64),
        n_text_tokens=n_text,
    )


class StubCoverageModel:
    """Returns a fixed span and records what it was called with."""

    def __init__(self, span):
        self.span = span
        self.calls = []

    def predict_span(self, encoding, sentiment, features=None):
        self.calls.append((sentiment, features))
        return self.span


class ExplodingModel:
    def predict_span(self, encoding, sentiment, features=None):
        raise AssertionError("coverage model must not be called")


# ============================================================================
# COVERAGE
# ============================================================================

def test_compute_coverage_examples():
    assert compute_coverage(7, 7, 15) == 15
    assert compute_coverage(3, 7, 15) == pytest.approx(45 / 7)


@pytest.mark.parametrize("M,N", [(0, 5), (6, 5), (1, 0), (-1, 3)])
def test_compute_coverage_bad_lengths(M, N):
    with pytest.raises(BadLengths):
        compute_coverage(M, N, 15)


def test_coverage_is_linear_in_kappa():
    rng = np.random.default_rng(0)
    for _ in range(200):
        N = int(rng.integers(1, 100))
        M = int(rng.integers(1, N + 1))
        kappa = float(rng.uniform(0.5, 30))
        assert compute_coverage(M, N, 2 * kappa) == pytest.approx(2 * compute_coverage(M, N, kappa), rel=1e-15)
        assert 0 < compute_coverage(M, N, kappa) <= kappa


def test_coverage_bucket_floor():
    assert coverage_bucket(15.0, 15) == 15
    assert coverage_bucket(45 / 7, 15) == 6
    assert coverage_bucket(0.2, 15) == 0


def test_features_for_full_region():
    features = coverage_features(15.0, (1, 6), L=12, n_text=6)
    assert features.span_indicator.tolist() == [0] + [1] * 6 + [0] * 5
    assert features.bucket == 15
    assert np.all(features.bucket_ids == 15)


def test_features_reject_span_outside_text():
    with pytest.raises(BadSpan):
        coverage_features(3.0, (0, 2), L=12, n_text=6)
    with pytest.raises(BadSpan):
        coverage_features(3.0, (2, 7), L=12, n_text=6)
    with pytest.raises(BadSpan):
        coverage_features(3.0, (4, 3), L=12, n_text=6)


# ============================================================================
# REFINEMENT
# ============================================================================

def test_short_base_span_is_kept():
    """Test: 3 of 40 tokens (ratio 0.075) keeps the base prediction."""
    result = refine(fake_encoding(40), Sentiment.POSITIVE, (10, 12), ExplodingModel())
    assert result.span == (10, 12)
    assert not result.refined


def test_fallback_is_exact_under_fuzz():
    rng = np.random.default_rng(0)
    params = RefinementParams()
    for _ in range(1000):
        n_text = int(rng.integers(10, 120))
        length = int(rng.integers(1, int(np.floor(params.epsilon * n_text)) + 1))
        start = int(rng.integers(1, n_text - length + 2))
        base = (start, start + length - 1)
        result = refine(fake_encoding(n_text), Sentiment.NEGATIVE, base, ExplodingModel(), params)
        assert result.span == base
        assert not result.refined
        assert result.iterations == 0


def test_long_base_span_uses_coverage_model_under_fuzz():
    rng = np.random.default_rng(1)
    params = RefinementParams()
    for _ in range(1000):
        n_text = int(rng.integers(2, 120))
        length = int(rng.integers(int(np.floor(params.epsilon * n_text)) + 1, n_text + 1))
        start = int(rng.integers(1, n_text - length + 2))
        s = int(rng.integers(1, n_text + 1))
        stub_span = (s, int(rng.integers(s, n_text + 1)))
        stub = StubCoverageModel(stub_span)
        sentiment = Sentiment.POSITIVE if rng.random() < 0.5 else Sentiment.NEGATIVE

        result = refine(fake_encoding(n_text), sentiment, (start, start + length - 1), stub, params)
        assert result.span == stub_span
        assert result.refined
        assert len(stub.calls) == 1
        assert stub.calls[0][0] is sentiment


def test_coverage_model_receives_features():
    stub = StubCoverageModel((3, 4))
    result = refine(fake_encoding(20), Sentiment.POSITIVE, (2, 9), stub, RefinementParams(kappa=15))
    _, features = stub.calls[0]
    assert result.coverage == pytest.approx(8 / 20 * 15)
    assert features.bucket == 6
    assert features.span_indicator[2:10].tolist() == [1] * 8
    assert features.span_indicator.sum() == 8


def test_neutral_bypass_under_fuzz():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n_text = int(rng.integers(1, 120))
        base = (int(rng.integers(-5, 5)), int(rng.integers(-5, 200)))
        result = refine(fake_encoding(n_text), Sentiment.NEUTRAL, base, ExplodingModel())
        assert result.span == (1, n_text)
        assert not result.refined


def test_neutral_bypass_without_any_model():
    result = refine(fake_encoding(5), Sentiment.NEUTRAL, (2, 2), None)
    assert result.span == (1, 5)


def test_missing_coverage_model():
    with pytest.raises(ModelMissing):
        refine(fake_encoding(10), Sentiment.POSITIVE, (1, 8), None)


def test_missing_coverage_model_is_fine_below_epsilon():
    result = refine(fake_encoding(40), Sentiment.POSITIVE, (5, 5), None)
    assert result.span == (5, 5)


def test_bad_base_prediction():
    with pytest.raises(BadSpan):
        refine(fake_encoding(10), Sentiment.POSITIVE, (0, 3), ExplodingModel())
    with pytest.raises(BadSpan):
        refine(fake_encoding(10), Sentiment.POSITIVE, (4, 11), ExplodingModel())


def test_bad_coverage_prediction():
    with pytest.raises(BadSpan):
        refine(fake_encoding(10), Sentiment.POSITIVE, (1, 8), StubCoverageModel((9, 12)))


def test_multiple_passes_stop_when_stable():
    stub = StubCoverageModel((2, 5))
    result = refine(fake_encoding(20), Sentiment.POSITIVE, (1, 10), stub, RefinementParams(max_iterations=4))
    assert result.span == (2, 5)
    assert result.iterations == 2
    assert len(stub.calls) == 2


def test_multiple_passes_stop_below_epsilon():
    stub = StubCoverageModel((3, 3))
    result = refine(fake_encoding(20), Sentiment.POSITIVE, (1, 10), stub, RefinementParams(max_iterations=4))
    assert result.span == (3, 3)
    assert result.iterations == 1


def test_refiner_wraps_refine():
    stub = StubCoverageModel((4, 6))
    refiner = CoverageRefiner(stub, RefinementParams(epsilon=0.2))
    assert refiner.refine(fake_encoding(10), Sentiment.POSITIVE, (1, 2)).span == (1, 2)
    assert refiner.refine(fake_encoding(10), Sentiment.POSITIVE, (1, 3)).span == (4, 6)
