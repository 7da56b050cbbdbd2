"""
Synthetic Tweet Generator Test Suite
====================================
Seeded reproducibility and the planted-span guarantees of the toy corpus.
"""

import pytest

from modules.corpus import Sentiment, correct_corpus, preprocess_text
from modules.synthetic import FILLER_WORDS, NEGATIVE_WORDS, POSITIVE_WORDS, SyntheticTweetGenerator


def test_same_seed_same_corpus():
    assert SyntheticTweetGenerator(seed=5).generate(50) == SyntheticTweetGenerator(seed=5).generate(50)
    assert SyntheticTweetGenerator(seed=5).generate(50) != SyntheticTweetGenerator(seed=6).generate(50)


def test_random_seed_is_recorded():
    generator = SyntheticTweetGenerator()
    assert SyntheticTweetGenerator(seed=generator.seed).generate(10) == generator.generate(10)


def test_class_balance():
    samples = SyntheticTweetGenerator(seed=0).generate(100, neutral_fraction=0.2)
    counts = {s: sum(x.sentiment is s for x in samples) for s in Sentiment}
    assert counts[Sentiment.NEUTRAL] == 20
    assert counts[Sentiment.POSITIVE] == counts[Sentiment.NEGATIVE] == 40
    assert [s.text_id for s in samples[:3]] == ["syn00000", "syn00001", "syn00002"]


def test_labels_are_word_aligned_substrings():
    for sample in SyntheticTweetGenerator(seed=1).generate(300):
        assert sample.selected_text in sample.text
        assert set(sample.selected_text.split()) <= set(sample.text.split())
        assert preprocess_text(sample.text) == sample.text


def test_neutral_label_is_whole_text():
    for sample in SyntheticTweetGenerator(seed=2).generate(200):
        if sample.sentiment is Sentiment.NEUTRAL:
            assert sample.selected_text == sample.text
            assert set(sample.text.split()) <= set(FILLER_WORDS)


def test_run_labels_hold_only_own_class_words():
    for sample in SyntheticTweetGenerator(seed=3).generate(200, span_mode="run"):
        words = set(sample.selected_text.split())
        if sample.sentiment is Sentiment.POSITIVE:
            assert words <= set(POSITIVE_WORDS)
        elif sample.sentiment is Sentiment.NEGATIVE:
            assert words <= set(NEGATIVE_WORDS)


def test_distractor_plants_opposite_run():
    for sample in SyntheticTweetGenerator(seed=4).generate(100, neutral_fraction=0.0):
        other = NEGATIVE_WORDS if sample.sentiment is Sentiment.POSITIVE else POSITIVE_WORDS
        assert set(sample.text.split()) & set(other)


def test_no_distractor():
    for sample in SyntheticTweetGenerator(seed=4).generate(100, neutral_fraction=0.0, distractor=False):
        other = NEGATIVE_WORDS if sample.sentiment is Sentiment.POSITIVE else POSITIVE_WORDS
        assert not set(sample.text.split()) & set(other)


def test_phrase_mode_adds_trailing_filler():
    for sample in SyntheticTweetGenerator(seed=5).generate(100, span_mode="phrase", neutral_fraction=0.0):
        assert sample.selected_text.split()[-1] in FILLER_WORDS
        assert sample.selected_text in sample.text


def test_labels_need_no_correction():
    _, report = correct_corpus(SyntheticTweetGenerator(seed=6).generate(200))
    assert report.n_corrected == 0
    assert report.n_unrecoverable == 0


@pytest.mark.parametrize("kwargs", [{'span_mode': "sentence"}, {'neutral_fraction': 1.5}])
def test_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        SyntheticTweetGenerator(seed=0).generate(10, **kwargs)
