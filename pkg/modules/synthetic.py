# coding: utf-8
"""
Synthetic Tweet Generator
=========================
Seeded toy corpus with planted sentiment spans.

Each non-neutral sentence is filler words around a run of sentiment words
of its own class; the label is that run. With ``distractor=True`` a run of
the opposite class is planted too, so a span model that ignores the
sentiment token cannot tell which run to extract. Neutral sentences are
filler only and their label is the whole text.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from .corpus import Sample, Sentiment

logger = logging.getLogger(__name__)

POSITIVE_WORDS = [
    'love', 'great', 'awesome', 'happy', 'amazing', 'wonderful', 'fun', 'nice',
    'lucky', 'excited', 'best', 'glad', 'sweet', 'perfect', 'enjoy', 'yay',
]
NEGATIVE_WORDS = [
    'hate', 'awful', 'sad', 'terrible', 'bored', 'tired', 'sick', 'worst',
    'angry', 'miss', 'hurts', 'sucks', 'broken', 'lonely', 'annoyed', 'ugly',
]
FILLER_WORDS = [
    'the', 'today', 'my', 'going', 'to', 'work', 'just', 'got', 'home', 'this',
    'morning', 'with', 'friends', 'at', 'school', 'weekend', 'was', 'it', 'so',
    'we', 'watched', 'movie', 'again', 'now', 'coffee', 'bus', 'night', 'time',
]

SPAN_MODES = ("run", "phrase")


class SyntheticTweetGenerator:
    """
    Generates labeled tweets with planted subsentences.

    Args:
        seed: Random seed (None = random)
    """

    def __init__(self, seed: Optional[int] = None):
        if seed is None:
            self.seed = int(np.random.default_rng().integers(0, 1_000_000))
        else:
            self.seed = seed
        self.rng = np.random.default_rng(self.seed)

    def generate(
        self,
        n_samples: int = 500,
        neutral_fraction: float = 0.2,
        span_mode: str = "run",
        distractor: bool = True
    ) -> List[Sample]:
        """
        Args:
            n_samples: Corpus size
            neutral_fraction: Share of filler-only neutral samples
            span_mode: "run" labels the sentiment words only, "phrase" adds
                the following filler word
            distractor: Plant an opposite-sentiment run in every non-neutral sentence

        Returns:
            Samples with ids syn00000, syn00001, ...
        """
        if span_mode not in SPAN_MODES:
            raise ValueError(f"Unknown span_mode '{span_mode}'. Expected one of {SPAN_MODES}")
        if not 0.0 <= neutral_fraction <= 1.0:
            raise ValueError(f"neutral_fraction must be in [0, 1], got {neutral_fraction}")

        n_neutral = int(round(n_samples * neutral_fraction))
        polar = [Sentiment.POSITIVE, Sentiment.NEGATIVE] * ((n_samples - n_neutral + 1) // 2)
        labels = polar[:n_samples - n_neutral] + [Sentiment.NEUTRAL] * n_neutral
        labels = [labels[i] for i in self.rng.permutation(len(labels))]

        samples = []
        for i, sentiment in enumerate(labels):
            text, selected = self._sentence(sentiment, span_mode, distractor)
            samples.append(Sample(text_id=f"syn{i:05d}", text=text, selected_text=selected, sentiment=sentiment))
        logger.debug(f"Generated {len(samples)} synthetic samples (seed {self.seed})")
        return samples

    def _filler(self, low: int, high: int) -> List[str]:
        count = int(self.rng.integers(low, high + 1))
        return [FILLER_WORDS[i] for i in self.rng.integers(0, len(FILLER_WORDS), size=count)]

    def _run(self, words: List[str]) -> List[str]:
        length = int(self.rng.integers(1, 4))
        return [words[i] for i in self.rng.choice(len(words), size=length, replace=False)]

    def _sentence(self, sentiment: Sentiment, span_mode: str, distractor: bool) -> Tuple[str, str]:
        if sentiment is Sentiment.NEUTRAL:
            text = " ".join(self._filler(4, 10))
            return text, text

        own_words, other_words = (
            (POSITIVE_WORDS, NEGATIVE_WORDS) if sentiment is Sentiment.POSITIVE
            else (NEGATIVE_WORDS, POSITIVE_WORDS)
        )
        own = self._run(own_words)
        tail = self._filler(1, 4)
        selected = own + tail[:1] if span_mode == "phrase" else own

        blocks = [own + tail]
        if distractor:
            blocks.append(self._run(other_words) + self._filler(1, 3))
            if self.rng.random() < 0.5:
                blocks.reverse()
        words = self._filler(0, 3) + [w for block in blocks for w in block]
        return " ".join(words), " ".join(selected)
