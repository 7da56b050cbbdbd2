# coding: utf-8
"""
Tweet Corpus
============
CSV ingestion, text preprocessing, span-label correction, stratified
splitting and the descriptive statistics used for EDA.
"""

import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import EmptyInput, MalformedRow, MissingColumn, SpanUnrecoverable, TooFewSamples

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("textID", "text", "selected_text", "sentiment")


class Sentiment(Enum):
    POSITIVE = 0
    NEGATIVE = 1
    NEUTRAL = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Sentiment":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"Unknown sentiment '{label}'. Expected positive, negative or neutral")


@dataclass(frozen=True)
class Sample:
    """One labeled tweet."""
    text_id: str
    text: str
    selected_text: str
    sentiment: Sentiment


# ============================================================================
# INGESTION
# ============================================================================

def load_csv(path: Union[str, Path]) -> List[Sample]:
    """
    Read a ``textID,text,selected_text,sentiment`` CSV.

    Rows with an empty ``text`` are skipped with a warning. A missing or
    unknown sentiment raises ``MalformedRow`` with the 1-based data row.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise MissingColumn(REQUIRED_COLUMNS[0])
    except pd.errors.ParserError as e:
        raise MalformedRow(None, str(e)) from e
    except UnicodeDecodeError as e:
        raise MalformedRow(None, f"not UTF-8: {e}") from e
    except OSError as e:
        raise OSError(f"Cannot read CSV {path}: {e}") from e

    for column in REQUIRED_COLUMNS:
        if column not in frame.columns:
            raise MissingColumn(column)

    samples: List[Sample] = []
    skipped = 0
    for row_number, row in enumerate(frame[list(REQUIRED_COLUMNS)].itertuples(index=False), start=1):
        text_id, text, selected, label = (v if isinstance(v, str) else "" for v in row)
        if not label.strip():
            raise MalformedRow(row_number, "missing sentiment")
        try:
            sentiment = Sentiment.from_label(label)
        except ValueError as e:
            raise MalformedRow(row_number, str(e)) from e
        if not text.strip():
            skipped += 1
            logger.warning(f"Skipping row {row_number} ({text_id}): empty text")
            continue
        samples.append(Sample(text_id, text, selected, sentiment))

    logger.info(f"Loaded {len(samples)} samples from {path} ({skipped} skipped)")
    return samples


def samples_to_frame(samples: Sequence[Sample]) -> pd.DataFrame:
    return pd.DataFrame(
        [(s.text_id, s.text, s.selected_text, s.sentiment.label) for s in samples],
        columns=list(REQUIRED_COLUMNS),
    )


def write_csv(samples: Sequence[Sample], path: Union[str, Path]):
    samples_to_frame(samples).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


# ============================================================================
# PREPROCESSING
# ============================================================================

_HTML_TAG = re.compile(r"<[^>]+>")
_URL = re.compile(r"\b[a-z][a-z0-9+.\-]*://[^\s<>]*|\bwww\.[^\s<>]*")
_ELLIPSIS = re.compile(r"\.{2,}")


def preprocess_text(raw: str) -> str:
    """Lowercase, drop HTML tags and URLs, collapse ellipses and whitespace."""
    text = raw.lower()
    text = _HTML_TAG.sub(" ", text)
    text = _URL.sub(" ", text)
    text = _ELLIPSIS.sub(".", text)
    return " ".join(text.split())


def preprocess_sample(sample: Sample) -> Sample:
    return replace(
        sample,
        text=preprocess_text(sample.text),
        selected_text=preprocess_text(sample.selected_text),
    )


# ============================================================================
# LABEL CORRECTION
# ============================================================================

@dataclass
class CorrectionEntry:
    text_id: str
    old_span: str
    new_span: str


@dataclass
class CorrectionReport:
    """Outcome of correcting a whole corpus."""
    n_corrected: int
    n_nonneutral: int
    n_total: int
    n_unrecoverable: int = 0
    per_sample: List[CorrectionEntry] = field(default_factory=list)

    @property
    def fraction_corrected(self) -> float:
        return self.n_corrected / self.n_nonneutral if self.n_nonneutral else 0.0

    @property
    def fraction_of_all(self) -> float:
        return self.n_corrected / self.n_total if self.n_total else 0.0


def _words(text: str) -> List[Tuple[int, int]]:
    return [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]


def _collapse_whitespace(raw: str) -> Tuple[str, List[int]]:
    """Whitespace-collapsed text and, per collapsed char, its raw index."""
    chars: List[str] = []
    index_map: List[int] = []
    for n, (start, end) in enumerate(_words(raw)):
        if n > 0:
            chars.append(" ")
            index_map.append(start - 1)
        chars.extend(raw[start:end])
        index_map.extend(range(start, end))
    return "".join(chars), index_map


def _strip_span(text: str, start: int, end: int) -> Tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def _snap_to_words(raw: str, start: int, end: int) -> Tuple[int, int]:
    """
    Align a span to whitespace-delimited words.

    A partial edge word is kept when the span covers more than half of it
    and dropped otherwise. A fragment inside a single word becomes that word.
    """
    start, end = _strip_span(raw, start, end)
    if start >= end:
        raise SpanUnrecoverable("span is empty after stripping whitespace")
    words = _words(raw)
    left = next(w for w in words if w[0] <= start < w[1])
    right = next(w for w in words if w[0] < end <= w[1])
    if left == right:
        return left

    new_start = start
    if start != left[0]:
        covered = (left[1] - start) / (left[1] - left[0])
        new_start = left[0] if covered > 0.5 else left[1]
    new_end = end
    if end != right[1]:
        covered = (end - right[0]) / (right[1] - right[0])
        new_end = right[1] if covered > 0.5 else right[0]

    new_start, new_end = _strip_span(raw, new_start, new_end)
    if new_start >= new_end:
        return left[0], right[1]
    return new_start, new_end


def correct_selected_text(sample: Sample) -> Tuple[Sample, bool]:
    """
    Undo the whitespace-shift artifact in ``selected_text``.

    Labels were cut at offsets computed on whitespace-collapsed text but
    applied to the raw text, so every extra space before the label pushes
    it left. The label is located in the raw text, its offsets are read
    back on the collapsed text and mapped to raw, then aligned to word
    boundaries. Neutral samples are returned unchanged.

    Returns:
        (sample, changed)

    Raises:
        SpanUnrecoverable: the label cannot be located in the text
    """
    if sample.sentiment is Sentiment.NEUTRAL:
        return sample, False
    raw, selected = sample.text, sample.selected_text
    if not selected.strip():
        raise SpanUnrecoverable(f"{sample.text_id}: empty selected_text")

    collapsed, index_map = _collapse_whitespace(raw)
    p = raw.find(selected)
    if p >= 0 and (p >= len(index_map) or index_map[p] == p):
        start, end = p, p + len(selected)
    elif p >= 0:
        q = min(p + len(selected), len(collapsed))
        start, end = index_map[p], index_map[q - 1] + 1
    else:
        p = collapsed.find(selected)
        if p < 0:
            raise SpanUnrecoverable(f"{sample.text_id}: selected_text {selected!r} not found in text")
        start, end = index_map[p], index_map[p + len(selected) - 1] + 1

    start, end = _snap_to_words(raw, start, end)
    corrected = raw[start:end]
    if corrected == selected:
        return sample, False
    return replace(sample, selected_text=corrected), True


def correct_corpus(samples: Sequence[Sample]) -> Tuple[List[Sample], CorrectionReport]:
    """Correct every sample; unrecoverable ones pass through unchanged."""
    corrected: List[Sample] = []
    report = CorrectionReport(
        n_corrected=0,
        n_nonneutral=sum(1 for s in samples if s.sentiment is not Sentiment.NEUTRAL),
        n_total=len(samples),
    )
    for sample in samples:
        try:
            fixed, changed = correct_selected_text(sample)
        except SpanUnrecoverable as e:
            logger.warning(f"Leaving label unchanged: {e}")
            report.n_unrecoverable += 1
            corrected.append(sample)
            continue
        if changed:
            report.n_corrected += 1
            report.per_sample.append(CorrectionEntry(sample.text_id, sample.selected_text, fixed.selected_text))
        corrected.append(fixed)

    logger.info(
        f"Corrected {report.n_corrected}/{report.n_nonneutral} non-neutral samples "
        f"({report.fraction_corrected:.1%}; {report.fraction_of_all:.1%} of all), "
        f"{report.n_unrecoverable} unrecoverable"
    )
    return corrected, report


def _escape_field(value: str) -> str:
    return value.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def correction_report_lines(report: CorrectionReport) -> List[str]:
    """``text_id<TAB>old<TAB>new`` per corrected sample."""
    return [
        "\t".join(_escape_field(v) for v in (e.text_id, e.old_span, e.new_span))
        for e in report.per_sample
    ]


# ============================================================================
# SPLITTING
# ============================================================================

def _by_class(samples: Sequence[Sample]) -> Dict[Sentiment, List[int]]:
    groups: Dict[Sentiment, List[int]] = {s: [] for s in Sentiment}
    for i, sample in enumerate(samples):
        groups[sample.sentiment].append(i)
    return groups


def train_test_split(
    samples: Sequence[Sample],
    ratio: float = 0.8,
    seed: int = 42
) -> Tuple[List[Sample], List[Sample]]:
    """Stratified split; each class contributes round(ratio * size) to train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if not samples:
        raise EmptyInput("cannot split an empty corpus")

    rng = np.random.default_rng(seed)
    in_train = np.zeros(len(samples), dtype=bool)
    for indices in _by_class(samples).values():
        if not indices:
            continue
        n_train = int(np.floor(ratio * len(indices) + 0.5))
        in_train[rng.permutation(indices)[:n_train]] = True

    train = [s for s, keep in zip(samples, in_train) if keep]
    test = [s for s, keep in zip(samples, in_train) if not keep]
    return train, test


@dataclass
class FoldAssignment:
    """Fold id per sample index."""
    fold_of_sample: np.ndarray
    k: int

    def indices(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        """(train indices, validation indices) for one fold."""
        val = np.flatnonzero(self.fold_of_sample == fold)
        train = np.flatnonzero(self.fold_of_sample != fold)
        return train, val

    def sizes(self) -> List[int]:
        return [int((self.fold_of_sample == f).sum()) for f in range(self.k)]


def stratified_kfold(samples: Sequence[Sample], k: int = 5, seed: int = 42) -> FoldAssignment:
    """
    Shuffle each class with the seeded generator and deal it round-robin.

    Each class starts dealing where the previous one stopped so fold sizes
    stay balanced as well as class counts.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    folds = np.full(len(samples), -1, dtype=np.int64)
    offset = 0
    for sentiment, indices in _by_class(samples).items():
        if not indices:
            continue
        if len(indices) < k:
            raise TooFewSamples(sentiment.label, len(indices), k)
        for j, i in enumerate(rng.permutation(indices)):
            folds[i] = (offset + j) % k
        offset = (offset + len(indices)) % k
    return FoldAssignment(fold_of_sample=folds, k=k)


# ============================================================================
# EDA
# ============================================================================

@dataclass
class NGramTable:
    n: int
    sentiment: Optional[Sentiment]
    counts: Dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def ngram_counts(samples: Sequence[Sample], n: int, sentiment: Optional[Sentiment] = None) -> NGramTable:
    """Word n-grams of preprocessed text; ``sentiment=None`` counts every sample."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    counts: Counter = Counter()
    for sample in samples:
        if sentiment is not None and sample.sentiment is not sentiment:
            continue
        words = preprocess_text(sample.text).split()
        counts.update(" ".join(words[i:i + n]) for i in range(len(words) - n + 1))
    return NGramTable(n=n, sentiment=sentiment, counts=dict(counts))


def top_ngrams(table: NGramTable, k: int = 10) -> List[Tuple[str, int]]:
    return sorted(table.counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


@dataclass
class Histogram:
    counts: np.ndarray
    edges: np.ndarray


def jaccard_distribution(samples: Sequence[Sample], bins: int = 10) -> Dict[Sentiment, Histogram]:
    """Histogram of jaccard(text, selected_text) per sentiment present."""
    from .evaluation import jaccard

    scores: Dict[Sentiment, List[float]] = {}
    for sample in samples:
        scores.setdefault(sample.sentiment, []).append(jaccard(sample.text, sample.selected_text))

    histograms = {}
    for sentiment in Sentiment:
        if sentiment in scores:
            counts, edges = np.histogram(scores[sentiment], bins=bins, range=(0.0, 1.0))
            histograms[sentiment] = Histogram(counts=counts, edges=edges)
    return histograms


def sentiment_distribution(samples: Sequence[Sample]) -> pd.DataFrame:
    counts = Counter(s.sentiment for s in samples)
    total = len(samples)
    return pd.DataFrame({
        'sentiment': [s.label for s in Sentiment],
        'count': [counts.get(s, 0) for s in Sentiment],
        'fraction': [counts.get(s, 0) / total if total else 0.0 for s in Sentiment],
    })


def length_statistics(samples: Sequence[Sample]) -> pd.DataFrame:
    """Mean/std/min/max of character length and word count per sentiment."""
    frame = pd.DataFrame({
        'sentiment': [s.sentiment.label for s in samples],
        'char_length': [len(s.text) for s in samples],
        'word_count': [len(s.text.split()) for s in samples],
    })
    if frame.empty:
        return pd.DataFrame()
    stats = frame.groupby('sentiment')[['char_length', 'word_count']].agg(['mean', 'std', 'min', 'max'])
    stats.columns = [f"{col}_{stat}" for col, stat in stats.columns]
    return stats.reset_index()
