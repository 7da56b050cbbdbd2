"""
Chart Builder Test Suite
========================
"""

import pandas as pd
import plotly.graph_objects as go
import pytest

from modules.corpus import Sentiment, jaccard_distribution, ngram_counts
from modules.evaluation import FoldReport
from modules.visualization import (
    create_fold_curve_chart, create_jaccard_histogram_chart, create_ngram_chart, create_sentiment_distribution_chart
)


def test_jaccard_histogram_has_one_trace_per_sentiment(toy_corpus):
    fig = create_jaccard_histogram_chart(jaccard_distribution(toy_corpus))
    assert isinstance(fig, go.Figure)
    assert {trace.name for trace in fig.data} == {s.label for s in Sentiment}


def test_ngram_chart_is_sorted_ascending_for_horizontal_bars(toy_corpus):
    fig = create_ngram_chart(ngram_counts(toy_corpus, 1, Sentiment.POSITIVE), k=5)
    counts = list(fig.data[0].x)
    assert len(counts) == 5
    assert counts == sorted(counts)
    assert "positive" in fig.layout.title.text


def test_sentiment_distribution_chart():
    fig = create_sentiment_distribution_chart({'positive': 3, 'negative': 2, 'neutral': 1},
                                              {'positive': [10, 20, 30]})
    assert list(fig.data[0].y) == [3, 2, 1]
    assert fig.data[1].name == "positive"


def test_fold_curve_chart(tmp_path):
    history = pd.DataFrame([
        {'fold': f, 'epoch': e, 'lr': 1e-3, 'train_loss': 1.0 - 0.1 * e, 'jaccard': 0.5 + 0.1 * e}
        for f in range(3) for e in range(4)
    ])
    best = history[history['epoch'] == 3].reset_index(drop=True)
    report = FoldReport(experiment="[TR]_[SE]_[Esc]_[ROB]", metric_name="jaccard", seed=1, config_hash="x",
                        history=history, best=best)
    fig = create_fold_curve_chart(report)
    assert len(fig.data) == 3
    assert list(fig.data[1].y) == pytest.approx([0.5, 0.6, 0.7, 0.8])
    fig.write_html(tmp_path / "curve.html", include_plotlyjs="cdn")
    assert "<html>" in (tmp_path / "curve.html").read_text(encoding="utf-8")
