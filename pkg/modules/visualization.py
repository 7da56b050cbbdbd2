# coding: utf-8
"""
Plotly Chart Builders
=====================
Dark-mode charts for corpus exploration and cross-validation curves.
Every builder returns a ``go.Figure``; callers write it with
``fig.write_html``.
"""

from typing import Dict, List, Optional

import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from .corpus import Histogram, NGramTable, Sentiment, top_ngrams
from .evaluation import FoldReport


# Dark-mode color scheme
COLORS = {
    'positive': '#6BCF7F',   # Green
    'negative': '#FF4B4B',   # Red
    'neutral': '#FFD93D',    # Gold
    'train': '#00D9FF',      # Cyan
    'validation': '#FF9F43', # Orange
    'background': '#0E1117',
    'grid_color': '#262730'
}


def _dark_layout(fig: go.Figure, title: str, x_title: str, y_title: str, height: int = 450):
    fig.update_layout(
        title=dict(
            text=title,
            font=dict(size=16, color='white'),
            x=0.5,
            xanchor='center'
        ),
        xaxis=dict(title=x_title, showgrid=True, gridcolor=COLORS['grid_color'], color='white'),
        yaxis=dict(title=y_title, showgrid=True, gridcolor=COLORS['grid_color'], color='white'),
        plot_bgcolor=COLORS['background'],
        paper_bgcolor=COLORS['background'],
        font=dict(color='white'),
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
        height=height
    )


def create_jaccard_histogram_chart(histograms: Dict[Sentiment, Histogram]) -> go.Figure:
    """
    Distribution of jaccard(text, selected_text) per sentiment.

    Bars are drawn at bin centers and overlaid.
    """
    fig = go.Figure()
    for sentiment, hist in histograms.items():
        centers = (hist.edges[:-1] + hist.edges[1:]) / 2.0
        fig.add_trace(
            go.Bar(
                x=centers,
                y=hist.counts,
                name=sentiment.label,
                marker_color=COLORS[sentiment.label],
                opacity=0.6,
                hovertemplate='Jaccard %{x:.2f}: %{y} samples<extra></extra>'
            )
        )
    fig.update_layout(barmode='overlay')
    _dark_layout(fig, "<b>LABEL OVERLAP</b> | Jaccard(text, selected_text)", "Jaccard score", "Samples")
    return fig


def create_ngram_chart(table: NGramTable, k: int = 10) -> go.Figure:
    """Horizontal bars of the k most frequent n-grams."""
    top = top_ngrams(table, k)
    color = COLORS[table.sentiment.label] if table.sentiment is not None else COLORS['train']
    scope = table.sentiment.label if table.sentiment is not None else "all"
    fig = go.Figure(
        go.Bar(
            x=[count for _, count in reversed(top)],
            y=[gram for gram, _ in reversed(top)],
            orientation='h',
            marker_color=color,
            hovertemplate='%{y}: %{x}<extra></extra>'
        )
    )
    _dark_layout(fig, f"<b>TOP {k} {table.n}-GRAMS</b> | {scope}", "Count", "")
    return fig


def create_sentiment_distribution_chart(counts: Dict[str, int], char_lengths: Optional[Dict[str, List[int]]] = None) -> go.Figure:
    """Sentiment counts (left) and character-length box plots (right)."""
    fig = make_subplots(rows=1, cols=2, subplot_titles=("Samples per sentiment", "Text length (chars)"))
    labels = list(counts)
    fig.add_trace(
        go.Bar(
            x=labels,
            y=[counts[label] for label in labels],
            marker_color=[COLORS.get(label, COLORS['train']) for label in labels],
            showlegend=False
        ),
        row=1, col=1
    )
    for label, lengths in (char_lengths or {}).items():
        fig.add_trace(
            go.Box(y=lengths, name=label, marker_color=COLORS.get(label, COLORS['train'])),
            row=1, col=2
        )
    fig.update_layout(
        plot_bgcolor=COLORS['background'],
        paper_bgcolor=COLORS['background'],
        font=dict(color='white'),
        height=450
    )
    return fig


def create_fold_curve_chart(report: FoldReport) -> go.Figure:
    """
    Per-epoch validation metric across folds: mean line with a
    plus/minus one standard deviation band, plus mean training loss on
    the secondary axis.
    """
    summary = report.epoch_summary()
    metric = report.metric_name
    epochs = summary['epoch'].to_numpy()
    mean = summary[f"{metric}_mean"].to_numpy()
    std = summary[f"{metric}_std"].to_numpy()

    fig = make_subplots(rows=1, cols=1, specs=[[{"secondary_y": True}]])

    # Shaded band: upper edge then lower edge reversed
    fig.add_trace(
        go.Scatter(
            x=np.concatenate([epochs, epochs[::-1]]),
            y=np.concatenate([mean + std, (mean - std)[::-1]]),
            fill='toself',
            fillcolor='rgba(255, 159, 67, 0.2)',
            line=dict(color='rgba(0, 0, 0, 0)'),
            hoverinfo='skip',
            name=f"{metric} ± std"
        ),
        secondary_y=False
    )
    fig.add_trace(
        go.Scatter(
            x=epochs,
            y=mean,
            name=f"validation {metric}",
            line=dict(color=COLORS['validation'], width=2),
            hovertemplate='%{y:.4f}<extra></extra>'
        ),
        secondary_y=False
    )
    fig.add_trace(
        go.Scatter(
            x=epochs,
            y=summary['train_loss_mean'].to_numpy(),
            name="train loss",
            line=dict(color=COLORS['train'], width=2, dash='dot'),
            hovertemplate='%{y:.4f}<extra></extra>'
        ),
        secondary_y=True
    )
    _dark_layout(fig, f"<b>{report.experiment}</b> | {report.n_folds}-fold validation", "Epoch", metric)
    fig.update_layout(yaxis2=dict(title="Train loss", showgrid=False, color='white'))
    return fig
