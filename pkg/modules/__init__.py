"""
SpanSent - Core Modules
=======================
Tweet sentiment classification and coverage-refined subsentence extraction.
"""

from .config import ExperimentConfig, RefinementParams, load_config
from .corpus import Sample, Sentiment, correct_corpus, load_csv, preprocess_text
from .coverage import compute_coverage, refine
from .evaluation import auc, f1, jaccard, run_experiment
from .pipeline import ModelBundle, Pipeline, ensemble_average
from .synthetic import SyntheticTweetGenerator
from .tokenizer import Vocabulary, assemble_example, train_bpe

__all__ = [
    'ExperimentConfig',
    'RefinementParams',
    'load_config',
    'Sample',
    'Sentiment',
    'correct_corpus',
    'load_csv',
    'preprocess_text',
    'compute_coverage',
    'refine',
    'auc',
    'f1',
    'jaccard',
    'run_experiment',
    'ModelBundle',
    'Pipeline',
    'ensemble_average',
    'SyntheticTweetGenerator',
    'Vocabulary',
    'assemble_example',
    'train_bpe'
]

__version__ = '1.0.0'
__author__ = 'SpanSent Team'
