# coding: utf-8
"""
Error Hierarchy
===============
Every failure the pipeline can surface, grouped by family.

Each family carries the process exit code the CLI returns for it, the same
way a route maps a failure onto an HTTP status code.
"""

from typing import Optional


class SpanSentError(Exception):
    """Base class for all pipeline errors."""
    exit_code: int = 1


# ----------------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------------

class ConfigError(SpanSentError):
    """Invalid or unreadable configuration."""
    exit_code = 3


# ----------------------------------------------------------------------------
# Dataset ingestion and splitting
# ----------------------------------------------------------------------------

class DataError(SpanSentError):
    exit_code = 4


class MissingColumn(DataError):
    def __init__(self, column: str):
        super().__init__(f"CSV is missing required column '{column}'")
        self.column = column


class MalformedRow(DataError):
    def __init__(self, row: Optional[int], reason: str):
        where = f"row {row}" if row is not None else "unknown row"
        super().__init__(f"Malformed CSV {where}: {reason}")
        self.row = row


class EmptyInput(DataError):
    pass


class TooFewSamples(DataError):
    def __init__(self, label: str, count: int, k: int):
        super().__init__(f"Class '{label}' has {count} samples, fewer than k={k}")
        self.label = label


# ----------------------------------------------------------------------------
# Spans
# ----------------------------------------------------------------------------

class SpanError(SpanSentError):
    exit_code = 5


class SpanUnrecoverable(SpanError):
    pass


class BadSpan(SpanError):
    pass


class OutOfRegion(SpanError):
    pass


class NoValidPosition(SpanError):
    pass


class BadLengths(SpanError):
    pass


# ----------------------------------------------------------------------------
# Tokenizer
# ----------------------------------------------------------------------------

class TokenizerError(SpanSentError):
    exit_code = 6


class VocabTooSmall(TokenizerError):
    pass


class UnknownId(TokenizerError):
    pass


class TooLong(TokenizerError):
    pass


class VocabularyFormat(TokenizerError):
    pass


# ----------------------------------------------------------------------------
# Numerics
# ----------------------------------------------------------------------------

class NumericError(SpanSentError):
    exit_code = 7


class ShapeMismatch(NumericError):
    pass


class BadAlpha(NumericError):
    pass


class DisconnectedGraph(NumericError):
    pass


class UninitializedState(NumericError):
    pass


class LengthMismatch(NumericError):
    pass


class DegenerateLabels(NumericError):
    pass


# ----------------------------------------------------------------------------
# Models and checkpoints
# ----------------------------------------------------------------------------

class ModelError(SpanSentError):
    exit_code = 8


class BadConfig(ModelError):
    pass


class VocabOverflow(ModelError):
    pass


class ModelMissing(ModelError):
    pass


class CheckpointFormat(ModelError):
    pass


IO_EXIT_CODE = 9
