# coding: utf-8
"""
Experiment Configuration
========================
Pydantic schemas for every hyperparameter plus the flat ``key = value``
config file format.

A config file holds one key per line, ``#`` starts a comment and dotted
keys address nested models::

    dataset = TR_CORR
    task = SE
    encoding = Esc
    encoder_size = ROB
    seed = 42
    training.epochs = 5
    refinement.kappa = 15
"""

import hashlib
import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "SPANSENT_CONFIG"


class Dataset(str, Enum):
    TR = "TR"
    TR_CORR = "TR_CORR"


class Task(str, Enum):
    SC = "SC"
    SE = "SE"


class SpanEncoding(str, Enum):
    """Auxiliary inputs of the span extractor."""
    EN = "En"     # text only
    ES = "Es"     # text + sentiment
    ESC = "Esc"   # text + sentiment + coverage


class EncoderSize(str, Enum):
    BERT = "BERT"
    ROB = "ROB"
    ROB_L = "ROB_L"


# ============================================================================
# MODEL HYPERPARAMETERS
# ============================================================================

class EncoderConfig(BaseModel):
    """Transformer encoder shape."""
    n_layers: int = Field(2, ge=1)
    n_heads: int = Field(4, ge=1)
    hidden_dim: int = Field(64, ge=1)
    ff_dim: int = Field(256, ge=1)
    max_len: int = Field(96, ge=6)
    vocab_size: int = Field(1000, ge=1)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)

    @classmethod
    def preset(cls, name: str, **overrides) -> "EncoderConfig":
        if name not in ENCODER_PRESETS:
            raise ConfigError(f"Unknown encoder preset '{name}'. Known: {sorted(ENCODER_PRESETS)}")
        values = dict(ENCODER_PRESETS[name])
        values.update(overrides)
        return cls(**values)


ENCODER_PRESETS: Dict[str, Dict[str, int]] = {
    'desk_small': {'n_layers': 1, 'n_heads': 2, 'hidden_dim': 32, 'ff_dim': 128},
    'desk': {'n_layers': 2, 'n_heads': 4, 'hidden_dim': 64, 'ff_dim': 256},
    'desk_large': {'n_layers': 4, 'n_heads': 4, 'hidden_dim': 64, 'ff_dim': 256},
    'base': {'n_layers': 12, 'n_heads': 12, 'hidden_dim': 768, 'ff_dim': 3072},
}

SIZE_PRESETS: Dict[EncoderSize, str] = {
    EncoderSize.BERT: 'desk_small',
    EncoderSize.ROB: 'desk',
    EncoderSize.ROB_L: 'desk_large',
}


class HeadConfig(BaseModel):
    classifier_dropout: float = Field(0.1, ge=0.0, lt=1.0)
    span_dropout: float = Field(0.3, ge=0.0, lt=1.0)
    conv_channels: List[int] = Field(default_factory=lambda: [256, 128, 64])
    conv_kernel: int = Field(3, ge=1)
    fc_dim: int = Field(32, ge=1)

    @model_validator(mode="after")
    def _check_channels(self) -> "HeadConfig":
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise ValueError("conv_channels must be a non-empty list of positive ints")
        if self.conv_kernel % 2 == 0:
            raise ValueError("conv_kernel must be odd for same padding")
        return self


class TrainingConfig(BaseModel):
    epochs: int = Field(5, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(3e-5, gt=0.0)
    gamma: float = Field(0.1, gt=0.0, le=1.0)
    milestones: List[int] = Field(default_factory=lambda: [3, 4, 5])
    label_smoothing: float = Field(0.1, ge=0.0, le=1.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    coverage_jitter: int = Field(1, ge=0)


class TokenizerConfig(BaseModel):
    vocab_size: int = Field(2000, ge=260)
    max_len: int = Field(96, ge=6)
    vocab_path: Optional[str] = None
    merges_path: Optional[str] = None


class RefinementParams(BaseModel):
    """Coverage refinement knobs."""
    epsilon: float = Field(0.1, gt=0.0, lt=1.0)
    kappa: float = Field(15.0, gt=0.0)
    max_iterations: int = Field(1, ge=1)

    @property
    def n_buckets(self) -> int:
        return int(self.kappa) + 1


# ============================================================================
# EXPERIMENT
# ============================================================================

class ExperimentConfig(BaseModel):
    """One cell of the experiment matrix."""
    dataset: Dataset = Dataset.TR
    task: Task = Task.SE
    encoding: Optional[SpanEncoding] = SpanEncoding.ES
    encoder_size: EncoderSize = EncoderSize.ROB
    seed: int = 42
    folds: int = Field(5, ge=2)
    train_ratio: float = Field(0.8, gt=0.0, lt=1.0)

    # Corpus source. None means the built-in synthetic benchmark.
    csv_path: Optional[str] = None
    synthetic_samples: int = Field(500, ge=10)

    encoder: Optional[EncoderConfig] = None
    head: HeadConfig = Field(default_factory=HeadConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    tokenizer: TokenizerConfig = Field(default_factory=TokenizerConfig)
    refinement: RefinementParams = Field(default_factory=RefinementParams)

    @model_validator(mode="after")
    def _check_task(self) -> "ExperimentConfig":
        if self.task == Task.SC:
            self.encoding = None
        elif self.encoding is None:
            raise ValueError("span extraction needs an encoding (En, Es or Esc)")
        return self

    @property
    def name(self) -> str:
        parts = [self.dataset.value, self.task.value]
        if self.encoding is not None:
            parts.append(self.encoding.value)
        parts.append(self.encoder_size.value)
        return "_".join(f"[{p}]" for p in parts)

    def encoder_config(self, vocab_size: Optional[int] = None) -> EncoderConfig:
        """Explicit encoder section, or the preset for the size tag."""
        base = self.encoder or EncoderConfig.preset(SIZE_PRESETS[self.encoder_size])
        updates: Dict[str, Any] = {'max_len': max(base.max_len, self.tokenizer.max_len)}
        if vocab_size is not None:
            updates['vocab_size'] = vocab_size
        return base.model_copy(update=updates)


class EnsembleSpec(BaseModel):
    """Ordered checkpoint members and their fusion weights."""
    members: List[str]
    weights: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_weights(self) -> "EnsembleSpec":
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        if self.weights is None:
            self.weights = [1.0 / len(self.members)] * len(self.members)
        if len(self.weights) != len(self.members):
            raise ValueError("weights and members differ in length")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {sum(self.weights)}, expected 1")
        return self


class PredictionRecord(BaseModel):
    """Structured output of the predict command."""
    input: str
    sentiment: str
    probs: Dict[str, float]
    span_tokens: List[int]
    span_chars: List[int]
    subsentence: str
    refined: bool
    cam: Optional[List[Dict[str, Any]]] = None
    inference_ms: Optional[float] = None


# ============================================================================
# FLAT FILE FORMAT
# ============================================================================

def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",") if part.strip()]
    return raw


def parse_flat(text: str) -> Dict[str, Any]:
    """Parse ``key = value`` lines into a nested dict."""
    tree: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        path = [k.strip() for k in key.strip().split(".")]
        if not all(path):
            raise ConfigError(f"line {lineno}: empty key segment in {key.strip()!r}")
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: '{part}' is both a value and a section")
        node[path[-1]] = _parse_value(value)
    return tree


def _flatten(tree: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in tree.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, full + "."))
        else:
            flat[full] = value
    return flat


def dump_config(config: ExperimentConfig) -> str:
    """Render a config deterministically (sorted keys, JSON values)."""
    flat = _flatten(config.model_dump(mode="json", exclude_none=True))
    return "".join(f"{key} = {json.dumps(flat[key])}\n" for key in sorted(flat))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"Cannot read config {path}: {e}") from e
    return build_config(parse_flat(text))


def resolve_config_path(flag_path: Optional[str]) -> str:
    """The environment variable wins over the --config flag."""
    env_path = os.environ.get(CONFIG_ENV_VAR)
    if env_path:
        if flag_path and flag_path != env_path:
            logger.info(f"{CONFIG_ENV_VAR} overrides --config: {env_path}")
        return env_path
    if not flag_path:
        raise ConfigError(f"No config given: pass --config or set {CONFIG_ENV_VAR}")
    return flag_path
