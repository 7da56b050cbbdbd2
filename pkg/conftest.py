"""
Shared pytest fixtures: a small trained vocabulary, desk-scale model
shapes and an untrained three-stage models directory.
"""

import pytest

from modules.checkpoint import CheckpointManifest, save_checkpoint
from modules.config import (
    EncoderConfig, ExperimentConfig, HeadConfig, SpanEncoding, Task, TokenizerConfig, config_hash, dump_config
)
from modules.stages import build_model
from modules.synthetic import SyntheticTweetGenerator
from modules.tokenizer import train_bpe

TOY_MAX_LEN = 48


@pytest.fixture(scope="session")
def toy_corpus():
    return SyntheticTweetGenerator(seed=11).generate(120)


@pytest.fixture(scope="session")
def toy_vocab(toy_corpus):
    texts = [s.text for s in toy_corpus] + ["hello this is a really good wine"]
    return train_bpe(texts, vocab_size=700)


@pytest.fixture
def encoder_config(toy_vocab):
    return EncoderConfig.preset('desk_small', vocab_size=len(toy_vocab), max_len=TOY_MAX_LEN)


@pytest.fixture
def head_config():
    return HeadConfig(conv_channels=[16, 8, 8], fc_dim=8)


def write_stage(directory, config, vocab, seeds):
    """Experiment directory with one freshly initialized checkpoint per seed."""
    directory.mkdir(parents=True)
    (directory / "config.txt").write_text(dump_config(config), encoding="utf-8")
    vocab.save(directory / "vocab.json", directory / "merges.txt")
    for fold, seed in enumerate(seeds):
        model = build_model(config, len(vocab), seed=seed)
        manifest = CheckpointManifest(
            experiment=config.name,
            task=config.task.value,
            encoding=config.encoding.value if config.encoding else None,
            config_hash=config_hash(config),
            config=dump_config(config),
            seed=seed,
            fold=fold,
            epoch=0,
            metric_name="jaccard",
            metric=0.5,
            vocab_size=len(vocab),
        )
        save_checkpoint(directory / f"fold_{fold}.ckpt", model.state_dict(), manifest)


@pytest.fixture
def models_dir(tmp_path, toy_vocab, encoder_config, head_config):
    root = tmp_path / "models"
    common = dict(encoder=encoder_config, head=head_config, tokenizer=TokenizerConfig(max_len=64))
    write_stage(root / "classifier", ExperimentConfig(task=Task.SC, **common), toy_vocab, [1, 2])
    write_stage(root / "span", ExperimentConfig(task=Task.SE, encoding=SpanEncoding.ES, **common),
                toy_vocab, [3, 4])
    write_stage(root / "coverage", ExperimentConfig(task=Task.SE, encoding=SpanEncoding.ESC, **common),
                toy_vocab, [5, 6])
    return root
