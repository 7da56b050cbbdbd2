"""
Model Test Suite
================
Encoder, task heads, stage models and the checkpoint container.
"""

import itertools

import numpy as np
import pytest

from modules.checkpoint import CheckpointManifest, load_checkpoint, save_checkpoint
from modules.config import EncoderConfig, ExperimentConfig, SpanEncoding, Task, TokenizerConfig
from modules.corpus import Sentiment
from modules.coverage import coverage_features
from modules.encoder import EncoderModel
from modules.errors import BadConfig, CheckpointFormat, NoValidPosition, ShapeMismatch, VocabOverflow
from modules.heads import ClassifierHead, SpanHead, SpanLogits, classify, decode_span, span_logits
from modules.numcore import Tensor, backward, cross_entropy_smoothed, grad_check, smooth_labels
from modules.stages import SentimentClassifier, SpanExtractor, build_model, make_batch
from modules.synthetic import FILLER_WORDS, NEGATIVE_WORDS, POSITIVE_WORDS
from modules.tokenizer import SpanLabel, assemble_example
from modules.training import FoldTrainer, gold_coverage, prepare_examples

SENTENCE = "so happy with my friends today"


def brute_force_span(start, end, valid):
    best, best_pair = -np.inf, None
    positions = np.flatnonzero(valid)
    for s, e in itertools.product(positions, positions):
        if s <= e and start[s] + end[e] > best:
            best, best_pair = start[s] + end[e], (int(s), int(e))
    return best_pair


# ============================================================================
# ENCODER
# ============================================================================

def test_encoder_output_shape(toy_vocab, encoder_config):
    encoder = EncoderModel(encoder_config, seed=0).eval()
    enc = assemble_example(toy_vocab, SENTENCE, Sentiment.POSITIVE, max_len=encoder_config.max_len)
    assert encoder.forward(enc).shape == (encoder_config.max_len, encoder_config.hidden_dim)


def test_encoder_init_is_seeded(encoder_config):
    a, b, c = EncoderModel(encoder_config, seed=4), EncoderModel(encoder_config, seed=4), EncoderModel(encoder_config, seed=5)
    for name, value in a.state_dict().items():
        np.testing.assert_array_equal(value, b.state_dict()[name])
    assert not np.array_equal(a.state_dict()['token_embedding.weight'], c.state_dict()['token_embedding.weight'])


def test_encoder_rejects_indivisible_heads():
    with pytest.raises(BadConfig):
        EncoderModel(EncoderConfig(hidden_dim=30, n_heads=4, vocab_size=10))


def test_desk_preset():
    config = EncoderConfig.preset('desk')
    assert (config.n_layers, config.n_heads, config.hidden_dim) == (2, 4, 64)


def test_encoder_padding_invariance(toy_vocab):
    """Test: features of real tokens do not depend on how much padding follows."""
    config = EncoderConfig.preset('desk_small', vocab_size=len(toy_vocab), max_len=64)
    encoder = EncoderModel(config, seed=1).eval()
    rng = np.random.default_rng(17)
    words = POSITIVE_WORDS + NEGATIVE_WORDS + FILLER_WORDS
    sentiments = [Sentiment.POSITIVE, Sentiment.NEGATIVE, Sentiment.NEUTRAL, None]
    for _ in range(100):
        sentence = " ".join(words[i] for i in rng.integers(0, len(words), size=int(rng.integers(1, 9))))
        sentiment = sentiments[int(rng.integers(0, len(sentiments)))]
        short = assemble_example(toy_vocab, sentence, sentiment, max_len=32)
        long = assemble_example(toy_vocab, sentence, sentiment, max_len=64)
        used = int(short.attention_mask.sum())
        np.testing.assert_allclose(
            encoder.forward(short).data[:used], encoder.forward(long).data[:used], atol=1e-9, err_msg=sentence
        )


def test_encoder_ignores_masked_pad_ids(toy_vocab, encoder_config):
    encoder = EncoderModel(encoder_config, seed=2).eval()
    enc = assemble_example(toy_vocab, SENTENCE, Sentiment.NEGATIVE, max_len=encoder_config.max_len)
    used = int(enc.attention_mask.sum())
    altered = enc.input_ids.copy()
    altered[used:] = toy_vocab.sentiment_id(Sentiment.POSITIVE)
    base = encoder.forward_batch(enc.input_ids[None], enc.attention_mask[None]).data[0]
    other = encoder.forward_batch(altered[None], enc.attention_mask[None]).data[0]
    np.testing.assert_allclose(base[:used], other[:used], atol=1e-12)


def test_encoder_vocab_overflow(encoder_config):
    encoder = EncoderModel(encoder_config, seed=0).eval()
    ids = np.zeros((1, 8), dtype=np.int64)
    ids[0, 3] = encoder_config.vocab_size
    with pytest.raises(VocabOverflow):
        encoder.forward_batch(ids, np.ones((1, 8)))


def test_encoder_rejects_overlong_input(encoder_config):
    encoder = EncoderModel(encoder_config, seed=0).eval()
    length = encoder_config.max_len + 1
    with pytest.raises(ShapeMismatch):
        encoder.forward_batch(np.zeros((1, length), dtype=np.int64), np.ones((1, length)))


# ============================================================================
# HEADS
# ============================================================================

def test_classify_sums_to_one(encoder_config, head_config):
    rng = np.random.default_rng(0)
    head = ClassifierHead(encoder_config.hidden_dim, head_config, rng).eval()
    probs = classify(head, Tensor(rng.normal(size=(10, encoder_config.hidden_dim))))
    assert probs.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert set(probs.as_dict()) == {'positive', 'negative', 'neutral'}


def test_zero_weight_head_is_uniform(encoder_config, head_config):
    rng = np.random.default_rng(0)
    head = ClassifierHead(encoder_config.hidden_dim, head_config, rng).eval()
    head.linear.weight.data = np.zeros_like(head.linear.weight.data)
    probs = classify(head, Tensor(rng.normal(size=(10, encoder_config.hidden_dim))))
    np.testing.assert_allclose(probs.probs, [1 / 3] * 3, atol=1e-12)
    assert probs.sentiment is Sentiment.POSITIVE


def test_classify_rejects_batched_features(encoder_config, head_config):
    head = ClassifierHead(encoder_config.hidden_dim, head_config, np.random.default_rng(0)).eval()
    with pytest.raises(ShapeMismatch):
        classify(head, Tensor(np.zeros((2, 10, encoder_config.hidden_dim))))


def test_span_logits_shape(encoder_config, head_config):
    rng = np.random.default_rng(0)
    head = SpanHead(encoder_config.hidden_dim, head_config, rng).eval()
    valid = np.zeros(12, dtype=bool)
    valid[1:8] = True
    logits = span_logits(head, Tensor(rng.normal(size=(12, encoder_config.hidden_dim))), valid)
    assert logits.start_logits.shape == (12,)
    assert logits.end_logits.shape == (12,)


def test_span_head_needs_conditioning(encoder_config, head_config):
    head = SpanHead(encoder_config.hidden_dim, head_config, np.random.default_rng(0), use_sentiment=True).eval()
    with pytest.raises(ShapeMismatch):
        head(Tensor(np.zeros((1, 6, encoder_config.hidden_dim))))


def test_decode_span_examples():
    start = np.zeros(10)
    end = np.zeros(10)
    start[5], end[6] = 4.0, 4.0
    valid = np.zeros(10, dtype=bool)
    valid[1:9] = True
    assert decode_span(SpanLogits(start, end, valid)) == (5, 6)

    single = np.zeros(10, dtype=bool)
    single[3] = True
    assert decode_span(SpanLogits(start, end, single)) == (3, 3)


def test_decode_span_inverted_peaks():
    start = np.array([0.0, 0.1, 0.0, 0.0, 5.0, 0.0])
    end = np.array([0.0, 3.0, 0.0, 0.0, 0.0, 0.2])
    valid = np.array([False, True, True, True, True, True])
    s, e = decode_span(SpanLogits(start, end, valid))
    assert s <= e
    assert (s, e) == brute_force_span(start, end, valid)


def test_decode_span_ties_go_to_smallest():
    zeros = np.zeros(6)
    valid = np.ones(6, dtype=bool)
    assert decode_span(SpanLogits(zeros, zeros, valid)) == (0, 0)


def test_decode_span_no_valid_position():
    with pytest.raises(NoValidPosition):
        decode_span(SpanLogits(np.zeros(4), np.zeros(4), np.zeros(4, dtype=bool)))


def test_decode_span_matches_brute_force():
    """Test: joint argmax equals the O(L^2) search on fuzzed logits, integer ties included."""
    rng = np.random.default_rng(0)
    for trial in range(1000):
        length = int(rng.integers(1, 16))
        if trial % 2:
            start, end = rng.integers(-2, 3, size=length).astype(float), rng.integers(-2, 3, size=length).astype(float)
        else:
            start, end = rng.normal(size=length), rng.normal(size=length)
        valid = rng.random(length) < 0.7
        if not valid.any():
            valid[int(rng.integers(0, length))] = True
        s, e = decode_span(SpanLogits(start, end, valid))
        assert valid[s] and valid[e] and s <= e
        assert (s, e) == brute_force_span(start, end, valid)


# ============================================================================
# STAGE MODELS
# ============================================================================

def test_build_model_per_task(head_config):
    sc = build_model(ExperimentConfig(task=Task.SC, encoder_size='BERT', head=head_config), vocab_size=300)
    assert isinstance(sc, SentimentClassifier)

    esc = build_model(ExperimentConfig(task=Task.SE, encoding=SpanEncoding.ESC, encoder_size='BERT', head=head_config), 300)
    assert isinstance(esc, SpanExtractor)
    assert esc.uses_sentiment and esc.uses_coverage

    en = build_model(ExperimentConfig(task=Task.SE, encoding=SpanEncoding.EN, encoder_size='BERT', head=head_config), 300)
    assert not en.uses_sentiment and not en.uses_coverage


def test_classifier_predictions_are_deterministic(toy_vocab, encoder_config, head_config):
    model = SentimentClassifier(encoder_config, head_config, seed=3)
    enc = model.encode(toy_vocab, SENTENCE, encoder_config.max_len)
    first, second = model.predict_proba(enc), model.predict_proba(enc)
    np.testing.assert_array_equal(first, second)
    assert first.sum() == pytest.approx(1.0, abs=1e-9)


def test_token_activations_normalized(toy_vocab, encoder_config, head_config):
    model = SentimentClassifier(encoder_config, head_config, seed=3)
    enc = model.encode(toy_vocab, SENTENCE, encoder_config.max_len)
    scores = model.token_activations(enc)
    assert scores.shape == (enc.n_text_tokens,)
    assert np.all(scores >= 0)
    assert scores.sum() == pytest.approx(1.0, abs=1e-12)


def test_span_extractor_spans_stay_in_region(toy_vocab, toy_corpus, encoder_config, head_config):
    es = SpanExtractor(encoder_config, head_config, mode=SpanEncoding.ES, seed=0)
    esc = SpanExtractor(encoder_config, head_config, mode=SpanEncoding.ESC, seed=0)
    for sample in toy_corpus[:20]:
        enc = es.encode(toy_vocab, sample.text, sample.sentiment, encoder_config.max_len)
        s, e = es.predict_span(enc, sample.sentiment)
        assert 1 <= s <= e <= enc.n_text_tokens

        features = coverage_features(7.5, enc.text_region, enc.max_len, enc.n_text_tokens)
        s, e = esc.predict_span(enc, sample.sentiment, features)
        assert 1 <= s <= e <= enc.n_text_tokens


def test_span_probs_vanish_outside_region(toy_vocab, encoder_config, head_config):
    model = SpanExtractor(encoder_config, head_config, mode=SpanEncoding.ES, seed=0)
    enc = model.encode(toy_vocab, SENTENCE, Sentiment.POSITIVE, encoder_config.max_len)
    start, end = model.span_probs(enc, Sentiment.POSITIVE)
    assert start.sum() == pytest.approx(1.0) and end.sum() == pytest.approx(1.0)
    assert np.all(start[~enc.valid_mask] == 0.0) and np.all(end[~enc.valid_mask] == 0.0)


def test_en_mode_drops_sentiment_token(toy_vocab, encoder_config, head_config):
    model = SpanExtractor(encoder_config, head_config, mode=SpanEncoding.EN, seed=0)
    enc = model.encode(toy_vocab, SENTENCE, Sentiment.POSITIVE, encoder_config.max_len)
    assert enc.input_ids[enc.n_text_tokens + 3] == toy_vocab.sentiment_id(None)


def test_share_encoder(encoder_config, head_config):
    base = SpanExtractor(encoder_config, head_config, mode=SpanEncoding.ES, seed=0)
    coverage = SpanExtractor(encoder_config, head_config, mode=SpanEncoding.ESC, seed=1)
    coverage.share_encoder(base)
    assert coverage.encoder is base.encoder
    shared = dict(coverage.named_parameters())['encoder.token_embedding.weight']
    assert shared is base.encoder.token_embedding.weight


def test_make_batch_targets(toy_vocab):
    with_span = assemble_example(toy_vocab, SENTENCE, Sentiment.POSITIVE, SpanLabel.locate(SENTENCE, "happy"), max_len=32)
    without = assemble_example(toy_vocab, SENTENCE, Sentiment.NEUTRAL, max_len=32)
    batch = make_batch([with_span, without], [Sentiment.POSITIVE, Sentiment.NEUTRAL], with_targets=True)
    assert len(batch) == 2
    assert batch.labels.tolist() == [0, 2]
    assert batch.start_idx[0] == with_span.start_index
    assert batch.start_idx[1] == -1


def test_full_classifier_grad_check(toy_vocab, toy_corpus, encoder_config, head_config):
    """Test: reverse-mode gradients of the whole classifier loss match finite differences."""
    model = SentimentClassifier(encoder_config, head_config, seed=0).eval()
    encodings = [model.encode(toy_vocab, s.text, encoder_config.max_len) for s in toy_corpus[:3]]
    batch = make_batch(encodings, [s.sentiment for s in toy_corpus[:3]], with_targets=True)
    targets = smooth_labels(np.eye(3)[batch.labels], 0.1, 3)
    loss = lambda: cross_entropy_smoothed(model.logits(batch), targets)
    assert loss().item() < 10.0
    assert grad_check(loss, model.parameters(), n_samples=3, seed=1) < 1e-4


@pytest.mark.parametrize("task,encoding", [
    (Task.SC, None),
    (Task.SE, SpanEncoding.EN),
    (Task.SE, SpanEncoding.ES),
    (Task.SE, SpanEncoding.ESC),
])
def test_gradient_reaches_every_parameter(task, encoding, toy_vocab, toy_corpus, encoder_config, head_config):
    """Test: one backward pass of the training loss touches every parameter."""
    config = ExperimentConfig(
        task=task, encoding=encoding, encoder=encoder_config, head=head_config,
        tokenizer=TokenizerConfig(max_len=encoder_config.max_len),
    )
    model = build_model(config, len(toy_vocab), seed=0).eval()
    examples = prepare_examples(config, toy_vocab, toy_corpus[:12])
    assert examples
    coverage = None
    if encoding == SpanEncoding.ESC:
        rng = np.random.default_rng(0)
        coverage = [gold_coverage(config, e.encoding, e.gold_span, rng) for e in examples]
    batch = make_batch(
        [e.encoding for e in examples], [e.sample.sentiment for e in examples], coverage=coverage, with_targets=True
    )
    model.zero_grad()
    backward(FoldTrainer(config, toy_vocab).loss(model, batch))
    for name, p in model.named_parameters():
        assert p.grad is not None, name
        assert np.any(p.grad != 0), name


def test_attention_contributions_sum_to_bos_output(toy_vocab, encoder_config):
    encoder = EncoderModel(encoder_config, seed=5).eval()
    enc = assemble_example(toy_vocab, SENTENCE, None, max_len=encoder_config.max_len)
    x, bias = encoder._embed(enc.input_ids[None], enc.attention_mask[None])
    block = encoder.blocks[0]
    normed = block.ln_attn(x)
    parts = block.attention.contributions(normed, bias)
    assert parts.shape == (encoder_config.max_len, encoder_config.hidden_dim)
    expected = block.attention(normed, bias).data[0, 0] - block.attention.out.bias.data
    np.testing.assert_allclose(parts.sum(axis=0), expected, atol=1e-10)
    used = int(enc.attention_mask.sum())
    np.testing.assert_allclose(parts[used:], 0.0, atol=1e-12)
    assert encoder.bos_contributions(enc).shape == parts.shape


# ============================================================================
# CHECKPOINTS
# ============================================================================

def _manifest(**overrides):
    values = dict(
        experiment="[TR]_[SC]_[BERT]", task="SC", config_hash="abc", config="task = \"SC\"\n",
        seed=42, fold=0, epoch=2, metric_name="f1", metric=0.5, vocab_size=300,
    )
    values.update(overrides)
    return CheckpointManifest(**values)


def test_checkpoint_round_trip(tmp_path, encoder_config, head_config):
    model = SentimentClassifier(encoder_config, head_config, seed=9)
    path = tmp_path / "fold_0.ckpt"
    save_checkpoint(path, model.state_dict(), _manifest())
    state, manifest = load_checkpoint(path)
    assert manifest == _manifest()
    assert state.keys() == model.state_dict().keys()
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(state[name], value)

    restored = SentimentClassifier(encoder_config, head_config, seed=1)
    restored.load_state_dict(state)
    save_checkpoint(tmp_path / "again.ckpt", restored.state_dict(), _manifest())
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointFormat):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, {'w': np.arange(6.0).reshape(2, 3)}, _manifest())
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(CheckpointFormat):
        load_checkpoint(path)
    path.write_bytes(data + b"\x00")
    with pytest.raises(CheckpointFormat):
        load_checkpoint(path)


def test_checkpoint_scalar_parameter(tmp_path):
    path = tmp_path / "scalar.ckpt"
    save_checkpoint(path, {'s': np.array(2.5)}, _manifest())
    state, _ = load_checkpoint(path)
    assert state['s'].shape == ()
    assert float(state['s']) == 2.5
