# coding: utf-8
"""
Byte-Level BPE Tokenizer
========================
Vocabulary training and loading, lossless encode/decode with character
offsets, and assembly of fixed-length model inputs in the layout

    [<s>, text tokens..., </s>, </s>, <sentiment>, </s>, <pad>...]

Vocabulary files follow the common two-file convention:

- ``vocab.json``: a JSON object mapping token string -> integer id. Token
  strings use the printable byte alphabet (byte 0x20 is ``Ġ``).
- ``merges.txt``: optional ``#version`` header line, then one
  ``left right`` pair per line. Rank is line order.
"""

import json
import logging
import re
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .corpus import Sentiment
from .errors import OutOfRegion, TooLong, UnknownId, VocabTooSmall, VocabularyFormat

logger = logging.getLogger(__name__)

BOS_TOKEN = "<s>"
PAD_TOKEN = "<pad>"
EOS_TOKEN = "</s>"
SPECIAL_TOKENS = (BOS_TOKEN, PAD_TOKEN, EOS_TOKEN)

SENTIMENT_TOKENS: Dict[Sentiment, str] = {
    Sentiment.POSITIVE: "<positive>",
    Sentiment.NEGATIVE: "<negative>",
    Sentiment.NEUTRAL: "<neutral>",
}
NO_SENTIMENT_TOKEN = "<nosent>"
CONDITIONING_TOKENS = tuple(SENTIMENT_TOKENS.values()) + (NO_SENTIMENT_TOKEN,)

N_BASE = len(SPECIAL_TOKENS) + 256
N_LAYOUT_SPECIALS = 5
SPECIAL_OFFSET = (-1, -1)

# GPT-2 style pre-tokenization. Letters are [^\W\d_]; the final
# alternatives catch whatever the earlier ones leave behind.
PRETOKEN_PATTERN = re.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?[^\W\d_]+| ?\d+| ?(?:[^\s\w]|_)+|\s+(?!\S)|\s+"""
)


@lru_cache()
def bytes_to_unicode() -> Dict[int, str]:
    """Map every byte to a printable character (GPT-2 convention)."""
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    codes = printable[:]
    extra = 0
    for b in range(256):
        if b not in printable:
            printable.append(b)
            codes.append(256 + extra)
            extra += 1
    return {b: chr(c) for b, c in zip(printable, codes)}


@lru_cache()
def unicode_to_bytes() -> Dict[str, int]:
    return {c: b for b, c in bytes_to_unicode().items()}


def pretokenize(text: str) -> List[Tuple[int, int]]:
    """Character spans of the pre-tokens; they tile ``text`` exactly."""
    spans: List[Tuple[int, int]] = []
    pos = 0
    for match in PRETOKEN_PATTERN.finditer(text):
        if match.start() > pos:
            spans.append((pos, match.start()))
        if match.end() > match.start():
            spans.append((match.start(), match.end()))
        pos = match.end()
    if pos < len(text):
        spans.append((pos, len(text)))
    return spans


def _byte_symbols(piece: str) -> Tuple[str, ...]:
    table = bytes_to_unicode()
    return tuple(table[b] for b in piece.encode("utf-8"))


def _merge_word(word: Tuple[str, ...], pair: Tuple[str, str]) -> Tuple[str, ...]:
    merged: List[str] = []
    i = 0
    while i < len(word):
        if i < len(word) - 1 and (word[i], word[i + 1]) == pair:
            merged.append(word[i] + word[i + 1])
            i += 2
        else:
            merged.append(word[i])
            i += 1
    return tuple(merged)


class Vocabulary:
    """
    Token <-> id map plus ranked merges.

    Ids 0/1/2 are ``<s>``/``<pad>``/``</s>``. The four conditioning tokens
    are appended after everything else when missing.

    Args:
        token_to_id: Dense token -> id map
        merges: Ranked (left, right) pairs
    """

    def __init__(self, token_to_id: Dict[str, int], merges: List[Tuple[str, str]]):
        token_to_id = dict(token_to_id)
        for token in CONDITIONING_TOKENS:
            if token not in token_to_id:
                token_to_id[token] = len(token_to_id)
        self.token_to_id = token_to_id
        self.merges = [tuple(m) for m in merges]
        self._validate()

        self.id_to_token: List[str] = [""] * len(token_to_id)
        for token, idx in token_to_id.items():
            self.id_to_token[idx] = token
        self.ranks: Dict[Tuple[str, str], int] = {m: r for r, m in enumerate(self.merges)}
        self.special_ids = frozenset(token_to_id[t] for t in SPECIAL_TOKENS + CONDITIONING_TOKENS)
        self._cache: Dict[str, Tuple[str, ...]] = {}

    def _validate(self):
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise VocabularyFormat("token ids are not dense in [0, |V|)")
        for expected, token in enumerate(SPECIAL_TOKENS):
            if self.token_to_id.get(token) != expected:
                raise VocabularyFormat(f"'{token}' must have id {expected}")
        for b, symbol in bytes_to_unicode().items():
            if symbol not in self.token_to_id:
                raise VocabularyFormat(f"byte {b:#04x} ({symbol!r}) has no token")
        for left, right in self.merges:
            for token in (left, right, left + right):
                if token not in self.token_to_id:
                    raise VocabularyFormat(f"merge ({left!r}, {right!r}) uses unknown token {token!r}")

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.token_to_id == other.token_to_id
            and self.merges == other.merges
        )

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS_TOKEN]

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS_TOKEN]

    def sentiment_id(self, sentiment: Optional[Sentiment]) -> int:
        token = NO_SENTIMENT_TOKEN if sentiment is None else SENTIMENT_TOKENS[sentiment]
        return self.token_to_id[token]

    # ------------------------------------------------------------------
    # Encoding
    # ------------------------------------------------------------------

    def _bpe(self, piece: str) -> Tuple[str, ...]:
        cached = self._cache.get(piece)
        if cached is not None:
            return cached
        word = _byte_symbols(piece)
        while len(word) > 1:
            pairs = set(zip(word, word[1:]))
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            word = _merge_word(word, best)
        self._cache[piece] = word
        return word

    def encode(self, text: str) -> Tuple[List[int], List[Tuple[int, int]]]:
        """
        Token ids and character offsets.

        Offsets tile ``text``: a token that ends inside a multi-byte
        character is rounded up to the next character boundary, so some
        tokens may carry an empty span.
        """
        ids: List[int] = []
        byte_spans: List[Tuple[int, int]] = []
        char_starts: List[int] = []
        n_bytes = 0
        for ch in text:
            char_starts.append(n_bytes)
            n_bytes += len(ch.encode("utf-8"))

        for start, end in pretokenize(text):
            byte_pos = char_starts[start]
            for token in self._bpe(text[start:end]):
                ids.append(self.token_to_id[token])
                byte_spans.append((byte_pos, byte_pos + len(token)))
                byte_pos += len(token)

        offsets = [(bisect_left(char_starts, a), bisect_left(char_starts, b)) for a, b in byte_spans]
        return ids, offsets

    def decode(self, ids: Iterable[int]) -> str:
        decoder = unicode_to_bytes()
        buffer = bytearray()
        for idx in ids:
            idx = int(idx)
            if idx < 0 or idx >= len(self.id_to_token):
                raise UnknownId(f"token id {idx} outside vocabulary of size {len(self)}")
            if idx in self.special_ids:
                continue
            buffer.extend(decoder[ch] for ch in self.id_to_token[idx])
        return buffer.decode("utf-8", errors="replace")

    # ------------------------------------------------------------------
    # Files
    # ------------------------------------------------------------------

    def save(self, vocab_path: Union[str, Path], merges_path: Union[str, Path]):
        ordered = dict(sorted(self.token_to_id.items(), key=lambda kv: kv[1]))
        Path(vocab_path).write_text(json.dumps(ordered, ensure_ascii=False, indent=0) + "\n", encoding="utf-8")
        lines = ["#version: 0.2"] + [f"{left} {right}" for left, right in self.merges]
        Path(merges_path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, vocab_path: Union[str, Path], merges_path: Union[str, Path]) -> "Vocabulary":
        try:
            token_to_id = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise VocabularyFormat(f"{vocab_path}: not a JSON token map ({e})") from e
        if not isinstance(token_to_id, dict) or not all(isinstance(v, int) for v in token_to_id.values()):
            raise VocabularyFormat(f"{vocab_path}: expected an object of token -> int id")

        merges: List[Tuple[str, str]] = []
        for lineno, line in enumerate(Path(merges_path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line or line.startswith("#version"):
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise VocabularyFormat(f"{merges_path}:{lineno}: expected 'left right', got {line!r}")
            merges.append((parts[0], parts[1]))
        return cls(token_to_id, merges)


def train_bpe(corpus: Iterable[str], vocab_size: int) -> Vocabulary:
    """
    Greedy byte-level BPE.

    Repeatedly merges the most frequent adjacent pair (ties broken by the
    smaller pair) until ``vocab_size`` tokens exist or no pair occurs twice.
    ``vocab_size`` excludes the conditioning tokens.
    """
    if vocab_size <= N_BASE:
        raise VocabTooSmall(f"vocab_size must exceed {N_BASE} (256 bytes + {len(SPECIAL_TOKENS)} specials), got {vocab_size}")

    token_to_id: Dict[str, int] = {token: i for i, token in enumerate(SPECIAL_TOKENS)}
    for b in range(256):
        token_to_id[bytes_to_unicode()[b]] = len(token_to_id)

    words: Counter = Counter()
    for text in corpus:
        for start, end in pretokenize(text):
            words[_byte_symbols(text[start:end])] += 1

    merges: List[Tuple[str, str]] = []
    while len(token_to_id) < vocab_size:
        pair_counts: Counter = Counter()
        for word, count in words.items():
            for pair in zip(word, word[1:]):
                pair_counts[pair] += count
        if not pair_counts:
            break
        best = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        if pair_counts[best] < 2:
            break
        merges.append(best)
        token_to_id.setdefault(best[0] + best[1], len(token_to_id))

        updated: Counter = Counter()
        for word, count in words.items():
            updated[_merge_word(word, best) if best[0] in word else word] += count
        words = updated

    logger.info(f"Trained BPE: {len(merges)} merges, {len(token_to_id)} tokens")
    return Vocabulary(token_to_id, merges)


# ============================================================================
# MODEL INPUTS
# ============================================================================

@dataclass(frozen=True)
class SpanLabel:
    """Character span [char_start, char_end) into preprocessed text."""
    char_start: int
    char_end: int

    @classmethod
    def locate(cls, text: str, selected: str) -> Optional["SpanLabel"]:
        """First occurrence of ``selected`` in ``text``."""
        if not selected:
            return None
        start = text.find(selected)
        if start < 0:
            return None
        return cls(start, start + len(selected))


@dataclass(frozen=True)
class Encoding:
    """One model-ready example."""
    text: str
    tokens: List[str]
    input_ids: np.ndarray
    attention_mask: np.ndarray
    offsets: np.ndarray
    start_onehot: np.ndarray
    end_onehot: np.ndarray
    n_text_tokens: int
    sentiment: Optional[Sentiment] = None

    @property
    def max_len(self) -> int:
        return int(self.input_ids.shape[0])

    @property
    def text_region(self) -> Tuple[int, int]:
        """Inclusive token range of the text."""
        return 1, self.n_text_tokens

    @property
    def valid_mask(self) -> np.ndarray:
        mask = np.zeros(self.max_len, dtype=bool)
        mask[1:self.n_text_tokens + 1] = True
        return mask

    @property
    def start_index(self) -> Optional[int]:
        hits = np.flatnonzero(self.start_onehot)
        return int(hits[0]) if hits.size else None

    @property
    def end_index(self) -> Optional[int]:
        hits = np.flatnonzero(self.end_onehot)
        return int(hits[0]) if hits.size else None


def _trim(text: str, start: int, end: int) -> Tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def assemble_example(
    vocab: Vocabulary,
    text: str,
    sentiment: Optional[Sentiment],
    span: Optional[SpanLabel] = None,
    max_len: int = 96
) -> Encoding:
    """
    Lay out one example and mark its span one-hots.

    Text-token offsets are trimmed of surrounding whitespace. The start
    and end one-hots land on the first and last text tokens overlapping
    ``span``. ``sentiment=None`` uses the no-sentiment token.
    """
    ids, raw_offsets = vocab.encode(text)
    n_text = len(ids)
    used = n_text + N_LAYOUT_SPECIALS
    if used > max_len:
        raise TooLong(f"{n_text} text tokens + {N_LAYOUT_SPECIALS} specials exceed max_len={max_len}")

    n_pad = max_len - used
    input_ids = (
        [vocab.bos_id] + ids
        + [vocab.eos_id, vocab.eos_id, vocab.sentiment_id(sentiment), vocab.eos_id]
        + [vocab.pad_id] * n_pad
    )
    offsets = [SPECIAL_OFFSET] + [_trim(text, a, b) for a, b in raw_offsets] + [SPECIAL_OFFSET] * (4 + n_pad)

    start_onehot = np.zeros(max_len, dtype=np.int64)
    end_onehot = np.zeros(max_len, dtype=np.int64)
    if span is not None:
        hits = [
            i + 1 for i, (a, b) in enumerate(offsets[1:n_text + 1])
            if a < span.char_end and b > span.char_start
        ]
        if hits:
            start_onehot[hits[0]] = 1
            end_onehot[hits[-1]] = 1
        else:
            logger.debug(f"span {span} overlaps no token of {text!r}")

    return Encoding(
        text=text,
        tokens=[vocab.id_to_token[i] for i in input_ids],
        input_ids=np.asarray(input_ids, dtype=np.int64),
        attention_mask=np.asarray([1] * used + [0] * n_pad, dtype=np.int64),
        offsets=np.asarray(offsets, dtype=np.int64),
        start_onehot=start_onehot,
        end_onehot=end_onehot,
        n_text_tokens=n_text,
        sentiment=sentiment,
    )


def token_span_to_text(encoding: Encoding, start_tok: int, end_tok: int) -> str:
    first, last = encoding.text_region
    if not (first <= start_tok <= end_tok <= last):
        raise OutOfRegion(f"token span ({start_tok}, {end_tok}) outside text region [{first}, {last}]")
    return encoding.text[encoding.offsets[start_tok][0]:encoding.offsets[end_tok][1]]


def char_span_to_tokens(encoding: Encoding, char_start: int, char_end: int) -> Optional[Tuple[int, int]]:
    """First and last text tokens overlapping a character span."""
    first, last = encoding.text_region
    hits = [
        i for i in range(first, last + 1)
        if encoding.offsets[i][0] < char_end and encoding.offsets[i][1] > char_start
    ]
    return (hits[0], hits[-1]) if hits else None
