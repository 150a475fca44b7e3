"""Whitespace/punctuation tokenizer over a fixed vocabulary with byte fallback.

Indices 0..255 are reserved byte-fallback tokens; vocabulary words follow in
file order (line number = index - 256). Text is canonicalized to lowercase
with collapsed whitespace; trailing punctuation splits off a word when both
the bare word and the punctuation characters are vocabulary entries, and any
chunk that cannot be expressed through the vocabulary is carried losslessly
as UTF-8 bytes (consecutive fallback chunks keep their separating space as a
0x20 byte token, so byte runs decode verbatim).

The embedding table is deterministic: seeded standard-normal rows, unit
normalized, so projection experiments reproduce without shipped weights.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidRangeError

BYTE_TOKENS = 256
_PUNCT = set(string.punctuation)
_SPACE_BYTE = 0x20


@dataclass(frozen=True)
class Vocabulary:
    """Ordered distinct word tokens plus a deterministic embedding table.

    ``table`` overrides the generated embeddings (one row per token, byte
    slots included) for callers bringing their own vectors.
    """

    words: tuple[str, ...]
    embed_dim: int = 8
    seed: int = 0
    table: np.ndarray | None = None
    word_index: dict = field(init=False, repr=False)
    embeddings: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.embed_dim < 2:
            raise InvalidRangeError(f"embedding dim must be >= 2, got {self.embed_dim}")
        if len(set(self.words)) != len(self.words):
            raise InvalidRangeError("vocabulary words must be distinct")
        index = {w: BYTE_TOKENS + i for i, w in enumerate(self.words)}
        if self.table is not None:
            table = np.asarray(self.table, dtype=np.float64).copy()
            if table.shape != (self.size, self.embed_dim):
                raise InvalidRangeError(
                    f"embedding table {table.shape} != ({self.size}, {self.embed_dim})"
                )
            if not np.all(np.isfinite(table)):
                raise InvalidRangeError("embedding table has non-finite entries")
        else:
            rng = np.random.default_rng(self.seed)
            table = rng.standard_normal((self.size, self.embed_dim))
            table /= np.linalg.norm(table, axis=1, keepdims=True)
        table.flags.writeable = False
        object.__setattr__(self, "word_index", index)
        object.__setattr__(self, "embeddings", table)

    @property
    def size(self) -> int:
        return BYTE_TOKENS + len(self.words)

    def token_string(self, index: int) -> str:
        if not 0 <= index < self.size:
            raise InvalidRangeError(f"token index {index} outside vocabulary of {self.size}")
        if index < BYTE_TOKENS:
            return f"<0x{index:02x}>"
        return self.words[index - BYTE_TOKENS]

    @classmethod
    def from_words(cls, words, embed_dim: int = 8, seed: int = 0) -> "Vocabulary":
        return cls(tuple(words), embed_dim=embed_dim, seed=seed)

    @classmethod
    def from_file(cls, path, embed_dim: int = 8, seed: int = 0) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            words = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls.from_words(words, embed_dim=embed_dim, seed=seed)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(w + "\n" for w in self.words)


TokenSequence = list[int]


def _check_tokens(tokens: TokenSequence, vocab: Vocabulary) -> None:
    for t in tokens:
        if not 0 <= t < vocab.size:
            raise InvalidRangeError(f"token index {t} outside vocabulary of {vocab.size}")


def _chunk_tokens(chunk: str, vocab: Vocabulary) -> TokenSequence | None:
    """Vocabulary tokens for one whitespace-delimited chunk, or None.

    Free-standing punctuation never matches a vocabulary token (detokenize
    glues punctuation to the preceding word, which would move the space);
    such chunks take the byte fallback and stay verbatim.
    """
    idx = vocab.word_index
    core = chunk.rstrip("".join(_PUNCT))
    if not core:
        return None
    if chunk in idx:
        return [idx[chunk]]
    tail = chunk[len(core):]
    if core in idx and tail and all(ch in idx for ch in tail):
        return [idx[core]] + [idx[ch] for ch in tail]
    return None


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """Map text to token indices; unknown spans become byte-fallback runs."""
    tokens: TokenSequence = []
    prev_was_bytes = False
    for chunk in text.lower().split():
        found = _chunk_tokens(chunk, vocab)
        if found is not None:
            tokens.extend(found)
            prev_was_bytes = False
        else:
            if prev_was_bytes:
                tokens.append(_SPACE_BYTE)
            tokens.extend(chunk.encode("utf-8"))
            prev_was_bytes = True
    return tokens


def detokenize(tokens: TokenSequence, vocab: Vocabulary) -> str:
    """Rebuild canonical text: words space-separated, punctuation attached."""
    _check_tokens(tokens, vocab)
    parts: list[str] = []
    byte_run = bytearray()

    def flush_bytes():
        nonlocal byte_run
        if byte_run:
            parts.append(byte_run.decode("utf-8", errors="replace"))
            byte_run = bytearray()

    for t in tokens:
        if t < BYTE_TOKENS:
            byte_run.append(t)
            continue
        flush_bytes()
        word = vocab.token_string(t)
        if parts and len(word) == 1 and word in _PUNCT:
            parts[-1] += word
        else:
            parts.append(word)
    flush_bytes()
    return " ".join(parts)
