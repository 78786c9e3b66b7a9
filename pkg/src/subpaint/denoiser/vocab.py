"""Closed token vocabulary and prompt containers.

The vocabulary is tiny and fixed at build time: three reserved tokens
(null, a bindable subject slot, a bindable backdrop slot) followed by the
class, color, and shape words the scene generator uses. Prompts are short
id sequences; the conditioning vector is a mean-pooled lookup over them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

NULL_WORD = "<null>"
SUBJECT_WORD = "<subject>"
BACKDROP_WORD = "<backdrop>"

NULL_ID = 0
SUBJECT_ID = 1
BACKDROP_ID = 2

CLASS_WORDS = ("ball", "coin", "crate", "tile", "badge", "spark", "kite", "cone")
COLOR_WORDS = ("red", "orange", "yellow", "green", "cyan", "blue", "purple", "magenta")
SHAPE_WORDS = ("circle", "square", "star", "triangle")

MAX_PROMPT_LEN = 8


@dataclass(frozen=True)
class PromptTokens:
    """A prompt as a tuple of token ids, at most MAX_PROMPT_LEN long."""

    ids: tuple[int, ...]

    def __post_init__(self):
        if not (1 <= len(self.ids) <= MAX_PROMPT_LEN):
            raise ValueError(f"prompt length must be 1..{MAX_PROMPT_LEN}, got {len(self.ids)}")
        for i in self.ids:
            if not isinstance(i, int) or i < 0:
                raise ValueError(f"token ids must be nonnegative ints, got {i!r}")

    def count(self, token_id: int) -> int:
        return sum(1 for i in self.ids if i == token_id)

    def __len__(self) -> int:
        return len(self.ids)


NULL_PROMPT = PromptTokens((NULL_ID,))


@dataclass(frozen=True)
class Vocabulary:
    """Immutable word list; position in the list is the token id."""

    words: tuple[str, ...]

    def __post_init__(self):
        if len(self.words) < 3:
            raise ValueError("vocabulary must include the three reserved tokens")
        expected = (NULL_WORD, SUBJECT_WORD, BACKDROP_WORD)
        if self.words[:3] != expected:
            raise ValueError(f"reserved tokens must occupy ids 0..2 as {expected}")
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary words must be unique")

    @property
    def size(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        try:
            return self.words.index(word)
        except ValueError:
            raise ValueError(f"unknown token {word!r}") from None

    def word_of(self, token_id: int) -> str:
        if not (0 <= token_id < len(self.words)):
            raise ValueError(f"token id {token_id} out of range for vocabulary of {len(self.words)}")
        return self.words[token_id]

    def encode(self, words: Iterable[str]) -> PromptTokens:
        return PromptTokens(tuple(self.id_of(w) for w in words))


def default_vocabulary() -> Vocabulary:
    return Vocabulary((NULL_WORD, SUBJECT_WORD, BACKDROP_WORD) + CLASS_WORDS + COLOR_WORDS + SHAPE_WORDS)
