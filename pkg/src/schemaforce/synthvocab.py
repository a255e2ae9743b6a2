"""Deterministic synthetic vocabularies for benchmarks and stress tests.

Layout mimics a subword tokenizer over JSON-ish text: eos at id 0, JSON
structural characters and digits at low ids (so a constant-score greedy run
closes structures instead of looping), then printable ASCII singles, common
escape pairs, and random subword chunks up to the requested size.
"""

from __future__ import annotations

import random
import string

from .automaton import Token, Vocabulary

_STRUCTURAL = ['"', "}", ",", ":", " ", "{", "-"]
_ESCAPE_PAIRS = ['\\"', "\\\\", "\\/", "\\b", "\\f", "\\n", "\\r", "\\t", "\\u00e9"]
_SUBWORD_ALPHABET = string.ascii_lowercase + string.ascii_uppercase + string.digits + "_ .'"


def synthetic_vocabulary(n_tokens: int, seed: int = 0) -> Vocabulary:
    if n_tokens < 16:
        raise ValueError("synthetic vocabulary needs at least 16 tokens")
    rng = random.Random(seed)
    texts: list[str] = [""]  # eos
    seen = {""}

    def add(text: str) -> None:
        if text not in seen and len(texts) < n_tokens:
            seen.add(text)
            texts.append(text)

    for ch in _STRUCTURAL:
        add(ch)
    for ch in string.digits:
        add(ch)
    for ch in string.ascii_lowercase + string.ascii_uppercase:
        add(ch)
    for ch in string.punctuation:
        add(ch)
    for pair in _ESCAPE_PAIRS:
        add(pair)
    while len(texts) < n_tokens:
        length = rng.choice((2, 2, 3, 3, 4, 5, 6, 8))
        word = "".join(rng.choice(_SUBWORD_ALPHABET) for _ in range(length))
        if rng.random() < 0.3:
            word = " " + word[:-1]
        add(word)

    tokens = tuple(
        Token(i, text, special=(i == 0)) for i, text in enumerate(texts)
    )
    return Vocabulary(tokens=tokens, eos_id=0)
