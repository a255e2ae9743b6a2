"""The constrained generation loop: score, mask, select, advance, stop.

Masking sets the scores of grammar-invalid tokens to -inf before temperature
scaling, so invalid tokens carry exactly zero probability mass. The prompt
context is fully opaque to the constraint machinery: multimodality lives in
the provider, constraints act only on generated output tokens.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

import numpy as np

from .automaton import Dfa, TokenIndex
from .errors import (
    EmptyMaskError,
    InvalidSchemaError,
    MaxTokensExceededError,
    VocabularyCannotExpressSchemaError,
)


class LogitsProvider(ABC):
    """Scores every vocabulary id (eos included) for the next position.

    Implementations must be deterministic given identical inputs and seed.
    ``concurrent_safe`` declares whether score() may be called from several
    threads at once; the engine serializes calls to providers that say no.
    """

    concurrent_safe: bool = True

    @abstractmethod
    def score(self, prompt: Any, generated: Sequence[int]) -> np.ndarray:
        """Return one real score per vocabulary id, aligned to token ids."""


class SerializedProvider(LogitsProvider):
    """Wrap a non-concurrent-safe provider with a lock."""

    def __init__(self, inner: LogitsProvider):
        self._inner = inner
        self._lock = threading.Lock()

    def score(self, prompt: Any, generated: Sequence[int]) -> np.ndarray:
        with self._lock:
            return self._inner.score(prompt, generated)


class DecodeMode(Enum):
    GREEDY = "greedy"
    SAMPLE = "sample"


class FinishReason(Enum):
    EOS_ACCEPTED = "eos_accepted"
    # exactly one option was allowed at every step: the single allowed path
    # was exhausted into an accepting state
    FORCED = "forced"


@dataclass(frozen=True)
class DecodeConfig:
    mode: DecodeMode = DecodeMode.GREEDY
    seed: int = 0
    temperature: float = 1.0
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise InvalidSchemaError("temperature must be positive")
        if self.max_tokens < 1:
            raise InvalidSchemaError("max_tokens must be at least 1")


@dataclass(frozen=True)
class DecodeResult:
    text: str
    token_ids: tuple[int, ...]  # content tokens; eos not included
    finish: FinishReason
    steps: int


def mask_logits(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Disallowed positions become -inf; allowed positions pass through."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != mask.shape:
        raise InvalidSchemaError(
            f"scores shape {scores.shape} does not match mask shape {mask.shape}"
        )
    if not mask.any():
        raise EmptyMaskError("no token is allowed by the mask")
    return np.where(mask, scores, -np.inf)


def select_token(
    masked_scores: np.ndarray,
    config: DecodeConfig,
    rng: np.random.Generator | None = None,
) -> int:
    """Greedy argmax (ties -> lowest id) or seeded softmax sampling."""
    if config.mode is DecodeMode.GREEDY:
        return int(np.argmax(masked_scores))
    if rng is None:
        rng = np.random.default_rng(config.seed)
    z = masked_scores / config.temperature
    finite = np.isfinite(z)
    z = z - z[finite].max()
    with np.errstate(under="ignore"):
        p = np.exp(z, where=finite, out=np.zeros_like(z))
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def decode(
    provider: LogitsProvider,
    prompt: Any,
    index: TokenIndex,
    config: DecodeConfig,
) -> DecodeResult:
    """Generate under hard constraints until eos is selected in an accepting state.

    Every returned text is in the schema's language by construction. Hitting
    the token budget raises MaxTokensExceededError (partial text attached for
    diagnostics, never returned as a result); a state with an empty mask
    raises VocabularyCannotExpressSchemaError.
    """
    rng = np.random.default_rng(config.seed)
    eos_id = index.vocab.eos_id
    texts = index.vocab.texts()
    state = index.start
    generated: list[int] = []
    pieces: list[str] = []
    path_forced = True

    for step_no in range(1, config.max_tokens + 1):
        scores = provider.score(prompt, generated)
        mask = index.allowed_mask(state)
        try:
            masked = mask_logits(scores, mask)
        except EmptyMaskError as exc:
            raise VocabularyCannotExpressSchemaError(
                f"no vocabulary token is allowed from state {state} "
                f"after {len(generated)} tokens"
            ) from exc
        path_forced = path_forced and int(mask.sum()) == 1
        token_id = select_token(masked, config, rng)
        if token_id == eos_id:
            finish = FinishReason.FORCED if path_forced else FinishReason.EOS_ACCEPTED
            return DecodeResult(
                text="".join(pieces),
                token_ids=tuple(generated),
                finish=finish,
                steps=step_no,
            )
        generated.append(token_id)
        pieces.append(texts[token_id])
        state = index.step(state, token_id)

    raise MaxTokensExceededError(
        f"budget of {config.max_tokens} tokens exhausted before accept+eos",
        partial_text="".join(pieces),
        steps=config.max_tokens,
    )


def forced_prefix(index: TokenIndex, state: int) -> str:
    """Longest string every accepted continuation from ``state`` must begin with.

    Walks the character DFA while exactly one single-character transition
    exists and the state is not accepting (an accepting state admits the empty
    continuation, ending the forced region).
    """
    dfa: Dfa = index.dfa
    chars: list[str] = []
    current = state
    for _ in range(dfa.n_states + 1):
        if current in dfa.accepts:
            break
        edges = dfa.transitions[current]
        if len(edges) != 1:
            break
        lo, hi, dest = edges[0]
        if lo != hi:
            break
        chars.append(chr(lo))
        current = dest
    return "".join(chars)
