"""Concrete logits providers and the remote grammar-endpoint client.

The mock, constant, and scripted providers drive the local constrained
decoder deterministically; the adversarial provider is the stress oracle that
prefers exactly the tokens the grammar forbids. The remote client talks to an
inference server that accepts a grammar parameter; its responses are never
trusted and must be re-validated by the caller.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence
from urllib.parse import urlparse

import numpy as np
import requests

from .automaton import TokenIndex, Vocabulary
from .decoding import LogitsProvider
from .errors import (
    InvalidSchemaError,
    RemoteHttpError,
    RemoteProtocolError,
    RemoteTimeoutError,
)
from .schema import ToolSpec, apply_index_prefix, node_to_json


def _context_rng(seed: int, prompt: Any, generated: Sequence[int]) -> np.random.Generator:
    """Deterministic generator keyed by (seed, prompt, generated prefix)."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(seed).encode("utf-8"))
    h.update(b"\x1f")
    h.update(str(prompt).encode("utf-8", "surrogatepass"))
    h.update(b"\x1f")
    h.update(",".join(map(str, generated)).encode("ascii"))
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


@dataclass(frozen=True)
class MockProviderSpec:
    seed: int = 0
    bias: Mapping[int, float] | None = None


def mock_scores(
    spec: MockProviderSpec, prompt: Any, generated: Sequence[int], n_vocab: int
) -> np.ndarray:
    """Pseudo-random scores, a pure function of (seed, prompt, generated)."""
    scores = _context_rng(spec.seed, prompt, generated).random(n_vocab)
    if spec.bias:
        for token_id, bonus in spec.bias.items():
            scores[token_id] += bonus
    return scores


class MockProvider(LogitsProvider):
    def __init__(self, n_vocab: int, spec: MockProviderSpec | None = None):
        self._n = n_vocab
        self._spec = spec or MockProviderSpec()

    def score(self, prompt: Any, generated: Sequence[int]) -> np.ndarray:
        return mock_scores(self._spec, prompt, generated, self._n)


def adversarial_scores(
    index: TokenIndex,
    state: int,
    prompt: Any,
    generated: Sequence[int],
    seed: int = 0,
) -> np.ndarray:
    """Every grammar-disallowed token scores strictly above every allowed one.

    Disallowed scores land in [10, 11) while allowed ones stay in [0, 1); when
    everything is allowed this degenerates to a uniform random ordering.
    """
    base = _context_rng(seed, prompt, generated).random(len(index.vocab))
    return base + 10.0 * ~index.allowed_mask(state)


class AdversarialProvider(LogitsProvider):
    """Stress oracle: replays the generated prefix to find the current state,
    then prefers exactly the tokens the grammar forbids there."""

    def __init__(self, index: TokenIndex, seed: int = 0):
        self._index = index
        self._seed = seed

    def score(self, prompt: Any, generated: Sequence[int]) -> np.ndarray:
        state = self._index.walk(generated)
        return adversarial_scores(self._index, state, prompt, generated, self._seed)


class ConstantProvider(LogitsProvider):
    """Same score everywhere; greedy decoding walks the lowest allowed ids."""

    def __init__(self, n_vocab: int, value: float = 0.0):
        self._n = n_vocab
        self._value = value

    def score(self, prompt: Any, generated: Sequence[int]) -> np.ndarray:
        return np.full(self._n, self._value)


class ScriptedProvider(LogitsProvider):
    """Steers greedy decoding along one target sentence.

    Tokens whose text continues the target from the current position score
    high (longer continuations higher, so greedy takes the longest match);
    once the target is fully emitted, eos dominates. Off-script positions
    degrade to constant scores.
    """

    def __init__(self, target: str, vocab: Vocabulary):
        self._target = target
        self._texts = vocab.texts()
        self._specials = [t.special for t in vocab.tokens]
        self._eos_id = vocab.eos_id

    def score(self, prompt: Any, generated: Sequence[int]) -> np.ndarray:
        scores = np.zeros(len(self._texts))
        emitted = "".join(self._texts[t] for t in generated)
        if not self._target.startswith(emitted):
            return scores
        remaining = self._target[len(emitted) :]
        if not remaining:
            scores[self._eos_id] = 1e6
            return scores
        for token_id, text in enumerate(self._texts):
            if text and not self._specials[token_id] and remaining.startswith(text):
                scores[token_id] = 1e4 + len(text)
        return scores


# ---------------------------------------------------------------------------
# remote generation
# ---------------------------------------------------------------------------


class GrammarKind(Enum):
    REGEX = "regex"
    JSON_SCHEMA = "json"


@dataclass(frozen=True)
class RemoteBackendConfig:
    endpoint_url: str
    timeout: float = 30.0
    max_new_tokens: int = 256
    grammar_kind: GrammarKind = GrammarKind.REGEX
    auth_token: str | None = None
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        parsed = urlparse(self.endpoint_url)
        if not parsed.scheme or not parsed.netloc:
            raise InvalidSchemaError(f"endpoint_url must be absolute: {self.endpoint_url!r}")
        if self.timeout <= 0:
            raise InvalidSchemaError("timeout must be positive")


def _grammar_value(config: RemoteBackendConfig, grammar: str | ToolSpec) -> Any:
    if config.grammar_kind is GrammarKind.REGEX:
        if not isinstance(grammar, str):
            raise InvalidSchemaError("regex grammar must be a rendered pattern string")
        return grammar
    if not isinstance(grammar, ToolSpec):
        raise InvalidSchemaError("json grammar must be a ToolSpec")
    # remote grammar engines may reorder keys alphabetically; the index
    # prefix transform makes that reordering a no-op
    return node_to_json(apply_index_prefix(grammar).parameters)


def remote_generate(
    config: RemoteBackendConfig, prompt: str, grammar: str | ToolSpec
) -> str:
    """POST one constrained generation request; returns the text verbatim.

    The remote is untrusted: callers MUST re-validate the returned text with
    the instance validator before using it.
    """
    payload = {
        "inputs": prompt,
        "parameters": {
            "max_new_tokens": config.max_new_tokens,
            "grammar": {
                "type": config.grammar_kind.value,
                "value": _grammar_value(config, grammar),
            },
        },
    }
    headers = {}
    if config.auth_token:
        headers["Authorization"] = f"Bearer {config.auth_token}"
    try:
        response = requests.post(
            config.endpoint_url, json=payload, headers=headers, timeout=config.timeout
        )
    except requests.Timeout as exc:
        raise RemoteTimeoutError(f"no answer within {config.timeout}s") from exc
    except requests.RequestException as exc:
        raise RemoteProtocolError(f"transport failure: {exc}") from exc
    if response.status_code >= 400:
        raise RemoteHttpError(response.status_code, response.text)
    try:
        body = response.json()
    except (ValueError, json.JSONDecodeError) as exc:
        raise RemoteProtocolError("response body is not JSON") from exc
    if isinstance(body, list) and len(body) == 1:
        body = body[0]
    if not isinstance(body, dict) or not isinstance(body.get("generated_text"), str):
        raise RemoteProtocolError("response lacks a 'generated_text' string")
    return body["generated_text"]


class RemoteBackend:
    """Bounded-concurrency wrapper around ``remote_generate``."""

    def __init__(self, config: RemoteBackendConfig):
        self.config = config
        self._slots = threading.Semaphore(config.max_concurrency)

    def generate(self, prompt: str, grammar: str | ToolSpec) -> str:
        with self._slots:
            return remote_generate(self.config, prompt, grammar)
