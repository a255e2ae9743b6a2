"""Character-level automata over codepoint ranges and their lift to a token
vocabulary.

The pipeline is Thompson construction -> subset construction -> partition
refinement, all over a compressed alphabet (ranges behave uniformly, so the
subset/refinement loops never touch individual codepoints). ``TokenIndex``
precomputes, for every live DFA state, which vocabulary tokens keep the walk
inside the live set and where each one lands; per-step decoding is then a
single row lookup.

The (state x token) walk is the hot path. It runs in a compiled kernel when
the extension built, with a vectorized numpy fallback otherwise; see
``kernel_backend()``.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DeadStateError,
    InvalidSchemaError,
    StateBudgetExceededError,
    TokenNotAllowedError,
)
from .patterns import (
    Alt,
    CharClass,
    Concat,
    Literal,
    MAX_SCALAR,
    Regex,
    Repeat,
    effective_ranges,
    schema_to_regex,
)
from .schema import SchemaNode

try:
    from ._tokenwalk import walk_token_table as _walk_token_table

    _KERNEL_BACKEND = "compiled"
except ImportError:  # extension not built; numpy fallback
    from ._tokenwalk_py import walk_token_table as _walk_token_table

    _KERNEL_BACKEND = "python"

DEFAULT_STATE_BUDGET = 1_000_000


def kernel_backend() -> str:
    """Which token-walk kernel was selected at import: 'compiled' or 'python'."""
    return _KERNEL_BACKEND


# ---------------------------------------------------------------------------
# NFA (Thompson construction)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Nfa:
    n_states: int
    # per-state edges (lo, hi, dest) over inclusive codepoint ranges
    transitions: tuple[tuple[tuple[int, int, int], ...], ...]
    epsilons: tuple[tuple[int, ...], ...]
    start: int
    accepts: frozenset[int]


class _NfaBuilder:
    def __init__(self) -> None:
        self.transitions: list[list[tuple[int, int, int]]] = []
        self.epsilons: list[list[int]] = []

    def new_state(self) -> int:
        self.transitions.append([])
        self.epsilons.append([])
        return len(self.transitions) - 1

    def add_range(self, src: int, lo: int, hi: int, dest: int) -> None:
        self.transitions[src].append((lo, hi, dest))

    def add_eps(self, src: int, dest: int) -> None:
        self.epsilons[src].append(dest)

    def emit(self, node: Regex) -> tuple[int, int]:
        if isinstance(node, Literal):
            s, e = self.new_state(), self.new_state()
            cp = ord(node.char)
            self.add_range(s, cp, cp, e)
            return s, e
        if isinstance(node, CharClass):
            s, e = self.new_state(), self.new_state()
            for lo, hi in effective_ranges(node):
                self.add_range(s, lo, hi, e)
            return s, e
        if isinstance(node, Concat):
            s = self.new_state()
            cur = s
            for part in node.parts:
                ps, pe = self.emit(part)
                self.add_eps(cur, ps)
                cur = pe
            return s, cur
        if isinstance(node, Alt):
            s, e = self.new_state(), self.new_state()
            for option in node.options:
                os_, oe = self.emit(option)
                self.add_eps(s, os_)
                self.add_eps(oe, e)
            return s, e
        if isinstance(node, Repeat):
            s = self.new_state()
            cur = s
            for _ in range(node.min):
                cs, ce = self.emit(node.child)
                self.add_eps(cur, cs)
                cur = ce
            e = self.new_state()
            if node.max is None:
                hub = self.new_state()
                self.add_eps(cur, hub)
                cs, ce = self.emit(node.child)
                self.add_eps(hub, cs)
                self.add_eps(ce, hub)
                self.add_eps(hub, e)
            else:
                for _ in range(node.max - node.min):
                    self.add_eps(cur, e)
                    cs, ce = self.emit(node.child)
                    self.add_eps(cur, cs)
                    cur = ce
                self.add_eps(cur, e)
            return s, e
        raise InvalidSchemaError(f"cannot compile {node!r}")


def compile_nfa(ast: Regex) -> Nfa:
    builder = _NfaBuilder()
    start, accept = builder.emit(ast)
    return Nfa(
        n_states=len(builder.transitions),
        transitions=tuple(tuple(edges) for edges in builder.transitions),
        epsilons=tuple(tuple(eps) for eps in builder.epsilons),
        start=start,
        accepts=frozenset({accept}),
    )


# ---------------------------------------------------------------------------
# DFA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dfa:
    """Deterministic automaton with an implicit dead state.

    ``transitions[q]`` is sorted by range start; a character with no covering
    range leads to the (implicit) dead state. ``live`` holds the states from
    which an accepting state is reachable; transitions never target non-live
    states, so any successful step stays within the live set.
    """

    n_states: int
    transitions: tuple[tuple[tuple[int, int, int], ...], ...]
    start: int
    accepts: frozenset[int]
    live: frozenset[int]

    def step_char(self, state: int, codepoint: int) -> int:
        """Destination state, or -1 for the implicit dead state."""
        edges = self.transitions[state]
        lo_idx = bisect_right(edges, (codepoint, MAX_SCALAR + 1, -1)) - 1
        if lo_idx >= 0:
            lo, hi, dest = edges[lo_idx]
            if lo <= codepoint <= hi:
                return dest
        return -1


def _interval_cuts(range_lists: Iterable[Iterable[tuple[int, int]]]) -> list[int]:
    points = {0, MAX_SCALAR + 1}
    for ranges in range_lists:
        for lo, hi in ranges:
            points.add(lo)
            points.add(hi + 1)
    return sorted(points)


def determinize(nfa: Nfa, state_budget: int = DEFAULT_STATE_BUDGET) -> Dfa:
    """Subset construction over a compressed alphabet."""
    cuts = _interval_cuts(
        [(lo, hi) for lo, hi, _ in edges] for edges in nfa.transitions
    )
    n_intervals = len(cuts) - 1

    # per NFA state: interval index -> destination set
    by_interval: list[dict[int, set[int]]] = [dict() for _ in range(nfa.n_states)]
    for state, edges in enumerate(nfa.transitions):
        for lo, hi, dest in edges:
            first = bisect_right(cuts, lo) - 1
            idx = first
            while idx < n_intervals and cuts[idx] <= hi:
                by_interval[state].setdefault(idx, set()).add(dest)
                idx += 1

    def closure(states: Iterable[int]) -> frozenset[int]:
        seen = set(states)
        stack = list(seen)
        while stack:
            for dest in nfa.epsilons[stack.pop()]:
                if dest not in seen:
                    seen.add(dest)
                    stack.append(dest)
        return frozenset(seen)

    start_set = closure({nfa.start})
    ids: dict[frozenset[int], int] = {start_set: 0}
    order = [start_set]
    table: list[dict[int, int]] = []
    queue = deque([start_set])
    while queue:
        current = queue.popleft()
        row: dict[int, int] = {}
        interval_moves: dict[int, set[int]] = {}
        for state in current:
            for idx, dests in by_interval[state].items():
                interval_moves.setdefault(idx, set()).update(dests)
        for idx, dests in interval_moves.items():
            target = closure(dests)
            target_id = ids.get(target)
            if target_id is None:
                if len(ids) >= state_budget:
                    raise StateBudgetExceededError(
                        f"subset construction exceeded {state_budget} states"
                    )
                target_id = len(ids)
                ids[target] = target_id
                order.append(target)
                queue.append(target)
            row[idx] = target_id
        table.append(row)

    accepts = {
        i for i, subset in enumerate(order) if subset & nfa.accepts
    }
    return _assemble_dfa(len(order), table, cuts, 0, accepts)


def _assemble_dfa(
    n_states: int,
    table: list[dict[int, int]],
    cuts: list[int],
    start: int,
    accepts: set[int],
) -> Dfa:
    """Prune non-live targets, drop unreachable states, renumber, merge ranges."""
    reverse: list[set[int]] = [set() for _ in range(n_states)]
    for src, row in enumerate(table):
        for dest in row.values():
            reverse[dest].add(src)
    live: set[int] = set(accepts)
    queue = deque(accepts)
    while queue:
        for src in reverse[queue.popleft()]:
            if src not in live:
                live.add(src)
                queue.append(src)

    # BFS from start over live targets only; keeps numbering deterministic
    renumber: dict[int, int] = {start: 0}
    bfs = deque([start])
    kept = [start]
    while bfs:
        src = bfs.popleft()
        for idx in sorted(table[src]):
            dest = table[src][idx]
            if dest in live and dest not in renumber:
                renumber[dest] = len(renumber)
                kept.append(dest)
                bfs.append(dest)

    transitions: list[tuple[tuple[int, int, int], ...]] = []
    for old in kept:
        edges: list[tuple[int, int, int]] = []
        for idx in sorted(table[old]):
            dest = table[old][idx]
            if dest not in live:
                continue
            lo, hi = cuts[idx], cuts[idx + 1] - 1
            new_dest = renumber[dest]
            if edges and edges[-1][1] == lo - 1 and edges[-1][2] == new_dest:
                edges[-1] = (edges[-1][0], hi, new_dest)
            else:
                edges.append((lo, hi, new_dest))
        transitions.append(tuple(edges))

    return Dfa(
        n_states=len(kept),
        transitions=tuple(transitions),
        start=0,
        accepts=frozenset(renumber[s] for s in accepts if s in renumber),
        live=frozenset(renumber[s] for s in kept if s in live),
    )


def minimize(dfa: Dfa) -> Dfa:
    """Language-preserving state merge via partition refinement (Moore)."""
    if not dfa.accepts:
        return Dfa(1, ((),), 0, frozenset(), frozenset())

    cuts = _interval_cuts(
        [(lo, hi) for lo, hi, _ in edges] for edges in dfa.transitions
    )
    n_intervals = len(cuts) - 1
    sink = dfa.n_states
    dense = np.full((dfa.n_states + 1, n_intervals), sink, dtype=np.int64)
    for state, edges in enumerate(dfa.transitions):
        for lo, hi, dest in edges:
            first = bisect_right(cuts, lo) - 1
            idx = first
            while idx < n_intervals and cuts[idx] <= hi:
                dense[state, idx] = dest
                idx += 1

    block = np.zeros(dfa.n_states + 1, dtype=np.int64)
    for state in dfa.accepts:
        block[state] = 1
    n_blocks = 2
    while True:
        signatures = [
            (block[state], tuple(block[dense[state]])) for state in range(dfa.n_states + 1)
        ]
        mapping: dict[tuple, int] = {}
        new_block = np.zeros_like(block)
        for state, sig in enumerate(signatures):
            new_block[state] = mapping.setdefault(sig, len(mapping))
        if len(mapping) == n_blocks:
            block = new_block
            break
        n_blocks = len(mapping)
        block = new_block

    sink_block = int(block[sink])
    representative: dict[int, int] = {}
    for state in range(dfa.n_states):
        representative.setdefault(int(block[state]), state)

    table: list[dict[int, int]] = []
    block_index: dict[int, int] = {}

    def block_row(block_id: int) -> dict[int, int]:
        state = representative[block_id]
        row: dict[int, int] = {}
        for idx in range(n_intervals):
            dest_block = int(block[dense[state, idx]])
            if dest_block != sink_block:
                row[idx] = dest_block
        return row

    start_block = int(block[dfa.start])
    # materialize reachable non-sink blocks
    block_index[start_block] = 0
    pending = deque([start_block])
    ordered_blocks = [start_block]
    while pending:
        row = block_row(pending.popleft())
        table.append(row)
        for dest_block in row.values():
            if dest_block not in block_index:
                block_index[dest_block] = len(block_index)
                ordered_blocks.append(dest_block)
                pending.append(dest_block)

    remapped = [
        {idx: block_index[dest] for idx, dest in row.items()} for row in table
    ]
    accepts = {
        block_index[b]
        for b in ordered_blocks
        if any(int(block[s]) == b for s in dfa.accepts)
    }
    return _assemble_dfa(len(ordered_blocks), remapped, cuts, 0, accepts)


def dfa_accepts(dfa: Dfa, text: str) -> bool:
    state = dfa.start
    for ch in text:
        state = dfa.step_char(state, ord(ch))
        if state < 0:
            return False
    return state in dfa.accepts


def shortest_accept_length(dfa: Dfa) -> int | None:
    """Length of a shortest accepted string (BFS), or None for the empty language."""
    dist = {dfa.start: 0}
    queue = deque([dfa.start])
    while queue:
        state = queue.popleft()
        if state in dfa.accepts:
            return dist[state]
        for _lo, _hi, dest in dfa.transitions[state]:
            if dest not in dist:
                dist[dest] = dist[state] + 1
                queue.append(dest)
    return None


def schema_dfa(schema: SchemaNode, state_budget: int = DEFAULT_STATE_BUDGET) -> Dfa:
    """Compile a schema straight to its minimized DFA."""
    return minimize(determinize(compile_nfa(schema_to_regex(schema)), state_budget))


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    id: int
    text: str
    special: bool = False


@dataclass(frozen=True)
class Vocabulary:
    """Decoding alphabet: token texts are sequences of Unicode scalar values.

    Byte-level tokenizations must be decoded to text before they get here.
    Special tokens never advance the automaton; eos is special and is only
    legal in accepting states.
    """

    tokens: tuple[Token, ...]
    eos_id: int

    def __post_init__(self) -> None:
        if not self.tokens:
            raise InvalidSchemaError("vocabulary must be non-empty")
        for index, token in enumerate(self.tokens):
            if token.id != index:
                raise InvalidSchemaError("token ids must be dense and sorted")
        if not (0 <= self.eos_id < len(self.tokens)):
            raise InvalidSchemaError("eos_id out of range")
        if not self.tokens[self.eos_id].special:
            raise InvalidSchemaError("eos token must be marked special")

    def __len__(self) -> int:
        return len(self.tokens)

    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def load_vocabulary(path: str | Path) -> Vocabulary:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "tokens" not in doc or "eos_id" not in doc:
        raise InvalidSchemaError("vocabulary file needs 'tokens' and 'eos_id'")
    tokens = sorted(
        (
            Token(int(t["id"]), str(t["text"]), bool(t.get("special", False)))
            for t in doc["tokens"]
        ),
        key=lambda t: t.id,
    )
    return Vocabulary(tokens=tuple(tokens), eos_id=int(doc["eos_id"]))


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    doc = {
        "tokens": [
            {"id": t.id, "text": t.text, "special": t.special} for t in vocab.tokens
        ],
        "eos_id": vocab.eos_id,
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")


# ---------------------------------------------------------------------------
# token index
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TokenIndex:
    """Precomputed (state -> allowed tokens -> next state) tables.

    ``next_table[q, t]`` is the landing state of token t's character walk from
    q, or -1 when the walk dies, the token is special, or its text is empty.
    ``masks[q]`` is the per-state allowed bitmask with the eos bit set exactly
    in accepting states. States with an all-false mask are legal; they surface
    as generation failure at decode time.
    """

    dfa: Dfa
    vocab: Vocabulary
    next_table: np.ndarray
    masks: np.ndarray
    eos_allowed: np.ndarray

    @property
    def start(self) -> int:
        return self.dfa.start

    def allowed_mask(self, state: int) -> np.ndarray:
        """O(1) view of the allowed bitmask (vocab plus eos bit) for a live state."""
        if state not in self.dfa.live:
            raise DeadStateError(f"state {state} is not live")
        return self.masks[state]

    def step(self, state: int, token_id: int) -> int:
        if not (0 <= token_id < len(self.vocab)):
            raise TokenNotAllowedError(f"token id {token_id} out of range")
        dest = int(self.next_table[state, token_id])
        if dest < 0:
            raise TokenNotAllowedError(
                f"token {token_id} ({self.vocab.tokens[token_id].text!r}) "
                f"not allowed from state {state}"
            )
        return dest

    def walk(self, token_ids: Sequence[int]) -> int:
        state = self.start
        for token_id in token_ids:
            state = self.step(state, token_id)
        return state


def build_token_index(dfa: Dfa, vocab: Vocabulary) -> TokenIndex:
    """Lift a character DFA to the token vocabulary.

    Cost is O(|states| x total token text length) worst case; the per-pair
    walk runs in the selected kernel.
    """
    cuts = _interval_cuts(
        [(lo, hi) for lo, hi, _ in edges] for edges in dfa.transitions
    )
    n_intervals = len(cuts) - 1
    dense = np.full((max(dfa.n_states, 1), n_intervals), -1, dtype=np.int32)
    for state, edges in enumerate(dfa.transitions):
        for lo, hi, dest in edges:
            idx = bisect_right(cuts, lo) - 1
            while idx < n_intervals and cuts[idx] <= hi:
                dense[state, idx] = dest
                idx += 1

    starts = cuts[:-1]
    offsets = np.zeros(len(vocab) + 1, dtype=np.int32)
    flat: list[int] = []
    for token in vocab.tokens:
        if not token.special and token.text:
            flat.extend(bisect_right(starts, ord(ch)) - 1 for ch in token.text)
        offsets[token.id + 1] = len(flat)
    classes = np.asarray(flat, dtype=np.int32)

    next_table = np.asarray(
        _walk_token_table(dense, classes, offsets), dtype=np.int32
    )
    masks = next_table >= 0
    eos_allowed = np.zeros(dfa.n_states, dtype=bool)
    for state in dfa.accepts:
        eos_allowed[state] = True
    masks[:, vocab.eos_id] = eos_allowed

    next_table.setflags(write=False)
    masks.setflags(write=False)
    eos_allowed.setflags(write=False)
    return TokenIndex(
        dfa=dfa,
        vocab=vocab,
        next_table=next_table,
        masks=masks,
        eos_allowed=eos_allowed,
    )


def token_index_for_schema(
    schema: SchemaNode, vocab: Vocabulary, state_budget: int = DEFAULT_STATE_BUDGET
) -> TokenIndex:
    return build_token_index(schema_dfa(schema, state_budget), vocab)
