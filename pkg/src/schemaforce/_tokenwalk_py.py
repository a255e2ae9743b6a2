"""Pure-Python token-walk kernel, selected when the extension is unavailable.

Same contract as ``_tokenwalk.pyx``: walk every token's class sequence from
every state of the dense transition table; -1 marks walks that die and tokens
with empty class spans. Vectorized over tokens, one fancy-index op per
character depth.
"""

from __future__ import annotations

import numpy as np


def walk_token_table(
    dfa_table: np.ndarray, token_classes: np.ndarray, token_offsets: np.ndarray
) -> np.ndarray:
    dfa_table = np.ascontiguousarray(dfa_table, dtype=np.int32)
    token_classes = np.asarray(token_classes, dtype=np.int32)
    token_offsets = np.asarray(token_offsets, dtype=np.int32)
    n_states = dfa_table.shape[0]
    n_tokens = len(token_offsets) - 1
    out = np.full((n_states, n_tokens), -1, dtype=np.int32)
    if n_states == 0 or n_tokens == 0:
        return out
    lengths = np.diff(token_offsets)
    max_len = int(lengths.max(initial=0))
    if max_len == 0:
        return out

    # rectangle of class ids; boolean fill enumerates valid slots in token order
    depth = np.arange(max_len)
    valid = depth[None, :] < lengths[:, None]
    padded = np.zeros((n_tokens, max_len), dtype=np.int32)
    padded[valid] = token_classes

    nonempty = lengths > 0
    for state in range(n_states):
        cur = np.full(n_tokens, state, dtype=np.int32)
        alive = nonempty.copy()
        for d in range(max_len):
            sel = alive & valid[:, d]
            if not sel.any():
                break
            cur[sel] = dfa_table[cur[sel], padded[sel, d]]
            alive[sel] = cur[sel] >= 0
        cur[~nonempty] = -1
        out[state] = cur
    return out
