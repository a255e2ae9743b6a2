# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled token-walk kernel: every token's class sequence from every state.

Compiled variant of ``_tokenwalk_py.walk_token_table``; tokens with empty
class spans (specials, empty text) come back -1.
"""

import numpy as np


def walk_token_table(const int[:, ::1] dfa_table,
                     const int[::1] token_classes,
                     const int[::1] token_offsets):
    cdef Py_ssize_t n_states = dfa_table.shape[0]
    cdef Py_ssize_t n_tokens = token_offsets.shape[0] - 1
    out = np.full((n_states, n_tokens), -1, dtype=np.int32)
    cdef int[:, ::1] out_mv = out
    cdef Py_ssize_t q, t, k, a, b
    cdef int s
    for q in range(n_states):
        for t in range(n_tokens):
            a = token_offsets[t]
            b = token_offsets[t + 1]
            if a == b:
                continue
            s = <int> q
            for k in range(a, b):
                s = dfa_table[s, token_classes[k]]
                if s < 0:
                    break
            out_mv[q, t] = s
    return out
