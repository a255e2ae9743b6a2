"""Benchmark the token-walk kernels and the end-to-end decode hot path.

Runs the same (state x token) walk through the compiled extension (when
built) and the pure-Python fallback, on the reason-then-answer schema against
a synthetic subword vocabulary, then times a 256-token constrained decode.

    python benchmarks/bench_token_index.py [--vocab-size 32000] [--repeats 3]
"""

from __future__ import annotations

import argparse
import importlib
import time
from bisect import bisect_right

import numpy as np

from schemaforce.automaton import (
    _interval_cuts,
    build_token_index,
    kernel_backend,
    schema_dfa,
)
from schemaforce.backends import MockProvider, MockProviderSpec
from schemaforce.decoding import DecodeConfig, decode
from schemaforce.errors import MaxTokensExceededError
from schemaforce.schema import build_chart_schema
from schemaforce.synthvocab import synthetic_vocabulary


def kernel_inputs(dfa, vocab):
    cuts = _interval_cuts([(lo, hi) for lo, hi, _ in edges] for edges in dfa.transitions)
    n_intervals = len(cuts) - 1
    dense = np.full((dfa.n_states, n_intervals), -1, dtype=np.int32)
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
    return dense, np.asarray(flat, dtype=np.int32), offsets


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--vocab-size", type=int, default=32_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    spec = build_chart_schema("bench_tool", "Benchmark tool")
    dfa = schema_dfa(spec.parameters)
    vocab = synthetic_vocabulary(args.vocab_size, seed=0)
    dense, classes, offsets = kernel_inputs(dfa, vocab)
    total_chars = int(offsets[-1])

    print(f"schema DFA: {dfa.n_states} states, {dense.shape[1]} char classes")
    print(f"vocabulary: {len(vocab)} tokens, {total_chars} walked characters")
    print(f"selected kernel: {kernel_backend()}")
    print()

    kernels = {}
    try:
        kernels["compiled"] = importlib.import_module(
            "schemaforce._tokenwalk"
        ).walk_token_table
    except ImportError:
        print("compiled kernel not built; benchmarking the fallback only")
    kernels["python"] = importlib.import_module(
        "schemaforce._tokenwalk_py"
    ).walk_token_table

    results = {}
    tables = {}
    for name, kernel in kernels.items():
        elapsed = best_of(lambda k=kernel: k(dense, classes, offsets), args.repeats)
        tables[name] = np.asarray(kernels[name](dense, classes, offsets))
        results[name] = elapsed
        rate = dfa.n_states * len(vocab) / elapsed / 1e6
        print(f"walk_token_table[{name:>8}]: {elapsed * 1e3:9.2f} ms   ({rate:6.1f} M pairs/s)")

    if len(tables) == 2:
        assert np.array_equal(tables["compiled"], tables["python"]), "kernels disagree"
        print(f"speedup: {results['python'] / results['compiled']:.1f}x  (tables identical)")
    print()

    build_time = best_of(lambda: build_token_index(dfa, vocab), args.repeats)
    print(f"build_token_index (selected kernel): {build_time * 1e3:.2f} ms")

    index = build_token_index(dfa, vocab)
    provider = MockProvider(len(vocab), MockProviderSpec(seed=0))
    config = DecodeConfig(max_tokens=256)

    def one_decode():
        try:
            decode(provider, "benchmark prompt", index, config)
        except MaxTokensExceededError:
            pass  # still 256 full scoring+masking steps

    decode_time = best_of(one_decode, args.repeats)
    print(f"256-token constrained decode (mock provider): {decode_time * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
