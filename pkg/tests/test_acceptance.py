"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Tolerances and trial counts are pinned here, not configurable.
"""

from __future__ import annotations

import itertools
import json
import random
import time

import numpy as np
import pytest
from click.testing import CliRunner

from schemaforce.automaton import (
    build_token_index,
    compile_nfa,
    determinize,
    dfa_accepts,
    minimize,
    schema_dfa,
    token_index_for_schema,
)
from schemaforce.backends import (
    AdversarialProvider,
    ConstantProvider,
    MockProvider,
    MockProviderSpec,
)
from schemaforce.cli import main as cli_main
from schemaforce.decoding import DecodeConfig, decode, forced_prefix, mask_logits
from schemaforce.errors import MaxTokensExceededError
from schemaforce.harness import DatasetScore, EvalReport, render_report
from schemaforce.patterns import parse_regex
from schemaforce.schema import (
    Kind,
    SchemaNode,
    apply_index_prefix,
    build_chart_schema,
    build_doc_schema,
    validate_instance,
)
from schemaforce.synthvocab import synthetic_vocabulary

from conftest import build_rigged_eval, suite_vocabulary
from oracles import (
    dfa_language,
    lang_of,
    naive_match,
    random_regex,
    random_schema,
    random_vocabulary,
    token_table_oracle,
)


def ok(criterion: int, message: str) -> None:
    print(f"[acceptance] criterion {criterion}: PASS - {message}")


def test_c01_soundness_10k_decodes():
    """>= 10,000 decodes, >= 20 random schemas x {random, adversarial,
    constant} providers; 100% of returned outputs validate; < 2 minutes."""
    started = time.perf_counter()
    vocab = suite_vocabulary()
    rng = random.Random(20240612)
    schemas = [random_schema(rng, max_depth=2) for _ in range(21)]

    decodes = 0
    returned = 0
    invalid = 0
    for schema_no, schema in enumerate(schemas):
        index = token_index_for_schema(schema, vocab)
        providers = (
            [("mock", MockProvider(len(vocab), MockProviderSpec(seed=t)), t) for t in range(250)]
            + [("adv", AdversarialProvider(index, seed=t), t) for t in range(220)]
            + [("const", ConstantProvider(len(vocab)), t) for t in range(10)]
        )
        for kind, provider, trial in providers:
            decodes += 1
            prompt = f"{kind}/{schema_no}/{trial}"
            try:
                result = decode(provider, prompt, index, DecodeConfig(max_tokens=300))
            except MaxTokensExceededError:
                continue
            returned += 1
            if not validate_instance(schema, result.text).valid:
                invalid += 1

    elapsed = time.perf_counter() - started
    assert decodes >= 10_000
    assert invalid == 0
    assert returned >= decodes * 0.8  # the suite must actually exercise outputs
    assert elapsed < 120.0
    ok(1, f"{returned}/{decodes} decodes returned, all valid, {elapsed:.1f}s")


def test_c02_oracle_equivalence_all_strings_len8():
    """>= 200 random regexes: DFA acceptance equals the naive matcher on every
    string of length <= 8 over a 4-character alphabet; zero disagreements."""
    alphabet = "abcd"
    rng = random.Random(77)
    universe_size = sum(4**n for n in range(9))
    checked = 0
    for _ in range(200):
        ast = random_regex(rng, depth=3)
        dfa = minimize(determinize(compile_nfa(ast)))
        # full-set equality over Sigma^<=8 is pointwise agreement on all
        # 87,381 strings; the AST side is enumerated by naive set semantics
        assert dfa_language(dfa, alphabet, 8) == lang_of(ast, alphabet, 8)
        # spot-check the backtracking matcher on every string up to length 3
        for length in range(4):
            for chars in itertools.product(alphabet, repeat=length):
                text = "".join(chars)
                assert dfa_accepts(dfa, text) == naive_match(ast, text)
        checked += universe_size
    ok(2, f"200 regexes x {universe_size} strings agreed ({checked} comparisons)")


def test_c03_token_index_brute_force():
    """>= 100 (schema, vocabulary) pairs: allowed/next tables equal exhaustive
    character-walk recomputation exactly."""
    rng = random.Random(4242)
    for pair_no in range(100):
        schema = random_schema(rng, max_depth=1)
        vocab = random_vocabulary(rng, n_tokens=rng.randint(3, 20))
        dfa = schema_dfa(schema)
        index = build_token_index(dfa, vocab)
        next_map, allowed = token_table_oracle(dfa, vocab)
        for q in range(dfa.n_states):
            got_allowed = set(np.flatnonzero(index.next_table[q] >= 0))
            assert got_allowed == allowed[q], (pair_no, q)
            for token_id in allowed[q]:
                assert int(index.next_table[q, token_id]) == next_map[(q, token_id)]
            expected_mask = set(allowed[q])
            if q in dfa.accepts:
                expected_mask.add(vocab.eos_id)
            assert set(np.flatnonzero(index.masks[q])) == expected_mask
    ok(3, "100 (schema, vocabulary) pairs matched the character-walk oracle")


def test_c04_key_order_guarantee():
    """Prefixed template schemas sort alphabetically into declaration order;
    reordered instances are rejected by both validator and DFA."""
    chart = build_chart_schema("infographic_explainer_tool", "Infographic Explainer Tool")
    doc = build_doc_schema("total_amount", 20)
    for spec in (apply_index_prefix(chart), apply_index_prefix(doc)):
        keys = spec.parameters.property_keys
        assert tuple(sorted(keys)) == keys
        assert apply_index_prefix(spec) == spec  # idempotent

    reordered = '{"2_answer": "a", "1_reasoning": "r"}'
    assert not validate_instance(chart.parameters, reordered).valid
    assert not dfa_accepts(schema_dfa(chart.parameters), reordered)

    reordered_doc = '{"2_total_amount": "x", "1_reasoning": "r"}'
    assert not validate_instance(doc.parameters, reordered_doc).valid
    assert not dfa_accepts(schema_dfa(doc.parameters), reordered_doc)
    ok(4, "alphabetical sort equals declaration order; reordered instances rejected")


def test_c05_forced_reasoning():
    """The chart schema's start state forces the reasoning member; decoded
    outputs always place reasoning before the answer."""
    vocab = suite_vocabulary()
    chart = build_chart_schema("t", "d")
    index = token_index_for_schema(chart.parameters, vocab)
    assert forced_prefix(index, index.start) == '{"1_reasoning": "'

    for seed in range(50):
        provider = MockProvider(len(vocab), MockProviderSpec(seed=seed))
        text = decode(provider, f"p{seed}", index, DecodeConfig(max_tokens=400)).text
        assert text.startswith('{"1_reasoning": "')
        assert text.index('"1_reasoning"') < text.index('"2_answer"')
    ok(5, 'forced prefix is {"1_reasoning": " and reasoning precedes the answer')


def _string_value_units(raw: str, key: str) -> int:
    """Independent escape-as-one-unit counter for one member's raw literal."""
    marker = f'"{key}": "'
    start = raw.index(marker) + len(marker)
    units = 0
    pos = start
    while raw[pos] != '"':
        if raw[pos] == "\\":
            pos += 6 if raw[pos + 1] == "u" else 2
        else:
            pos += 1
        units += 1
    return units


def test_c06_max_length_enforcement():
    """For caps {0, 1, 3, 20}: 1,000 decodes each, no generated string value
    ever exceeds the cap, with escapes counted as one character."""
    vocab = suite_vocabulary()
    for cap in (0, 1, 3, 20):
        schema = SchemaNode(
            Kind.OBJECT,
            properties=(
                ("1_reasoning", SchemaNode(Kind.STRING, max_length=4)),
                ("2_answer", SchemaNode(Kind.STRING, max_length=cap)),
            ),
            required=("1_reasoning", "2_answer"),
        )
        index = token_index_for_schema(schema, vocab)
        for seed in range(1000):
            provider = MockProvider(len(vocab), MockProviderSpec(seed=seed))
            text = decode(provider, f"c{cap}/{seed}", index, DecodeConfig(max_tokens=200)).text
            assert _string_value_units(text, "2_answer") <= cap, text
            assert _string_value_units(text, "1_reasoning") <= 4, text
            assert validate_instance(schema, text).valid
    ok(6, "4,000 decodes respected caps {0, 1, 3, 20} with escape = 1 unit")


def test_c07_argmax_preservation():
    """All-allowed mask: constrained greedy is token-identical to unconstrained
    greedy over 1,000 trials."""
    from schemaforce.automaton import Token, Vocabulary

    texts = ["", "a", "b", "ab", "x", "yz", " ", "0", "q", "zz", "w", "v"]
    vocab = Vocabulary(
        tokens=tuple(Token(i, t, special=(i == 0)) for i, t in enumerate(texts)),
        eos_id=0,
    )
    index = build_token_index(
        minimize(determinize(compile_nfa(parse_regex(".*")))), vocab
    )
    assert index.allowed_mask(index.start).all()  # genuinely all-allowed

    budget = 64
    token_texts = vocab.texts()
    for seed in range(1000):
        provider = MockProvider(len(vocab), MockProviderSpec(seed=seed))
        free: list[int] = []
        finished = False
        for _ in range(budget):
            token = int(np.argmax(provider.score("p", free)))
            if token == vocab.eos_id:
                finished = True
                break
            free.append(token)
        if finished:
            constrained = decode(provider, "p", index, DecodeConfig(max_tokens=budget))
            assert list(constrained.token_ids) == free
        else:
            with pytest.raises(MaxTokensExceededError) as info:
                decode(provider, "p", index, DecodeConfig(max_tokens=budget))
            assert info.value.partial_text == "".join(token_texts[t] for t in free)
    ok(7, "1,000 trials token-identical under the all-allowed mask")


def test_c08_table1_phase2_fixture():
    """render_report reproduces the Phase 2 block layout and numbers verbatim."""
    report = EvalReport(
        per_dataset={
            "mydoc": DatasetScore(n=400, correct=249, accuracy=0.6225),
            "mychart": DatasetScore(n=200, correct=9, accuracy=0.045),
            "myinfographic": DatasetScore(n=164, correct=100, accuracy=0.6098),
        },
        overall=0.5049,
    )
    rendered = render_report(report, title="Phase 2")
    expected = "\n".join(
        [
            "Eval Dataset           Accuracy",
            "mydoc                    62.25%",
            "mychart                    4.5%",
            "myinfographic            60.98%",
            "**Phase 2 Overall**      50.49%",
        ]
    )
    assert rendered == expected
    for number in ("62.25%", "4.5%", "60.98%", "50.49%"):
        assert number in rendered
    ok(8, "Phase 2 block rendered verbatim")


def test_c09_end_to_end_determinism(tmp_path):
    """CLI eval on the rigged 10-record dataset: byte-identical predictions
    across runs and exactly 70.0% overall."""
    rig = build_rigged_eval(tmp_path)
    runner = CliRunner()
    outputs = []
    for run_no in range(2):
        predictions = tmp_path / f"preds_{run_no}.jsonl"
        result = runner.invoke(
            cli_main,
            [
                "eval",
                "--dataset", str(rig["dataset"]),
                "--vocab", str(rig["vocab"]),
                "--backend", "scripted",
                "--script", str(rig["script"]),
                "--predictions", str(predictions),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "70%" in result.output
        outputs.append(predictions.read_bytes())
    assert outputs[0] == outputs[1]

    from schemaforce.harness import run_pipeline
    from test_harness import scripted_runner

    _, report = run_pipeline(
        rig["dataset"],
        scripted_runner(rig, suite_vocabulary()),
        tmp_path / "direct.jsonl",
    )
    assert report.overall == 0.7
    ok(9, "byte-identical predictions, overall exactly 70.0%")


def test_c10_performance():
    """Index build for a 32,000-token vocabulary in < 5 s; a 256-token mock
    decode in < 100 ms."""
    chart = build_chart_schema("t", "d")
    dfa = schema_dfa(chart.parameters)
    vocab = synthetic_vocabulary(32_000, seed=0)

    started = time.perf_counter()
    index = build_token_index(dfa, vocab)
    build_elapsed = time.perf_counter() - started
    assert build_elapsed < 5.0

    provider = MockProvider(len(vocab), MockProviderSpec(seed=0))
    config = DecodeConfig(max_tokens=256)

    def run_decode() -> None:
        try:
            decode(provider, "perf prompt", index, config)
        except MaxTokensExceededError:
            pass  # budget path still performs all 256 scoring+masking steps

    run_decode()  # warm caches
    started = time.perf_counter()
    run_decode()
    decode_elapsed = time.perf_counter() - started
    assert decode_elapsed < 0.1
    ok(
        10,
        f"index build {build_elapsed * 1e3:.0f} ms (< 5000), "
        f"256-token decode {decode_elapsed * 1e3:.1f} ms (< 100)",
    )
