from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from schemaforce.automaton import Token, Vocabulary
from schemaforce.schema import build_chart_schema, build_doc_schema

# Hand-ordered decoding alphabet for soundness runs. Closing characters sit at
# the lowest ids so a constant-score greedy walk terminates instead of looping
# inside unbounded strings or integers. Every lowercase letter, digit, and the
# underscore appears as a single-character token, so any schema built from
# [a-z0-9_] keys stays expressible.
_SUITE_TEXTS = (
    ["", '"', "}", ",", ":", " ", "{"]
    + list("0123456789")
    + ["-", "\\", "_"]
    + list("abcdefghijklmnopqrstuvwxyz")
    + [
        "ab",
        "an",
        "re",
        "rea",
        "soning",
        "answer",
        "12",
        ', "',
        '": "',
        "\\n",
        '\\"',
        "\\u0041",
    ]
)


def suite_vocabulary() -> Vocabulary:
    tokens = tuple(
        Token(i, text, special=(i == 0)) for i, text in enumerate(_SUITE_TEXTS)
    )
    return Vocabulary(tokens=tokens, eos_id=0)


@pytest.fixture(scope="session")
def suite_vocab() -> Vocabulary:
    return suite_vocabulary()


# (id, dataset, gold, key, reasoning, scripted answer) — seven of the ten
# scripted answers match gold after normalization, so a faithful pipeline
# scores exactly 70%
_RIG_ROWS = [
    ("c1", "mychart", "Paris", None, "the capital bar", "paris"),
    ("c2", "mychart", "two", None, "count of lines", "two"),
    ("c3", "mychart", "blue", None, "legend color", "red"),
    ("c4", "mychart", "12", None, "axis value", "12"),
    ("i1", "myinfographic", "water", None, "main icon", "water"),
    ("i2", "myinfographic", "asia", None, "largest region", "asia"),
    ("i3", "myinfographic", "ten", None, "stat figure", "seven"),
    ("d1", "mydoc", "42", "total_amount", "bottom line", "42"),
    ("d2", "mydoc", "3", "page", "footer says", 3),
    ("d3", "mydoc", "moss and co", "billing_name", "header block", "moss raw"),
]


def build_rigged_eval(dir_path: Path) -> dict:
    """Write the 10-record rigged dataset, its script, and a vocabulary file."""
    import json

    from schemaforce.automaton import save_vocabulary

    dataset_path = dir_path / "rigged.jsonl"
    script_path = dir_path / "script.json"
    vocab_path = dir_path / "vocab.json"

    lines = []
    script = {}
    for record_id, dataset, gold, key, reasoning, answer in _RIG_ROWS:
        record = {
            "id": record_id,
            "dataset": dataset,
            "question": f"question for {record_id}",
            "gold": gold,
            "context_text": f"document text for {record_id}",
        }
        if key is not None:
            record["key"] = key
            record["max_length"] = 12
        lines.append(json.dumps(record, ensure_ascii=False))
        answer_key = f"2_{key}" if key is not None else "2_answer"
        script[record_id] = json.dumps(
            {"1_reasoning": reasoning, answer_key: answer}, ensure_ascii=False
        )
    dataset_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    script_path.write_text(json.dumps(script), encoding="utf-8")
    save_vocabulary(suite_vocabulary(), vocab_path)
    return {
        "dataset": dataset_path,
        "script": script_path,
        "vocab": vocab_path,
        "expected_overall": 0.7,
        "n_records": len(_RIG_ROWS),
    }


@pytest.fixture()
def rigged_eval(tmp_path):
    return build_rigged_eval(tmp_path)


@pytest.fixture(scope="session")
def chart_spec():
    return build_chart_schema("infographic_explainer_tool", "Infographic Explainer Tool")


@pytest.fixture(scope="session")
def doc_page_spec():
    return build_doc_schema("page", 5)


@pytest.fixture(scope="session")
def doc_total_spec():
    return build_doc_schema("total_amount", 20)
