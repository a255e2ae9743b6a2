"""Evaluation pipeline for document key-information extraction.

Datasets arrive as JSONL records; each record gets a per-dataset output
schema (entity-keyed extraction for mydoc-style records, reason-then-answer
for chart/infographic-style ones), a deterministic prompt, one constrained
generation, answer extraction, and exact-match scoring into a two-column
accuracy report with an example-weighted overall row.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .automaton import TokenIndex, Vocabulary, token_index_for_schema
from .backends import RemoteBackend, RemoteBackendConfig, GrammarKind
from .decoding import DecodeConfig, LogitsProvider, SerializedProvider, decode
from .errors import (
    DatasetParseError,
    IdMismatchError,
    MissingKeyError,
    PipelineStageError,
    SchemaFieldMissingError,
)
from .patterns import render_regex, schema_to_regex
from .schema import (
    SchemaNode,
    ToolSpec,
    build_chart_schema,
    build_doc_schema,
    serialize_tool_spec,
    strip_index_prefix,
    validate_instance,
)

# the entity-keyed template always caps answers; records that omit the cap
# get this default
DEFAULT_DOC_MAX_LENGTH = 80


class AnswerMode(Enum):
    EXACT = "exact"
    CONCISE = "concise"


class MatchMode(Enum):
    EXACT = "exact"
    SUBSTRING = "substring"


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    dataset: str
    question: str
    gold: str
    context_text: str | None = None
    image_ref: str | None = None
    key: str | None = None
    max_length: int | None = None


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    raw_output: str
    reasoning: str
    answer: str
    valid: bool


@dataclass(frozen=True)
class DatasetScore:
    n: int
    correct: int
    accuracy: float


@dataclass(frozen=True)
class EvalReport:
    per_dataset: Mapping[str, DatasetScore]
    overall: float


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    """Read a JSONL dataset; errors carry the 1-based line number."""
    records: list[DatasetRecord] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(line_no, str(exc)) from exc
            if not isinstance(doc, dict):
                raise DatasetParseError(line_no, "record must be a JSON object")
            for field_name in ("id", "dataset", "question", "gold"):
                if not isinstance(doc.get(field_name), str) or not doc[field_name]:
                    raise SchemaFieldMissingError(line_no, field_name)
            if doc["dataset"] == "mydoc" and not doc.get("key"):
                raise SchemaFieldMissingError(line_no, "key")
            max_length = doc.get("max_length")
            if max_length is not None:
                max_length = int(max_length)
            records.append(
                DatasetRecord(
                    id=doc["id"],
                    dataset=doc["dataset"],
                    question=doc["question"],
                    gold=doc["gold"],
                    context_text=doc.get("context_text"),
                    image_ref=doc.get("image_ref"),
                    key=doc.get("key"),
                    max_length=max_length,
                )
            )
    return records


_CHART_TOOLS = {
    "mychart": ("chart_explainer_tool", "Chart Explainer Tool"),
    "myinfographic": ("infographic_explainer_tool", "Infographic Explainer Tool"),
}


def select_schema(record: DatasetRecord) -> ToolSpec:
    """Entity-keyed records get the doc template; everything else the chart one."""
    if record.key is not None:
        max_length = (
            record.max_length if record.max_length is not None else DEFAULT_DOC_MAX_LENGTH
        )
        return build_doc_schema(record.key, max_length)
    name, description = _CHART_TOOLS.get(
        record.dataset, (f"{record.dataset}_tool", f"{record.dataset} answering tool")
    )
    return build_chart_schema(name, description)


def answer_mode_for(record: DatasetRecord) -> AnswerMode:
    return AnswerMode.EXACT if record.dataset == "mydoc" else AnswerMode.CONCISE


def build_prompt(record: DatasetRecord, mode: AnswerMode) -> str:
    """Deterministic prompt: question, optional document text, the answer-style
    instruction, and the schema's field documentation."""
    if mode is AnswerMode.EXACT and record.key is None:
        raise MissingKeyError(f"record {record.id!r} has no entity key for exact mode")
    spec = select_schema(record)
    lines = [f"You are using {spec.name}: {spec.description}."]
    if record.context_text:
        lines.append("Document:")
        lines.append(record.context_text)
    lines.append(f"Question: {record.question}")
    if mode is AnswerMode.EXACT:
        lines.append("Answer with the value exactly as it appears in the document.")
    else:
        lines.append("Give a concise answer to the question.")
    lines.append("Respond with a JSON object containing:")
    for key, child in spec.parameters.properties:
        doc = f" - {key} ({child.kind.value})"
        if child.description:
            doc += f": {child.description}"
        lines.append(doc)
    return "\n".join(lines)


def extract_answer(
    spec: ToolSpec | SchemaNode, raw_output: str
) -> tuple[str, str, bool]:
    """Pull (reasoning, answer, valid) out of one generation.

    valid requires the raw output to pass the instance validator AND to carry
    a ``2_``-prefixed answer member; integer answers render in canonical
    decimal. Invalid outputs yield ("", "", False).
    """
    node = spec.parameters if isinstance(spec, ToolSpec) else spec
    if not validate_instance(node, raw_output).valid:
        return "", "", False
    doc = json.loads(raw_output)
    reasoning = ""
    answer: str | None = None
    for key, value in doc.items():
        if strip_index_prefix(key) == "reasoning":
            reasoning = value if isinstance(value, str) else str(value)
        elif answer is None:
            answer = value if isinstance(value, str) else str(int(value))
    if answer is None:
        return reasoning, "", False
    return reasoning, answer, True


def normalize_answer(text: str) -> str:
    """Trim, collapse internal whitespace runs to one space, case-fold."""
    return " ".join(text.split()).casefold()


def _is_correct(pred: PredictionRecord, gold: str, match_mode: MatchMode) -> bool:
    if not pred.valid:
        return False
    answer = normalize_answer(pred.answer)
    expected = normalize_answer(gold)
    if match_mode is MatchMode.SUBSTRING:
        return bool(expected) and expected in answer
    return answer == expected


def exact_match_accuracy(
    preds: Sequence[PredictionRecord],
    records: Sequence[DatasetRecord],
    match_mode: MatchMode = MatchMode.EXACT,
) -> EvalReport:
    """Per-dataset accuracy plus the example-weighted overall fraction."""
    if len(preds) != len(records) or any(
        p.id != r.id for p, r in zip(preds, records)
    ):
        raise IdMismatchError("predictions and records must align by id")
    counts: dict[str, list[int]] = {}
    for pred, record in zip(preds, records):
        bucket = counts.setdefault(record.dataset, [0, 0])
        bucket[0] += 1
        bucket[1] += int(_is_correct(pred, record.gold, match_mode))
    per_dataset = {
        name: DatasetScore(n=n, correct=correct, accuracy=correct / n)
        for name, (n, correct) in counts.items()
    }
    total = sum(score.n for score in per_dataset.values())
    correct = sum(score.correct for score in per_dataset.values())
    overall = correct / total if total else 0.0
    return EvalReport(per_dataset=per_dataset, overall=overall)


def _format_pct(fraction: float) -> str:
    value = (Decimal(str(fraction)) * 100).quantize(Decimal("0.01"), ROUND_HALF_UP)
    text = str(value)
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text + "%"


def render_report(report: EvalReport, title: str | None = None) -> str:
    """Two-column accuracy table with a bold-marked overall row."""
    rows = [(name, _format_pct(score.accuracy)) for name, score in report.per_dataset.items()]
    if rows:
        label = f"{title} Overall" if title else "Overall"
        rows.append((f"**{label}**", _format_pct(report.overall)))
    header = ("Eval Dataset", "Accuracy")
    name_width = max([len(header[0])] + [len(name) for name, _ in rows])
    pct_width = max([len(header[1])] + [len(pct) for _, pct in rows])
    lines = [f"{header[0]:<{name_width}}  {header[1]:>{pct_width}}"]
    lines.extend(f"{name:<{name_width}}  {pct:>{pct_width}}" for name, pct in rows)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


class Runner(ABC):
    """One constrained generation per record."""

    @abstractmethod
    def generate(self, record: DatasetRecord, spec: ToolSpec, prompt: str) -> str: ...


ProviderFactory = Callable[[DatasetRecord], LogitsProvider]


class LocalRunner(Runner):
    """Local constrained decoding against any logits provider.

    Token indexes are cached per distinct schema; entity-keyed datasets
    produce one schema per (key, max_length) pair.
    """

    def __init__(
        self,
        provider_factory: ProviderFactory,
        vocab: Vocabulary,
        config: DecodeConfig,
    ):
        self._factory = provider_factory
        self._vocab = vocab
        self._config = config
        self._index_cache: dict[str, TokenIndex] = {}

    def index_for(self, spec: ToolSpec) -> TokenIndex:
        cache_key = serialize_tool_spec(spec, indent=None)
        index = self._index_cache.get(cache_key)
        if index is None:
            index = token_index_for_schema(spec.parameters, self._vocab)
            self._index_cache[cache_key] = index
        return index

    def generate(self, record: DatasetRecord, spec: ToolSpec, prompt: str) -> str:
        index = self.index_for(spec)
        provider = self._factory(record)
        if not provider.concurrent_safe:
            provider = SerializedProvider(provider)
        return decode(provider, prompt, index, self._config).text


class RemoteRunner(Runner):
    """Delegates generation to a grammar-accepting endpoint (untrusted)."""

    def __init__(self, config: RemoteBackendConfig):
        self._backend = RemoteBackend(config)
        self._kind = config.grammar_kind

    def generate(self, record: DatasetRecord, spec: ToolSpec, prompt: str) -> str:
        if self._kind is GrammarKind.REGEX:
            grammar: str | ToolSpec = render_regex(schema_to_regex(spec.parameters))
        else:
            grammar = spec
        return self._backend.generate(prompt, grammar)


def run_pipeline(
    dataset_path: str | Path,
    runner: Runner,
    predictions_path: str | Path,
    *,
    mode: AnswerMode | None = None,
    match_mode: MatchMode = MatchMode.EXACT,
    parallelism: int = 1,
    report_path: str | Path | None = None,
    report_title: str | None = None,
) -> tuple[Path, EvalReport]:
    """Generate, extract, score, and persist predictions in input order.

    Each stage failure is re-raised tagged with the record id. The predictions
    file keeps raw outputs verbatim for audit; given a deterministic runner it
    is byte-identical across runs.
    """
    records = load_dataset(dataset_path)

    def process(record: DatasetRecord) -> PredictionRecord:
        stage = "schema"
        try:
            spec = select_schema(record)
            record_mode = mode if mode is not None else answer_mode_for(record)
            stage = "prompt"
            prompt = build_prompt(record, record_mode)
            stage = "generate"
            raw_output = runner.generate(record, spec, prompt)
            stage = "extract"
            reasoning, answer, valid = extract_answer(spec, raw_output)
        except Exception as exc:
            raise PipelineStageError(stage, record.id, exc) from exc
        return PredictionRecord(
            id=record.id,
            raw_output=raw_output,
            reasoning=reasoning,
            answer=answer,
            valid=valid,
        )

    if parallelism > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            preds = list(pool.map(process, records))
    else:
        preds = [process(record) for record in records]

    predictions_path = Path(predictions_path)
    with open(predictions_path, "w", encoding="utf-8") as handle:
        for pred in preds:
            handle.write(
                json.dumps(
                    {
                        "id": pred.id,
                        "raw_output": pred.raw_output,
                        "reasoning": pred.reasoning,
                        "answer": pred.answer,
                        "valid": pred.valid,
                    },
                    ensure_ascii=False,
                )
            )
            handle.write("\n")

    report = exact_match_accuracy(preds, records, match_mode)
    if report_path is not None:
        Path(report_path).write_text(
            render_report(report, report_title) + "\n", encoding="utf-8"
        )
    return predictions_path, report


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    preds = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            preds.append(
                PredictionRecord(
                    id=doc["id"],
                    raw_output=doc["raw_output"],
                    reasoning=doc["reasoning"],
                    answer=doc["answer"],
                    valid=doc["valid"],
                )
            )
    return preds
