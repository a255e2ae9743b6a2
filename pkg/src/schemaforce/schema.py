"""JSON-Schema subset, tool-call envelopes, and the independent instance validator.

The supported subset is exactly {object, string, integer} with
{properties, required, maxLength, description}. Property order is normative:
a conforming instance emits its keys in declaration order, with one space
after each ``:`` and each ``,`` and no other whitespace. ``maxLength`` counts
content characters between the quotes, with every escape sequence (``\\"``,
``\\n``, ``\\uXXXX``) counting as one character.

``validate_instance`` is the correctness oracle for the whole engine. It is a
standalone canonical-form scanner and deliberately shares no code with the
pattern/automaton pipeline.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Mapping

from .errors import (
    InvalidKeyError,
    InvalidSchemaError,
    MalformedJsonError,
    TooManyPropertiesError,
    UnknownTypeError,
    UnsupportedKeywordError,
)

CONCISE_ANSWER_DESCRIPTION = "Concise answer to the user question."
EXACT_ANSWER_DESCRIPTION = "The answer, exactly as it appears in the document."
DOC_TOOL_NAME = "doc_extraction_tool"
DOC_TOOL_DESCRIPTION = "Extract information from a document"

_ENTITY_KEY_RE = re.compile(r"[A-Za-z0-9_]+\Z")
_INDEX_PREFIX_RE = re.compile(r"\A[1-9]_")


class Kind(Enum):
    OBJECT = "object"
    STRING = "string"
    INTEGER = "integer"


@dataclass(frozen=True)
class SchemaNode:
    """One node of the schema tree; immutable and shareable."""

    kind: Kind
    properties: tuple[tuple[str, "SchemaNode"], ...] = ()
    required: tuple[str, ...] = ()
    max_length: int | None = None
    description: str | None = None

    def __post_init__(self) -> None:
        if self.kind is not Kind.OBJECT:
            if self.properties or self.required:
                raise InvalidSchemaError(
                    f"properties/required are only valid on object nodes, not {self.kind.value}"
                )
        if self.kind is not Kind.STRING and self.max_length is not None:
            raise InvalidSchemaError(
                f"maxLength is only valid on string nodes, not {self.kind.value}"
            )
        if self.max_length is not None and self.max_length < 0:
            raise InvalidSchemaError("maxLength must be non-negative")
        keys = [k for k, _ in self.properties]
        if len(set(keys)) != len(keys):
            raise InvalidSchemaError("duplicate property key")
        missing = [k for k in self.required if k not in keys]
        if missing:
            raise InvalidSchemaError(f"required keys not declared: {missing}")

    @property
    def property_keys(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.properties)

    def child(self, key: str) -> "SchemaNode":
        for k, node in self.properties:
            if k == key:
                return node
        raise KeyError(key)


@dataclass(frozen=True)
class ToolSpec:
    """Tool-call envelope: a named, described object schema."""

    name: str
    description: str
    parameters: SchemaNode

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidSchemaError("tool name must be non-empty")
        if self.parameters.kind is not Kind.OBJECT:
            raise InvalidSchemaError("tool parameters must be an object schema")


class Reason(Enum):
    MISSING_REQUIRED = "missing_required"
    WRONG_TYPE = "wrong_type"
    TOO_LONG = "too_long"
    UNKNOWN_KEY = "unknown_key"
    KEY_ORDER_VIOLATION = "key_order_violation"
    MALFORMED_JSON = "malformed_json"


@dataclass(frozen=True)
class Violation:
    json_path: str
    reason: Reason


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...] = ()

    def __post_init__(self) -> None:
        if self.valid != (not self.violations):
            raise InvalidSchemaError("valid flag must mirror an empty violation list")

    @classmethod
    def from_violations(cls, violations: list[Violation]) -> "ValidationReport":
        return cls(valid=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# parsing / serialization of schema documents
# ---------------------------------------------------------------------------

_OBJECT_KEYWORDS = {"type", "properties", "required", "description"}
_STRING_KEYWORDS = {"type", "maxLength", "description"}
_INTEGER_KEYWORDS = {"type", "description"}
_ENVELOPE_KEYWORDS = {"name", "description", "parameters"}


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise MalformedJsonError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _description_of(obj: Mapping[str, Any], where: str) -> str | None:
    desc = obj.get("description")
    if desc is not None and not isinstance(desc, str):
        raise UnsupportedKeywordError(f"{where}: description must be a string")
    return desc


def _node_from_json(obj: Any, where: str) -> SchemaNode:
    if not isinstance(obj, dict):
        raise UnsupportedKeywordError(f"{where}: schema node must be a JSON object")
    kind_name = obj.get("type")
    if kind_name is None:
        raise UnknownTypeError(f"{where}: missing 'type'")
    if kind_name not in ("object", "string", "integer"):
        raise UnknownTypeError(f"{where}: unsupported type {kind_name!r}")
    kind = Kind(kind_name)

    allowed = {
        Kind.OBJECT: _OBJECT_KEYWORDS,
        Kind.STRING: _STRING_KEYWORDS,
        Kind.INTEGER: _INTEGER_KEYWORDS,
    }[kind]
    extra = set(obj) - allowed
    if extra:
        raise UnsupportedKeywordError(f"{where}: unsupported keyword(s) {sorted(extra)}")

    if kind is Kind.OBJECT:
        props_obj = obj.get("properties", {})
        if not isinstance(props_obj, dict):
            raise UnsupportedKeywordError(f"{where}: properties must be an object")
        properties = tuple(
            (key, _node_from_json(child, f"{where}.{key}"))
            for key, child in props_obj.items()
        )
        required_obj = obj.get("required", [])
        if not isinstance(required_obj, list) or not all(
            isinstance(k, str) for k in required_obj
        ):
            raise UnsupportedKeywordError(f"{where}: required must be a list of strings")
        return SchemaNode(
            kind,
            properties=properties,
            required=tuple(required_obj),
            description=_description_of(obj, where),
        )

    if kind is Kind.STRING:
        max_length = obj.get("maxLength")
        if max_length is not None and (type(max_length) is not int or max_length < 0):
            raise UnsupportedKeywordError(
                f"{where}: maxLength must be a non-negative integer"
            )
        return SchemaNode(kind, max_length=max_length, description=_description_of(obj, where))

    return SchemaNode(kind, description=_description_of(obj, where))


def parse_schema(text: str) -> ToolSpec:
    """Parse a tool envelope document, preserving property order exactly."""
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise UnsupportedKeywordError("top level must be a JSON object")
    extra = set(doc) - _ENVELOPE_KEYWORDS
    if extra:
        raise UnsupportedKeywordError(f"unsupported envelope key(s) {sorted(extra)}")
    for key in ("name", "description", "parameters"):
        if key not in doc:
            raise UnsupportedKeywordError(f"envelope missing {key!r}")
    if not isinstance(doc["name"], str) or not isinstance(doc["description"], str):
        raise UnsupportedKeywordError("name and description must be strings")
    return ToolSpec(
        name=doc["name"],
        description=doc["description"],
        parameters=_node_from_json(doc["parameters"], "parameters"),
    )


def node_to_json(node: SchemaNode) -> dict[str, Any]:
    out: dict[str, Any] = {"type": node.kind.value}
    if node.kind is Kind.OBJECT:
        out["properties"] = {k: node_to_json(child) for k, child in node.properties}
        out["required"] = list(node.required)
    if node.max_length is not None:
        out["maxLength"] = node.max_length
    if node.description is not None:
        out["description"] = node.description
    return out


def serialize_tool_spec(spec: ToolSpec, indent: int | None = 2) -> str:
    """Render a ToolSpec as UTF-8 JSON in the envelope shape, key order intact."""
    doc = {
        "name": spec.name,
        "description": spec.description,
        "parameters": node_to_json(spec.parameters),
    }
    return json.dumps(doc, ensure_ascii=False, indent=indent)


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------


def build_chart_schema(tool_name: str, tool_description: str) -> ToolSpec:
    """Reason-then-answer template for chart/infographic style questions."""
    parameters = SchemaNode(
        Kind.OBJECT,
        properties=(
            ("1_reasoning", SchemaNode(Kind.STRING)),
            ("2_answer", SchemaNode(Kind.STRING, description=CONCISE_ANSWER_DESCRIPTION)),
        ),
        required=("1_reasoning", "2_answer"),
    )
    return ToolSpec(name=tool_name, description=tool_description, parameters=parameters)


def build_doc_schema(key: str, max_length: int) -> ToolSpec:
    """Entity-keyed extraction template: the answer property is named after the entity.

    ``page`` answers are integers (uncapped); every other entity is a string
    capped at ``max_length`` content characters.
    """
    if not key or not _ENTITY_KEY_RE.match(key):
        raise InvalidKeyError(f"entity key must match [A-Za-z0-9_]+, got {key!r}")
    if max_length < 0:
        raise InvalidSchemaError("max_length must be non-negative")
    if key == "page":
        answer = SchemaNode(Kind.INTEGER, description=EXACT_ANSWER_DESCRIPTION)
    else:
        answer = SchemaNode(
            Kind.STRING, max_length=max_length, description=EXACT_ANSWER_DESCRIPTION
        )
    parameters = SchemaNode(
        Kind.OBJECT,
        properties=(("1_reasoning", SchemaNode(Kind.STRING)), (f"2_{key}", answer)),
        required=("1_reasoning", f"2_{key}"),
    )
    return ToolSpec(name=DOC_TOOL_NAME, description=DOC_TOOL_DESCRIPTION, parameters=parameters)


def apply_index_prefix(spec: ToolSpec) -> ToolSpec:
    """Prefix top-level keys with their 1-based position so that alphabetical
    sorting reproduces declaration order.

    Grammar engines that reorder object keys alphabetically would otherwise
    destroy the reason-before-answer layout. Idempotent; single digits only,
    because "10_" sorts before "2_".
    """
    params = spec.parameters
    if len(params.properties) > 9:
        raise TooManyPropertiesError(
            f"index prefixes are single digits; got {len(params.properties)} properties"
        )
    rename: dict[str, str] = {}
    new_props = []
    for position, (key, child) in enumerate(params.properties, start=1):
        prefix = f"{position}_"
        new_key = key if key.startswith(prefix) else prefix + key
        rename[key] = new_key
        new_props.append((new_key, child))
    new_params = SchemaNode(
        Kind.OBJECT,
        properties=tuple(new_props),
        required=tuple(rename[k] for k in params.required),
        description=params.description,
    )
    return ToolSpec(name=spec.name, description=spec.description, parameters=new_params)


def strip_index_prefix(key: str) -> str:
    """Remove a leading single-digit ``N_`` prefix if present."""
    return _INDEX_PREFIX_RE.sub("", key, count=1)


# ---------------------------------------------------------------------------
# instance validation (independent oracle)
# ---------------------------------------------------------------------------


class _ScanError(Exception):
    pass


@dataclass(frozen=True)
class _ScannedString:
    text: str
    units: int  # content characters, each escape sequence counted once


@dataclass(frozen=True)
class _ScannedInteger:
    raw: str


@dataclass(frozen=True)
class _ScannedObject:
    # (raw key spelling between the quotes, unescaped key, value)
    members: tuple[tuple[str, str, Any], ...]


_SIMPLE_ESCAPES = {
    '"': '"',
    "\\": "\\",
    "/": "/",
    "b": "\b",
    "f": "\f",
    "n": "\n",
    "r": "\r",
    "t": "\t",
}


class _CanonicalScanner:
    """Recursive-descent scanner for the canonical surface form.

    Strictly enforces the one-space-after-``:``-and-``,`` policy; anything the
    canonical grammar would not generate is a scan error.
    """

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, message: str) -> "_ScanError":
        return _ScanError(f"{message} at offset {self.pos}")

    def peek(self) -> str:
        if self.pos >= len(self.text):
            raise self.fail("unexpected end of input")
        return self.text[self.pos]

    def take(self) -> str:
        ch = self.peek()
        self.pos += 1
        return ch

    def expect(self, ch: str) -> None:
        if self.take() != ch:
            self.pos -= 1
            raise self.fail(f"expected {ch!r}")

    def scan_document(self) -> Any:
        value = self.scan_value()
        if self.pos != len(self.text):
            raise self.fail("trailing characters after value")
        return value

    def scan_value(self) -> Any:
        ch = self.peek()
        if ch == "{":
            return self.scan_object()
        if ch == '"':
            return self.scan_string()
        if ch == "-" or ch in "0123456789":
            return self.scan_integer()
        raise self.fail(f"unexpected character {ch!r}")

    def scan_object(self) -> _ScannedObject:
        self.expect("{")
        members: list[tuple[str, str, Any]] = []
        if self.peek() == "}":
            self.take()
            return _ScannedObject(())
        while True:
            start = self.pos
            key = self.scan_string()
            raw_key = self.text[start + 1 : self.pos - 1]
            self.expect(":")
            self.expect(" ")
            members.append((raw_key, key.text, self.scan_value()))
            ch = self.take()
            if ch == "}":
                return _ScannedObject(tuple(members))
            if ch != ",":
                self.pos -= 1
                raise self.fail("expected ',' or '}'")
            self.expect(" ")

    def scan_string(self) -> _ScannedString:
        self.expect('"')
        chars: list[str] = []
        units = 0
        while True:
            ch = self.take()
            if ch == '"':
                return _ScannedString("".join(chars), units)
            if ch == "\\":
                esc = self.take()
                if esc in _SIMPLE_ESCAPES:
                    chars.append(_SIMPLE_ESCAPES[esc])
                elif esc == "u":
                    if self.pos + 4 > len(self.text):
                        raise self.fail("truncated \\u escape")
                    hex_digits = self.text[self.pos : self.pos + 4]
                    if not all(c in "0123456789abcdefABCDEF" for c in hex_digits):
                        raise self.fail("invalid \\u escape")
                    self.pos += 4
                    chars.append(chr(int(hex_digits, 16)))
                else:
                    self.pos -= 1
                    raise self.fail(f"invalid escape \\{esc}")
                units += 1
            elif ord(ch) < 0x20:
                self.pos -= 1
                raise self.fail("raw control character in string")
            else:
                chars.append(ch)
                units += 1

    def scan_integer(self) -> _ScannedInteger:
        digits = "0123456789"
        start = self.pos
        if self.peek() == "-":
            self.take()
        first = self.take()
        if first not in digits:
            self.pos -= 1
            raise self.fail("expected a digit")
        if first != "0":
            while self.pos < len(self.text) and self.text[self.pos] in digits:
                self.pos += 1
        elif self.pos < len(self.text) and self.text[self.pos] in digits:
            raise self.fail("leading zero")
        return _ScannedInteger(self.text[start : self.pos])


def _canonical_key_spelling(key: str) -> str:
    # json.dumps produces the same minimal escaping the pattern compiler emits
    return json.dumps(key, ensure_ascii=False)[1:-1]


def _check_value(node: SchemaNode, value: Any, path: str, out: list[Violation]) -> None:
    expected = {
        Kind.OBJECT: _ScannedObject,
        Kind.STRING: _ScannedString,
        Kind.INTEGER: _ScannedInteger,
    }[node.kind]
    if not isinstance(value, expected):
        out.append(Violation(path, Reason.WRONG_TYPE))
        return
    if node.kind is Kind.STRING:
        if node.max_length is not None and value.units > node.max_length:
            out.append(Violation(path, Reason.TOO_LONG))
        return
    if node.kind is Kind.INTEGER:
        return

    by_spelling = {
        _canonical_key_spelling(key): (position, key, child)
        for position, (key, child) in enumerate(node.properties)
    }
    present = [False] * len(node.properties)
    cursor = 0
    for raw_key, parsed_key, member_value in value.members:
        entry = by_spelling.get(raw_key)
        if entry is None:
            out.append(Violation(f"{path}.{parsed_key}", Reason.UNKNOWN_KEY))
            continue
        position, key, child = entry
        present[position] = True
        if position < cursor:
            out.append(Violation(f"{path}.{key}", Reason.KEY_ORDER_VIOLATION))
            continue
        cursor = position + 1
        _check_value(child, member_value, f"{path}.{key}", out)
    for position, (key, _child) in enumerate(node.properties):
        if key in node.required and not present[position]:
            out.append(Violation(f"{path}.{key}", Reason.MISSING_REQUIRED))


def validate_instance(schema: SchemaNode, candidate: str) -> ValidationReport:
    """Check a candidate string against the canonical language of ``schema``.

    Everything the canonical grammar would reject for reasons other than the
    named semantic violations (key set, order, types, lengths) is reported as
    MALFORMED_JSON, including non-canonical whitespace and non-canonical key
    spellings. All failures are reported, never raised.
    """
    try:
        value = _CanonicalScanner(candidate).scan_document()
    except _ScanError:
        return ValidationReport.from_violations([Violation("$", Reason.MALFORMED_JSON)])
    violations: list[Violation] = []
    _check_value(schema, value, "$", violations)
    return ValidationReport.from_violations(violations)
