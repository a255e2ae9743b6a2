"""Structural regular expressions whose language is the set of conforming
JSON serializations of a schema.

Canonical surface form: keys in declaration order, exactly one space after
each ``:`` and each ``,``, no other whitespace. Strings exclude raw control
characters; escapes are ``\\`` + one of ``" \\ / b f n r t`` or ``\\u`` + four
hex digits (any four — surrogate validation is the validator's concern, and
it is relaxed to match).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import AbstractSet, Sequence

from .errors import InvalidSchemaError, RegexSyntaxError, UnsupportedSchemaError
from .schema import Kind, SchemaNode

MAX_SCALAR = 0x10FFFF


class Regex:
    __slots__ = ()


@dataclass(frozen=True)
class Literal(Regex):
    char: str

    def __post_init__(self) -> None:
        if len(self.char) != 1:
            raise InvalidSchemaError("Literal holds exactly one character")


@dataclass(frozen=True)
class CharClass(Regex):
    ranges: tuple[tuple[int, int], ...]
    negated: bool = False

    def __post_init__(self) -> None:
        for lo, hi in self.ranges:
            if not (0 <= lo <= hi <= MAX_SCALAR):
                raise InvalidSchemaError(f"empty or out-of-range class range ({lo}, {hi})")


@dataclass(frozen=True)
class Concat(Regex):
    parts: tuple[Regex, ...]


@dataclass(frozen=True)
class Alt(Regex):
    options: tuple[Regex, ...]

    def __post_init__(self) -> None:
        if not self.options:
            raise InvalidSchemaError("alternation needs at least one option")


@dataclass(frozen=True)
class Repeat(Regex):
    child: Regex
    min: int
    max: int | None

    def __post_init__(self) -> None:
        if self.min < 0 or (self.max is not None and self.max < self.min):
            raise InvalidSchemaError(f"bad repeat bounds ({self.min}, {self.max})")


EPSILON = Concat(())
ANY_CHAR = CharClass((), negated=True)


def literal(text: str) -> Regex:
    if len(text) == 1:
        return Literal(text)
    return Concat(tuple(Literal(ch) for ch in text))


def concat(*parts: Regex) -> Regex:
    flat: list[Regex] = []
    for part in parts:
        if isinstance(part, Concat):
            flat.extend(part.parts)
        else:
            flat.append(part)
    if len(flat) == 1:
        return flat[0]
    return Concat(tuple(flat))


def _normalize(ranges: Sequence[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    if not ranges:
        return ()
    merged: list[tuple[int, int]] = []
    for lo, hi in sorted(ranges):
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


def effective_ranges(cls: CharClass) -> tuple[tuple[int, int], ...]:
    """Sorted, merged codepoint ranges the class actually matches."""
    ranges = _normalize(cls.ranges)
    if not cls.negated:
        return ranges
    out: list[tuple[int, int]] = []
    cursor = 0
    for lo, hi in ranges:
        if cursor < lo:
            out.append((cursor, lo - 1))
        cursor = hi + 1
    if cursor <= MAX_SCALAR:
        out.append((cursor, MAX_SCALAR))
    return tuple(out)


# ---------------------------------------------------------------------------
# schema -> pattern
# ---------------------------------------------------------------------------

_DIGIT = CharClass(((0x30, 0x39),))
_DIGIT_NONZERO = CharClass(((0x31, 0x39),))
_HEX_DIGIT = CharClass(((0x30, 0x39), (0x41, 0x46), (0x61, 0x66)))
_STRING_CONTENT = CharClass(((0x00, 0x1F), (0x22, 0x22), (0x5C, 0x5C)), negated=True)
_SIMPLE_ESCAPE_CHAR = CharClass(
    tuple((ord(c), ord(c)) for c in sorted('"\\/bfnrt'))
)


def integer_pattern() -> Regex:
    """Canonical integers: optional minus, no leading zeros, no fractions."""
    return concat(
        Repeat(Literal("-"), 0, 1),
        Alt((Literal("0"), concat(_DIGIT_NONZERO, Repeat(_DIGIT, 0, None)))),
    )


def string_pattern(max_length: int | None = None) -> Regex:
    """Quoted string literal; each escape sequence counts as one unit toward the cap."""
    if max_length is not None and max_length < 0:
        raise InvalidSchemaError("max_length must be non-negative")
    unit = Alt(
        (
            _STRING_CONTENT,
            concat(Literal("\\"), _SIMPLE_ESCAPE_CHAR),
            concat(literal("\\u"), _HEX_DIGIT, _HEX_DIGIT, _HEX_DIGIT, _HEX_DIGIT),
        )
    )
    return concat(Literal('"'), Repeat(unit, 0, max_length), Literal('"'))


def object_pattern(
    properties: Sequence[tuple[str, Regex]], required: AbstractSet[str]
) -> Regex:
    """Object with members in declaration order; optional members may be
    omitted together with their separating comma."""
    keys = [k for k, _ in properties]
    missing = sorted(set(required) - set(keys))
    if missing:
        raise InvalidSchemaError(f"required keys not declared: {missing}")

    separator = literal(", ")
    members = [
        concat(literal(json.dumps(key, ensure_ascii=False)), literal(": "), value)
        for key, value in properties
    ]

    # tail(i, after_any): members i.. given whether any member was emitted yet.
    # Once a member is emitted, optional members factor into `(", " member)?`;
    # before that, each leading optional member spawns one alternative.
    memo: dict[tuple[int, bool], Regex] = {}

    def tail(i: int, after_any: bool) -> Regex:
        if i == len(members):
            return EPSILON
        cached = memo.get((i, after_any))
        if cached is not None:
            return cached
        member = members[i]
        rest = tail(i + 1, True)
        if keys[i] in required:
            lead = concat(separator, member) if after_any else member
            result = concat(lead, rest)
        elif after_any:
            result = concat(Repeat(concat(separator, member), 0, 1), rest)
        else:
            result = Alt((concat(member, rest), tail(i + 1, False)))
        memo[(i, after_any)] = result
        return result

    return concat(Literal("{"), tail(0, False), Literal("}"))


def schema_to_regex(schema: SchemaNode) -> Regex:
    """Structural composition of the three pattern builders."""
    if schema.kind is Kind.INTEGER:
        return integer_pattern()
    if schema.kind is Kind.STRING:
        return string_pattern(schema.max_length)
    if schema.kind is Kind.OBJECT:
        return object_pattern(
            [(key, schema_to_regex(child)) for key, child in schema.properties],
            set(schema.required),
        )
    raise UnsupportedSchemaError(f"cannot compile schema node kind {schema.kind!r}")


# ---------------------------------------------------------------------------
# rendering / parsing (interchange with remote grammar engines)
# ---------------------------------------------------------------------------

_METACHARS = set("\\^$.|?*+()[]{}")
_CONTROL_SHORTCUTS = {"\n": "\\n", "\r": "\\r", "\t": "\\t"}
_PREC_ALT, _PREC_CONCAT, _PREC_REPEAT = 0, 1, 2


def _render_char(ch: str, in_class: bool) -> str:
    if ch in _CONTROL_SHORTCUTS:
        return _CONTROL_SHORTCUTS[ch]
    cp = ord(ch)
    if cp < 0x20 or cp == 0x7F:
        return f"\\u{cp:04x}"
    if in_class:
        return "\\" + ch if ch in "]\\^-" else ch
    return "\\" + ch if ch in _METACHARS else ch


def _render_class(cls: CharClass) -> str:
    parts = ["[", "^" if cls.negated else ""]
    for lo, hi in cls.ranges:
        parts.append(_render_char(chr(lo), in_class=True))
        if hi > lo:
            parts.append("-")
            parts.append(_render_char(chr(hi), in_class=True))
    parts.append("]")
    return "".join(parts)


def _repeat_suffix(node: Repeat) -> str:
    if (node.min, node.max) == (0, 1):
        return "?"
    if (node.min, node.max) == (0, None):
        return "*"
    if (node.min, node.max) == (1, None):
        return "+"
    if node.max is None:
        return f"{{{node.min},}}"
    if node.min == node.max:
        return f"{{{node.min}}}"
    return f"{{{node.min},{node.max}}}"


def _render(node: Regex, prec: int) -> str:
    if isinstance(node, Literal):
        return _render_char(node.char, in_class=False)
    if isinstance(node, CharClass):
        if node.negated and not node.ranges:
            return "."
        return _render_class(node)
    if isinstance(node, Concat):
        body = "".join(_render(p, _PREC_CONCAT) for p in node.parts)
        return f"({body})" if prec > _PREC_CONCAT else body
    if isinstance(node, Alt):
        body = "|".join(_render(o, _PREC_CONCAT) for o in node.options)
        return f"({body})" if prec > _PREC_ALT else body
    if isinstance(node, Repeat):
        if isinstance(node.child, (Literal, CharClass)):
            child = _render(node.child, _PREC_REPEAT)
        else:
            child = f"({_render(node.child, _PREC_ALT)})"
        return child + _repeat_suffix(node)
    raise UnsupportedSchemaError(f"cannot render {node!r}")


def render_regex(ast: Regex) -> str:
    """Standard regex syntax; ``parse_regex`` recovers an equivalent language."""
    return _render(ast, _PREC_ALT)


class _RegexParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, message: str) -> RegexSyntaxError:
        return RegexSyntaxError(f"{message} at offset {self.pos}")

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos]

    def parse(self) -> Regex:
        node = self.parse_alternation()
        if not self.eof():
            raise self.fail(f"unexpected {self.peek()!r}")
        return node

    def parse_alternation(self) -> Regex:
        options = [self.parse_concat()]
        while not self.eof() and self.peek() == "|":
            self.pos += 1
            options.append(self.parse_concat())
        return options[0] if len(options) == 1 else Alt(tuple(options))

    def parse_concat(self) -> Regex:
        parts: list[Regex] = []
        while not self.eof() and self.peek() not in "|)":
            parts.append(self.parse_repeat())
        if len(parts) == 1:
            return parts[0]
        return Concat(tuple(parts))

    def parse_repeat(self) -> Regex:
        node = self.parse_atom()
        while not self.eof():
            ch = self.peek()
            if ch == "?":
                self.pos += 1
                node = Repeat(node, 0, 1)
            elif ch == "*":
                self.pos += 1
                node = Repeat(node, 0, None)
            elif ch == "+":
                self.pos += 1
                node = Repeat(node, 1, None)
            elif ch == "{":
                node = self.parse_braces(node)
            else:
                break
        return node

    def parse_braces(self, child: Regex) -> Regex:
        end = self.text.find("}", self.pos)
        if end < 0:
            raise self.fail("unterminated {m,n}")
        body = self.text[self.pos + 1 : end]
        self.pos = end + 1
        try:
            if "," not in body:
                exact = int(body)
                return Repeat(child, exact, exact)
            lo_text, hi_text = body.split(",", 1)
            lo = int(lo_text)
            hi = None if hi_text == "" else int(hi_text)
        except ValueError as exc:
            raise self.fail(f"bad repeat bounds {body!r}") from exc
        return Repeat(child, lo, hi)

    def parse_atom(self) -> Regex:
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            node = self.parse_alternation()
            if self.eof() or self.peek() != ")":
                raise self.fail("unterminated group")
            self.pos += 1
            return node
        if ch == "[":
            return self.parse_class()
        if ch == ".":
            self.pos += 1
            return ANY_CHAR
        if ch == "\\":
            return Literal(self.parse_escape(in_class=False))
        if ch in "?*+{":
            raise self.fail(f"dangling quantifier {ch!r}")
        self.pos += 1
        return Literal(ch)

    def parse_escape(self, in_class: bool) -> str:
        self.pos += 1  # consume backslash
        if self.eof():
            raise self.fail("dangling backslash")
        ch = self.text[self.pos]
        self.pos += 1
        if ch == "n":
            return "\n"
        if ch == "r":
            return "\r"
        if ch == "t":
            return "\t"
        if ch == "u":
            digits = self.text[self.pos : self.pos + 4]
            if len(digits) < 4 or not all(c in "0123456789abcdefABCDEF" for c in digits):
                raise self.fail("invalid \\u escape")
            self.pos += 4
            return chr(int(digits, 16))
        return ch

    def parse_class(self) -> Regex:
        self.pos += 1  # consume '['
        negated = False
        if not self.eof() and self.peek() == "^":
            negated = True
            self.pos += 1
        ranges: list[tuple[int, int]] = []
        while True:
            if self.eof():
                raise self.fail("unterminated character class")
            if self.peek() == "]":
                self.pos += 1
                return CharClass(tuple(ranges), negated=negated)
            lo = self.parse_class_char()
            hi = lo
            if not self.eof() and self.peek() == "-" and self.text[self.pos : self.pos + 2] != "-]":
                self.pos += 1
                hi = self.parse_class_char()
            if hi < lo:
                raise self.fail("reversed class range")
            ranges.append((lo, hi))

    def parse_class_char(self) -> int:
        ch = self.peek()
        if ch == "\\":
            return ord(self.parse_escape(in_class=True))
        self.pos += 1
        return ord(ch)


def parse_regex(text: str) -> Regex:
    """Parse the dialect emitted by ``render_regex``."""
    return _RegexParser(text).parse()
