"""Schema model: templates, the prefix transform, round trips, the validator."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schemaforce.automaton import dfa_accepts, schema_dfa
from schemaforce.errors import (
    InvalidKeyError,
    InvalidSchemaError,
    MalformedJsonError,
    TooManyPropertiesError,
    UnknownTypeError,
    UnsupportedKeywordError,
)
from schemaforce.schema import (
    CONCISE_ANSWER_DESCRIPTION,
    EXACT_ANSWER_DESCRIPTION,
    Kind,
    Reason,
    SchemaNode,
    ToolSpec,
    ValidationReport,
    apply_index_prefix,
    build_chart_schema,
    build_doc_schema,
    parse_schema,
    serialize_tool_spec,
    strip_index_prefix,
    validate_instance,
)

# the on-disk envelope for the chart/infographic template
CHART_TEMPLATE_TEXT = """
{
  "name": "infographic_explair_tool",
  "description": "Infographic Explainer Tool",
  "parameters": {
    "type": "object",
    "properties": {
      "1_reasoning": {"type": "string"},
      "2_answer": {
        "type": "string",
        "description": "Concise answer to the user question."
      }
    },
    "required": ["1_reasoning", "2_answer"]
  }
}
"""


class TestParseSchema:
    def test_chart_template_text(self):
        spec = parse_schema(CHART_TEMPLATE_TEXT)
        assert spec.parameters.property_keys == ("1_reasoning", "2_answer")
        assert spec.parameters.required == ("1_reasoning", "2_answer")
        assert spec.parameters.child("2_answer").description == CONCISE_ANSWER_DESCRIPTION

    def test_empty_object(self):
        text = '{"name":"t","description":"d","parameters":{"type":"object","properties":{},"required":[]}}'
        spec = parse_schema(text)
        assert spec.parameters.properties == ()
        assert spec.parameters.required == ()

    def test_array_type_rejected(self):
        text = '{"name":"t","description":"d","parameters":{"type":"array"}}'
        with pytest.raises(UnknownTypeError):
            parse_schema(text)

    def test_unsupported_keyword_rejected(self):
        text = (
            '{"name":"t","description":"d","parameters":'
            '{"type":"object","properties":{"a":{"type":"string","minLength":1}},"required":[]}}'
        )
        with pytest.raises(UnsupportedKeywordError):
            parse_schema(text)

    def test_max_length_on_integer_rejected(self):
        text = (
            '{"name":"t","description":"d","parameters":'
            '{"type":"object","properties":{"a":{"type":"integer","maxLength":3}},"required":[]}}'
        )
        with pytest.raises(UnsupportedKeywordError):
            parse_schema(text)

    def test_malformed_json(self):
        with pytest.raises(MalformedJsonError):
            parse_schema("{not json")

    def test_duplicate_keys_rejected(self):
        text = (
            '{"name":"t","description":"d","parameters":'
            '{"type":"object","properties":{"a":{"type":"string"},"a":{"type":"integer"}},"required":[]}}'
        )
        with pytest.raises(MalformedJsonError):
            parse_schema(text)

    def test_required_must_be_declared(self):
        text = (
            '{"name":"t","description":"d","parameters":'
            '{"type":"object","properties":{},"required":["ghost"]}}'
        )
        with pytest.raises(InvalidSchemaError):
            parse_schema(text)


class TestTemplates:
    def test_chart_schema_shape(self, chart_spec):
        params = chart_spec.parameters
        assert params.property_keys == ("1_reasoning", "2_answer")
        assert params.required == ("1_reasoning", "2_answer")
        assert all(child.kind is Kind.STRING for _, child in params.properties)
        assert params.child("1_reasoning").max_length is None

    def test_chart_answer_description_fixed(self):
        spec = build_chart_schema("any_tool", "whatever")
        assert spec.parameters.child("2_answer").description == CONCISE_ANSWER_DESCRIPTION

    def test_chart_empty_description_ok(self):
        spec = build_chart_schema("t", "")
        assert spec.description == ""

    def test_doc_schema_page_is_integer(self, doc_page_spec):
        answer = doc_page_spec.parameters.child("2_page")
        assert answer.kind is Kind.INTEGER
        assert answer.max_length is None

    def test_doc_schema_string_entity(self, doc_total_spec):
        answer = doc_total_spec.parameters.child("2_total_amount")
        assert answer.kind is Kind.STRING
        assert answer.max_length == 20
        assert answer.description == EXACT_ANSWER_DESCRIPTION
        assert doc_total_spec.name == "doc_extraction_tool"

    def test_doc_schema_key_charset(self):
        with pytest.raises(InvalidKeyError):
            build_doc_schema("billing name", 10)

    def test_doc_schema_order(self, doc_total_spec):
        assert doc_total_spec.parameters.property_keys == ("1_reasoning", "2_total_amount")


class TestIndexPrefix:
    def _spec(self, keys: list[str]) -> ToolSpec:
        params = SchemaNode(
            Kind.OBJECT,
            properties=tuple((k, SchemaNode(Kind.STRING)) for k in keys),
            required=tuple(keys),
        )
        return ToolSpec(name="t", description="d", parameters=params)

    def test_basic_prefixing(self):
        out = apply_index_prefix(self._spec(["reasoning", "answer"]))
        assert out.parameters.property_keys == ("1_reasoning", "2_answer")
        assert out.parameters.required == ("1_reasoning", "2_answer")

    def test_idempotent(self):
        once = apply_index_prefix(self._spec(["reasoning", "answer"]))
        twice = apply_index_prefix(once)
        assert once == twice

    def test_too_many_properties(self):
        with pytest.raises(TooManyPropertiesError):
            apply_index_prefix(self._spec([f"k{i}" for i in range(10)]))

    def test_sorted_equals_declared(self):
        out = apply_index_prefix(self._spec(["zeta", "alpha", "mid"]))
        keys = out.parameters.property_keys
        assert tuple(sorted(keys)) == keys

    def test_strip_prefix(self):
        assert strip_index_prefix("2_answer") == "answer"
        assert strip_index_prefix("reasoning") == "reasoning"
        assert strip_index_prefix("2_total_amount") == "total_amount"


# hypothesis strategies for random schema trees

_KEYS = st.text("abcdefgh_0123456789", min_size=1, max_size=5)
_DESCRIPTIONS = st.none() | st.text(max_size=8)

_LEAVES = st.one_of(
    st.builds(
        SchemaNode,
        st.just(Kind.STRING),
        max_length=st.none() | st.integers(0, 30),
        description=_DESCRIPTIONS,
    ),
    st.builds(SchemaNode, st.just(Kind.INTEGER), description=_DESCRIPTIONS),
)


@st.composite
def _objects(draw, children) -> SchemaNode:
    keys = draw(st.lists(_KEYS, max_size=4, unique=True))
    properties = tuple((key, draw(children)) for key in keys)
    required = tuple(key for key in keys if draw(st.booleans()))
    return SchemaNode(
        Kind.OBJECT,
        properties=properties,
        required=required,
        description=draw(_DESCRIPTIONS),
    )


_SCHEMAS = st.recursive(_LEAVES, _objects, max_leaves=8)
_TOOL_SPECS = st.builds(
    ToolSpec,
    name=st.text(min_size=1, max_size=8),
    description=st.text(max_size=8),
    parameters=_objects(_SCHEMAS),
)


class TestRoundTrip:
    @given(spec=_TOOL_SPECS)
    def test_parse_serialize_round_trip(self, spec: ToolSpec):
        assert parse_schema(serialize_tool_spec(spec)) == spec

    @given(spec=_TOOL_SPECS, indent=st.none() | st.integers(0, 4))
    def test_round_trip_any_indent(self, spec: ToolSpec, indent):
        assert parse_schema(serialize_tool_spec(spec, indent=indent)) == spec

    @given(spec=_TOOL_SPECS)
    def test_prefix_sort_equals_declaration(self, spec: ToolSpec):
        if len(spec.parameters.properties) > 9:
            return
        out = apply_index_prefix(spec)
        keys = out.parameters.property_keys
        assert tuple(sorted(keys)) == keys
        assert apply_index_prefix(out) == out


class TestValidateInstance:
    def test_minimal_conforming(self, chart_spec):
        report = validate_instance(chart_spec.parameters, '{"1_reasoning": "r", "2_answer": "a"}')
        assert report.valid and not report.violations

    def test_key_order_violation(self, chart_spec):
        candidate = '{"2_answer": "a", "1_reasoning": "r"}'
        report = validate_instance(chart_spec.parameters, candidate)
        assert not report.valid
        assert Reason.KEY_ORDER_VIOLATION in {v.reason for v in report.violations}
        # the automaton path must reject the same string
        assert not dfa_accepts(schema_dfa(chart_spec.parameters), candidate)

    def test_page_wrong_type(self, doc_page_spec):
        report = validate_instance(doc_page_spec.parameters, '{"1_reasoning": "r", "2_page": "3"}')
        assert not report.valid
        assert Reason.WRONG_TYPE in {v.reason for v in report.violations}

    def test_missing_required(self, chart_spec):
        report = validate_instance(chart_spec.parameters, '{"1_reasoning": "r"}')
        assert Reason.MISSING_REQUIRED in {v.reason for v in report.violations}

    def test_unknown_key(self, chart_spec):
        report = validate_instance(
            chart_spec.parameters, '{"1_reasoning": "r", "2_answer": "a", "extra": "x"}'
        )
        assert Reason.UNKNOWN_KEY in {v.reason for v in report.violations}

    def test_too_long(self):
        schema = SchemaNode(
            Kind.OBJECT,
            properties=(("a", SchemaNode(Kind.STRING, max_length=2)),),
            required=("a",),
        )
        assert validate_instance(schema, '{"a": "xy"}').valid
        assert validate_instance(schema, '{"a": "x\\n"}').valid  # escape counts once
        assert validate_instance(schema, '{"a": "x\\u0041"}').valid
        for too_long in ('{"a": "xyz"}', '{"a": "x\\ny"}', '{"a": "\\n\\n\\n"}'):
            report = validate_instance(schema, too_long)
            assert Reason.TOO_LONG in {v.reason for v in report.violations}

    def test_malformed(self, chart_spec):
        # non-canonical whitespace counts as malformed, like any other garbage
        for bad in ("", "{", "nope", '{"1_reasoning":"r","2_answer":"a"}'):
            report = validate_instance(chart_spec.parameters, bad)
            assert not report.valid
            assert {v.reason for v in report.violations} == {Reason.MALFORMED_JSON}

    def test_optional_member_can_be_omitted(self):
        schema = SchemaNode(
            Kind.OBJECT,
            properties=(
                ("a", SchemaNode(Kind.STRING, max_length=1)),
                ("b", SchemaNode(Kind.INTEGER)),
            ),
            required=("b",),
        )
        assert validate_instance(schema, '{"b": 4}').valid
        assert validate_instance(schema, '{"a": "x", "b": 4}').valid
        assert not validate_instance(schema, '{"a": "x"}').valid

    def test_report_flag_mirrors_violations(self, chart_spec):
        report = validate_instance(chart_spec.parameters, "{")
        with pytest.raises(InvalidSchemaError):
            ValidationReport(valid=True, violations=report.violations)


class TestMutationFuzz:
    BASE = '{"1_reasoning": "rea", "2_answer": "a1"}'
    CHARS = ' {}[]":,\\abz019-\n\té漢'

    @settings(max_examples=300, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_single_character_mutations(self, chart_spec, seed):
        rng = random.Random(seed)
        pos = rng.randrange(len(self.BASE))
        mutated = self.BASE[:pos] + rng.choice(self.CHARS) + self.BASE[pos + 1 :]
        report = validate_instance(chart_spec.parameters, mutated)
        # flag always mirrors the violation list
        assert report.valid == (not report.violations)
        if report.valid:
            # never valid for ill-formed JSON
            parsed = json.loads(mutated)
            assert isinstance(parsed, dict)
