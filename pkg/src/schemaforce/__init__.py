"""Schema-constrained decoding for logits-producing generation backends."""

from .schema import (
    Kind,
    Reason,
    SchemaNode,
    ToolSpec,
    ValidationReport,
    Violation,
    apply_index_prefix,
    build_chart_schema,
    build_doc_schema,
    parse_schema,
    serialize_tool_spec,
    strip_index_prefix,
    validate_instance,
)
from .patterns import (
    Alt,
    CharClass,
    Concat,
    Literal,
    Regex,
    Repeat,
    integer_pattern,
    object_pattern,
    parse_regex,
    render_regex,
    schema_to_regex,
    string_pattern,
)
from .automaton import (
    Dfa,
    Nfa,
    Token,
    TokenIndex,
    Vocabulary,
    build_token_index,
    compile_nfa,
    determinize,
    dfa_accepts,
    kernel_backend,
    load_vocabulary,
    minimize,
    save_vocabulary,
    schema_dfa,
    shortest_accept_length,
    token_index_for_schema,
)
from .decoding import (
    DecodeConfig,
    DecodeMode,
    DecodeResult,
    FinishReason,
    LogitsProvider,
    decode,
    forced_prefix,
    mask_logits,
    select_token,
)

__version__ = "0.1.0"
