import pytest

from whamm.errors import (
    AmbiguousType,
    CheckError,
    IllegalStorage,
    ParseError,
    TypeMismatch,
    UnknownVar,
    UnsatisfiableBound,
)
from whamm.lang import ast as A
from whamm.lang import parse_expr, parse_script, print_script, typecheck

UNSHARED_CALLS = "wasm:opcode:call:before { unshared var count: u32; count++; }"
IMIX_MAP = """
report var dyn_categories: map<u32, i32>;
wasm:opcode:*:before { dyn_categories[category_id]++; }
"""


def check(text):
    return typecheck(parse_script(text))


def test_unshared_counter_parses():
    s = parse_script(UNSHARED_CALLS)
    assert len(s.directives) == 1
    (decl,) = [st for st in s.directives[0].body if isinstance(st, A.Decl)]
    assert "unshared" in decl.storage
    assert decl.ty == A.Prim("u32")


def test_report_map_and_wildcard():
    s = parse_script(IMIX_MAP)
    assert len(s.globals) == 1 and "report" in s.globals[0].storage
    assert isinstance(s.globals[0].ty, A.MapT)
    assert str(s.directives[0].rule) == "wasm:opcode:*:before"


def test_missing_mode_is_a_parse_error():
    with pytest.raises(ParseError) as ei:
        parse_script("wasm:opcode:call { }")
    assert ei.value.line == 1 and ei.value.col > 0


def test_parse_error_positions_on_later_lines():
    with pytest.raises(ParseError) as ei:
        parse_script("wasm:opcode:call:before {\n  count = = 1;\n}")
    assert ei.value.line == 2


def test_typed_predicate_with_bound():
    ts = check("wasm:opcode:call(arg0: i32):before / fid == 53 && arg0 == 3 / { }")
    td = ts.directives[0]
    assert td.predicate.ty == A.BOOL
    assert td.rule.bounds == {"arg0": "i32"}


def test_increment_bool_is_type_mismatch():
    with pytest.raises(TypeMismatch):
        check("wasm:opcode:call:before { var b: bool; b++; }")


def test_polymorphic_arg_needs_bound():
    with pytest.raises(AmbiguousType):
        check("wasm:opcode:call:before { report var x: i32; x = arg0; }")


def test_unknown_variable():
    with pytest.raises(UnknownVar):
        check("wasm:opcode:call:before { nope++; }")


def test_illegal_storage_combinations():
    with pytest.raises((IllegalStorage, ParseError)):
        check("wasm:opcode:call:before { unshared shared var x: u32; }")
    with pytest.raises((IllegalStorage, ParseError)):
        check("frame var m: map<u32, u32>;")


def test_impossible_bound():
    with pytest.raises(UnsatisfiableBound):
        check("wasm:opcode:i32.add(arg0: i64):before { }")


def test_predicate_must_be_bool():
    with pytest.raises(CheckError):
        check("wasm:opcode:call:before / pc + 1 / { }")


def test_small_int_literal_range_checked():
    with pytest.raises(CheckError):
        check("var x: u8 = 300;")


def test_shared_and_frame_words_accepted():
    ts = check("""
        frame var depth: u32;
        wasm:opcode:call:before { shared var n: u64; n++; depth = depth + 1; }
    """)
    assert [v.storage for v in ts.frame_vars()] == ["frame"]
    assert ts.directives[0].vars["n"].storage == "shared"


def test_print_parse_identity_on_corpus():
    from whamm.corpus import MONITORS, monitor_source

    for name in MONITORS:
        s = parse_script(monitor_source(name))
        assert parse_script(print_script(s)) == s


def test_expression_precedence():
    e = parse_expr("1 + 2 * 3 == 7 && !false")
    assert isinstance(e, A.Binary) and e.op == "&&"
    assert e.left.op == "=="
    assert e.left.left.op == "+"


def test_empty_script_is_fine():
    ts = check("")
    assert ts.directives == [] and not ts.needs_runtime()
