import pytest

from whamm.errors import MalformedProbeName, UnsupportedForEngineTarget
from whamm.monitor import (
    EXIT_BINDING,
    CallRef,
    MatchBinding,
    NotAProbe,
    encode_export_name,
    parse_export_name,
)
from whamm.pipeline import monitor_text
from whamm.wasm import encode_module, load


def func_exports(m):
    return sorted(k for k, (kind, _) in m.exports.items() if kind == "func")


def test_shared_counter_exports():
    m = monitor_text("wasm:opcode:call:before { report shared var count: u32; count++; }")
    assert func_exports(m) == ["wasm:exit", "wasm:opcode:call()"]


def test_unshared_counter_uses_alloc_callback():
    m = monitor_text("wasm:opcode:call:before { report unshared var count: u32; count++; }")
    assert "wasm:opcode:call($alloc0(fid,pc))" in m.exports
    assert "$alloc0" in m.exports


def test_mixed_predicate_export():
    m = monitor_text("wasm:opcode:call(arg0: i32):before / fid == 53 && arg0 == 3 / "
                     "{ report unshared var count: u32; count++; }")
    assert "wasm:opcode:call/$pred0(fid)/($alloc0(fid,pc),arg0)" in m.exports
    assert m.func_type(m.exports["$pred0"][1]).results == ("i32",)


def test_empty_script_monitor():
    m = monitor_text("")
    assert func_exports(m) in ([], ["wasm:exit"])


def test_monitor_validates_on_its_own():
    from whamm.corpus import MONITORS, monitor_source

    for name in MONITORS:
        m = monitor_text(monitor_source(name))
        load(encode_module(m))
        assert not any(imp.module not in ("whamm",) for imp in m.imports)


@pytest.mark.parametrize("text", [
    "wasm:opcode:call:alt { }",
    "wasm:opcode:call:after { }",
    "wasm:func:*:entry { }",
    "report var s: u32; wasm:opcode:call:before / target_fn_name == \"f\" / { s++; }",
])
def test_rejected_on_engine_target(text):
    with pytest.raises(UnsupportedForEngineTarget):
        monitor_text(text)


def test_documented_names():
    assert parse_export_name("wasm:exit") == EXIT_BINDING
    b = parse_export_name("wasm:opcode:br_if(arg0,pc)")
    assert b == MatchBinding("opcode", "br_if", None, ("arg0", "pc"))
    assert b.arity == 2


def test_predicate_and_callback_names():
    name = "wasm:opcode:call/$p(fid,imm0)/($alloc(fid,pc),arg1,frame)"
    b = parse_export_name(name)
    assert b.predicate == CallRef("p", ("fid", "imm0"))
    assert b.params[0] == CallRef("alloc", ("fid", "pc"))
    assert encode_export_name(b) == name


def test_non_probe_exports_are_ignored():
    for name in ("memory", "main", "$alloc0", "wasmish:opcode:call()"):
        with pytest.raises(NotAProbe):
            parse_export_name(name)


@pytest.mark.parametrize("name", [
    "wasm:opcode:call/$p(", "wasm:opcode:call(arg-1)", "wasm:opcode:nosuchop()",
    "wasm:opcode:", "wasm:exit()", "wasm:opcode:call(arg0,)",
])
def test_malformed_names(name):
    with pytest.raises(MalformedProbeName):
        parse_export_name(name)
