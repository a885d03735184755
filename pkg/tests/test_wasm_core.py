import pytest

from conftest import FIXTURES, PROGRAMS, fixture, fixture_bytes, trace_of
from whamm.wasm import (
    EncodeOverflow,
    MalformedBinary,
    UnsupportedFeature,
    ValidationError,
    WasmTypeError,
    decode_module,
    encode_module,
    load,
    validate,
)
from whamm.wasm import build as B
from whamm.wasm.binary import HEADER, Reader
from whamm.wasm.types import F64, I32, I64, FuncType, FunctionIR, Instr, Limits, ModuleIR

# accept/reject verdicts of WABT 1.0.39 wasm-validate --enable-multi-memory
# (tools/build_fixtures.py --verdicts); simd is valid Wasm but outside our subset
WABT_VERDICTS = {
    "answer": True, "cache_walk": True, "fib": True, "indirect": True, "memops": True,
    "recursion": True, "sort": True, "switch": True, "three_calls": True, "trap_div": True,
    "trap_oob": True, "twomem": True, "invalid_call": False, "invalid_local": False, "invalid_type": False,
    "invalid_underflow": False,
}


def one_func(body, params=(), results=(I32,), locals_=()):
    ft = FuncType(tuple(params), tuple(results))
    f = FunctionIR(0, 0, ft, list(locals_), list(body) + [B.op("end")])
    return ModuleIR(types=[ft], funcs=[f], exports={"main": ("func", 0)})


def test_header_only_module_is_empty():
    m = decode_module(HEADER)
    assert m.funcs == [] and m.types == [] and m.exports == {}
    assert encode_module(ModuleIR()) == HEADER
    assert len(HEADER) == 8


def test_decode_answer_module():
    m = decode_module(fixture_bytes("answer"))
    assert len(m.funcs) == 1
    assert m.funcs[0].body == [Instr("i32.const", (7,)), Instr("end")]
    assert m.exports == {"main": ("func", 0)}


def test_simd_is_unsupported():
    with pytest.raises(UnsupportedFeature) as ei:
        decode_module(fixture_bytes("simd"))
    assert ei.value.name == "simd"


def test_malformed_inputs():
    with pytest.raises(MalformedBinary):
        decode_module(b"\x00asm\x02\x00\x00\x00")
    with pytest.raises(MalformedBinary):
        decode_module(b"\x7fELF\x01\x00\x00\x00")
    with pytest.raises(MalformedBinary):
        decode_module(fixture_bytes("answer")[:-3])


@pytest.mark.parametrize("name", sorted(set(WABT_VERDICTS) - {"invalid_call", "invalid_local",
                                                              "invalid_type", "invalid_underflow"}))
def test_round_trip_is_byte_identical(name):
    data = fixture_bytes(name)
    assert encode_module(load(data)) == data


@pytest.mark.parametrize("name", sorted(WABT_VERDICTS))
def test_validation_agrees_with_reference(name):
    try:
        load(fixture_bytes(name))
        ours = True
    except ValidationError:
        ours = False
    assert ours == WABT_VERDICTS[name]


def _memory_section_count(data: bytes) -> int:
    # independent walk over the section headers
    r = Reader(data)
    r.pos = 8
    while r.pos < len(data):
        sid = r.byte()
        size = r.u()
        if sid == 5:
            return r.u()
        r.pos += size
    return 0


def test_two_memories_encode_as_multi_memory():
    m = fixture("twomem")
    assert len(m.memories) == 2
    out = encode_module(m)
    assert _memory_section_count(out) == 2
    m.memories.append(Limits(1, 2))
    assert _memory_section_count(encode_module(m)) == 3


def test_encode_overflow():
    m = one_func([B.call(2 ** 33)])
    with pytest.raises(EncodeOverflow):
        encode_module(m)


def test_add_site_types():
    m = validate(one_func([B.i32_const(1), B.i32_const(2), B.op("i32.add")]))
    assert m.funcs[0].sites[2].stack_in == (I32, I32)
    assert [s.pc for s in m.funcs[0].sites] == list(range(4))


def test_type_error_position():
    with pytest.raises(WasmTypeError) as ei:
        validate(one_func([B.i64_const(1), B.op("i32.eqz")]))
    assert (ei.value.fid, ei.value.pc) == (0, 1)


def test_select_site_types():
    body = [B.f64_const(1.0), B.f64_const(2.0), B.i32_const(0), B.op("select")]
    m = validate(one_func(body, results=(F64,)))
    assert m.funcs[0].sites[3].stack_in == (I32, F64, F64)


def test_memory_site_immediates_are_offset_align_memidx():
    m = one_func([B.i32_const(0), B.mem("i64.load", offset=12)], results=(I64,))
    m.memories.append(Limits(1))
    m = validate(m)
    site = m.funcs[0].sites[1]
    assert site.immediates[0] == 12 and site.immediates[2] == 0


def test_sites_in_pc_order_everywhere():
    for name in PROGRAMS:
        for f in fixture(name).funcs:
            assert [s.pc for s in f.sites] == list(range(len(f.body)))


@pytest.mark.parametrize("name", PROGRAMS + ("cache_walk", "trap_div", "trap_oob"))
def test_site_types_match_execution(name):
    m = fixture(name)
    sites = {(s.fid, s.pc): s for s in m.all_sites()}
    events = trace_of(m).trace
    assert events
    for ev in events:
        assert sites[(ev.fid, ev.pc)].stack_in[:len(ev.types)] == ev.types
        assert len(ev.types) <= len(sites[(ev.fid, ev.pc)].stack_in)


def test_fixture_dir_has_sources():
    assert {p.stem for p in (FIXTURES / "src").glob("*.wat")} >= set(PROGRAMS)
