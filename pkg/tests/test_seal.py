import pytest

from conftest import fixture
from whamm.engine import HostFunc, Instance, run
from whamm.errors import DuplicateAlternate, TargetNotFound, Trap, ValidationFailed
from whamm.seal import Decorator, Seal, add_local, apply, attach
from whamm.wasm import build as B
from whamm.wasm import decode_module, encode_module, validate
from whamm.wasm.types import I32, I64, FuncType, FunctionIR, Global, ModuleIR


def module(funcs, exports=None):
    """funcs: list of (params, results, locals, body)."""
    m = ModuleIR()
    for i, (params, results, locals_, body) in enumerate(funcs):
        ft = FuncType(tuple(params), tuple(results))
        m.funcs.append(FunctionIR(i, m.add_type(ft), ft, list(locals_), list(body) + [B.op("end")]))
    m.exports = exports or {"main": ("func", len(funcs) - 1)}
    return validate(m)


def three_adds():
    probe = ((), (), (), [])
    body = [B.i32_const(1), B.i32_const(2), B.op("i32.add"), B.i32_const(3), B.op("i32.add"),
            B.i32_const(4), B.op("i32.add")]
    return module([probe, ((), (I32,), (), body)])


def two_returns():
    body = [
        B.local_get(0), B.op("if", None), B.i32_const(1), B.op("return"), B.op("end"),
        B.local_get(0), B.op("i32.eqz"), B.op("if", None), B.i32_const(2), B.op("return"),
        B.op("end"),
        B.i32_const(3),
    ]
    return module([((I32,), (I32,), (), body)])


def test_before_nop_prepends():
    m = module([((), (I32,), (), [B.i32_const(7)])])
    out = apply(attach(Seal(m), Decorator((0, 0), "before", (B.op("nop"),))))
    assert [i.op for i in out.funcs[0].body] == ["nop", "i32.const", "end"]


def test_empty_decorator_set_is_identity():
    m = fixture("sort")
    assert encode_module(apply(Seal(m))) == encode_module(m)


def test_duplicate_alternate():
    s = Seal(module([((), (I32,), (), [B.i32_const(7)])]))
    s.attach(Decorator((0, 0), "alternate", (B.i32_const(1),)))
    with pytest.raises(DuplicateAlternate):
        s.attach(Decorator((0, 0), "alternate", (B.i32_const(2),)))


def test_missing_targets():
    s = Seal(module([((), (I32,), (), [B.i32_const(7)])]))
    with pytest.raises(TargetNotFound):
        s.attach(Decorator((0, 9), "before", ()))
    with pytest.raises(TargetNotFound):
        s.attach(Decorator(4, "entry", ()))
    with pytest.raises(TargetNotFound):
        s.add_local(4, I32)


def test_after_unreachable_rejected():
    s = Seal(module([((), (), (), [B.op("unreachable")])]))
    with pytest.raises(ValueError):
        s.attach(Decorator((0, 0), "after", ()))


def test_exit_injects_at_every_return_and_final_end():
    m = two_returns()
    exits = sum(1 for i in m.funcs[0].body if i.op == "return") + 1
    out = apply(attach(Seal(m), Decorator(0, "exit", (B.op("nop"),))))
    assert sum(1 for i in out.funcs[0].body if i.op == "nop") == exits == 3
    for arg, want in ((5, 1), (0, 2)):
        assert run(out, "main", [arg]).values == [want]


def test_exit_counter_sees_every_return_but_not_traps():
    m = two_returns()
    s = Seal(m)
    g = s.add_global(Global(I32, True, [B.i32_const(0)]))
    bump = (B.op("global.get", g), B.i32_const(1), B.op("i32.add"), B.op("global.set", g))
    s.attach(Decorator(0, "exit", bump))
    s.add_export("hits", "global", g)
    out = s.apply()
    inst = Instance(out)
    for a in (3, 0, 3):
        inst.invoke("main", [a])
    assert inst.globals[g] == 3

    trapper = module([((), (), (), [B.op("unreachable")])])
    s = Seal(trapper)
    g = s.add_global(Global(I32, True, [B.i32_const(0)]))
    s.attach(Decorator(0, "exit", (B.i32_const(1), B.op("global.set", g))))
    inst = Instance(s.apply())
    with pytest.raises(Trap):
        inst.invoke("main")
    assert inst.globals[g] == 0


def test_add_local_indices():
    m = module([((I32, I32), (), (I64,), [])])
    s = Seal(m)
    a = add_local(s, 0, I64)
    b = add_local(s, 0, I32)
    assert (a.index, b.index) == (3, 4)
    again = decode_module(encode_module(s.apply()))
    assert again.funcs[0].locals == [I64, I64, I32]


def test_before_call_at_each_add():
    m = three_adds()
    s = Seal(m)
    for site in m.funcs[1].sites:
        if site.opcode == "i32.add":
            s.attach(Decorator(site, "before", (B.call(0),)))
    out = decode_module(encode_module(s.apply()))
    ops = [i.op for i in out.funcs[1].body]
    assert ops.count("call") == 3 and ops.count("i32.add") == 3
    assert run(out).values == [10]


def test_alternate_replaces_instruction():
    m = module([((), (I32,), (), [B.i32_const(7)])])
    assert run(m).values == [7]
    out = apply(attach(Seal(m), Decorator((0, 0), "alternate", (B.i32_const(42),))))
    assert run(out).values == [42]


def test_unbalanced_injection_fails_validation():
    m = module([((), (I32,), (), [B.i32_const(7)])])
    with pytest.raises(ValidationFailed):
        apply(attach(Seal(m), Decorator((0, 0), "before", (B.i32_const(1),))))


def test_orders_compose_and_apply_is_deterministic():
    m = module([((), (I32,), (), [B.i32_const(7)])])

    def build(order_a, order_b):
        s = Seal(m)
        s.attach(Decorator((0, 0), "before", (B.op("nop"),), order=order_a))
        s.attach(Decorator((0, 0), "before", (B.i32_const(5), B.op("drop")), order=order_b))
        return encode_module(s.apply())

    first = build(0, 1)
    assert first == build(0, 1)
    ops = [i.op for i in decode_module(first).funcs[0].body]
    assert ops[:3] == ["nop", "i32.const", "drop"]
    ops = [i.op for i in decode_module(build(1, 0)).funcs[0].body]
    assert ops[:3] == ["i32.const", "drop", "nop"]


def test_import_insertion_keeps_indices_stable():
    m = fixture("indirect")
    names_before = {m.func_name(i) for i in range(m.num_funcs)}
    base = run(m).values
    s = Seal(m)
    s.add_import_func("env", "probe", FuncType((), ()))
    out = s.apply()
    assert out.num_funcs == m.num_funcs + 1
    assert out.exports["main"][1] == m.exports["main"][1] + 1
    assert len(names_before) == m.num_funcs
    r = run(out, imports={("env", "probe"): HostFunc(FuncType(), lambda: None)})
    assert r.values == base
