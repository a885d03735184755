"""Hypothesis properties of the printer, folder, splitter, export names and probes."""

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from conftest import PROGRAMS, fixture, monitor_report, rewrite_report
from predgen import s32
from whamm import match as M
from whamm.engine import HostFunc, run
from whamm.errors import ParseError
from whamm.lang import parse_script, print_script, typecheck
from whamm.monitor import CallRef, MatchBinding, encode_export_name, parse_export_name
from whamm.opt import DslTrap, evaluate, fold, split_predicate
from whamm.pipeline import check_script
from whamm.rewrite import instrument
from whamm.wasm.types import I32, FuncType

SLOW = settings(max_examples=40, deadline=None,
                suppress_health_check=[HealthCheck.too_slow])

# i32 expressions over the operands of i32.add and the site coordinates
_leaf = st.one_of(
    st.integers(-20, 20).map(str),
    st.sampled_from(["arg0", "arg1", "pc as i32", "fid as i32"]),
)


def _grow(inner):
    binop = st.sampled_from(["+", "-", "*", "&", "|", "^", "/", "%"])
    return st.one_of(
        st.tuples(inner, binop, inner).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(inner, st.sampled_from(["<", "==", ">="]), inner, inner, inner).map(
            lambda t: f"(({t[0]} {t[1]} {t[2]}) ? {t[3]} : {t[4]})"),
    )


int_exprs = st.recursive(_leaf, _grow, max_leaves=10)
bool_exprs = st.tuples(int_exprs, st.sampled_from(["==", "!=", "<", ">="]), int_exprs).map(
    lambda t: f"({t[0]} {t[1]} {t[2]})")
envs = st.fixed_dictionaries({
    "arg0": st.integers(-2**31, 2**31 - 1), "arg1": st.integers(-50, 50),
    "pc": st.integers(0, 40), "fid": st.integers(0, 5),
})


def _pred(text):
    ts = typecheck(parse_script(f"wasm:opcode:i32.add:before / {text} / {{ }}"))
    return ts.directives[0].predicate


def _outcome(e, env):
    try:
        return evaluate(e, env)
    except DslTrap as t:
        return ("trap", str(t))


# printer ---------------------------------------------------------------------

_rules = st.sampled_from([
    "wasm:opcode:call:before", "wasm:opcode:br*:after", "wasm:opcode:*load*|*store*:before",
    "wasm:opcode:i32.add:alt", "wasm:func:main:entry", "wasm:opcode:select(arg1: i32):before",
])
_decls = st.sampled_from([
    "report var hits: u64;", "var seen: map<u32, u32>;", "frame var d: i32;",
    "report shared var n: u32;", "unshared var c: u32;", "var f: f64;",
])
_stmts = st.one_of(
    int_exprs.map(lambda e: f"x = {e};"),
    st.sampled_from(["c++;", "n--;", "seen[pc]++;", "f = 1.5;"]),
    st.tuples(bool_exprs, int_exprs).map(lambda t: f"if ({t[0]}) {{ x = {t[1]}; }} else {{ c++; }}"),
)


@st.composite
def scripts(draw):
    lines = draw(st.lists(_decls, max_size=3))
    for _ in range(draw(st.integers(0, 3))):
        pred = draw(st.one_of(st.none(), bool_exprs))
        head = draw(_rules) + (f" / {pred} /" if pred else "")
        body = " ".join(draw(st.lists(_stmts, max_size=4)))
        lines.append(f"{head} {{ {body} }}")
    return "\n".join(lines)


@given(scripts())
@SLOW
def test_print_then_parse_is_identity(text):
    s = parse_script(text)
    printed = print_script(s)
    assert parse_script(printed) == s
    assert print_script(parse_script(printed)) == printed


@given(scripts(), st.data())
@SLOW
def test_truncated_bodies_report_a_position(text, data):
    assume("{" in text)
    cut = data.draw(st.integers(text.index("{") + 1, len(text) - 1))
    broken = text[:cut].rstrip("} \n")
    with pytest.raises(ParseError) as err:
        parse_script(broken)
    assert err.value.line >= 1 and err.value.col >= 1


# folding and splitting -------------------------------------------------------


@given(bool_exprs, envs)
@settings(max_examples=200, deadline=None)
def test_fold_is_idempotent_and_preserves_meaning(text, env):
    e = _pred(text)
    once = fold(e)
    assert fold(once) == once
    assert _outcome(once, env) == _outcome(e, env)
    static = {"pc": env["pc"], "fid": env["fid"]}
    assert _outcome(fold(e, static), env) == _outcome(e, env)


@given(bool_exprs, bool_exprs, st.lists(envs, min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_split_residual_agrees_at_every_site(a, b, samples):
    e = _pred(f"(((pc & 1) == 0) && {a}) || ({b} && fid > 2)")
    split = split_predicate(e)
    for env in samples:
        residual = split.residual_for({"pc": env["pc"], "fid": env["fid"]})
        assert _outcome(residual, env) == _outcome(e, env)


# export names ----------------------------------------------------------------

_ids = st.from_regex(r"[A-Za-z_][A-Za-z0-9_.]{0,8}", fullmatch=True)
_simple = st.one_of(
    st.sampled_from(["pc", "fid", "frame"]),
    st.integers(0, 20).map(lambda n: f"arg{n}"),
    st.integers(0, 20).map(lambda n: f"local{n}"),
    st.integers(0, 3).map(lambda n: f"imm{n}"),
)
_calls = st.recursive(
    st.builds(CallRef, _ids, st.one_of(st.none(), st.lists(_simple, max_size=3).map(tuple))),
    lambda inner: st.builds(CallRef, _ids, st.lists(st.one_of(_simple, inner), max_size=3).map(tuple)),
    max_leaves=4,
)
bindings = st.builds(
    MatchBinding, st.just("opcode"), st.sampled_from(M.ALL_OPCODES),
    st.one_of(st.none(), _calls),
    st.one_of(st.none(), st.lists(st.one_of(_simple, _calls), max_size=4).map(tuple)),
)


@given(bindings)
@settings(max_examples=300, deadline=None)
def test_export_names_round_trip(b):
    assert parse_export_name(encode_export_name(b)) == b


# neutral probes --------------------------------------------------------------


@st.composite
def neutral_probes(draw):
    prog = draw(st.sampled_from(PROGRAMS))
    ops = sorted({s.opcode for s in fixture(prog).all_sites()})
    chosen = draw(st.lists(st.sampled_from(ops), min_size=1, max_size=3, unique=True))
    mode = draw(st.sampled_from(["before", "after"]))
    return prog, "|".join(chosen), mode


@given(neutral_probes())
@SLOW
def test_neutral_probes_leave_the_program_alone(case):
    prog, pattern, mode = case
    app = fixture(prog)
    n = len(app.memories)
    base = run(app)
    text = (f"report shared var total: u64;\n"
            f"wasm:opcode:{pattern}:{mode} {{ report unshared var c: u32; c++; "
            f"total = total + (pc as u64); }}")
    ts, libs = check_script(text)
    sink = {("whamm", "whamm_report"): HostFunc(FuncType((I32, I32), ()), lambda *a: None)}
    inst = run(instrument(app, ts, libs), imports=sink)
    assert (inst.values, inst.trap, inst.memories[:n]) == (base.values, base.trap, base.memories)
    got = rewrite_report(app, text)
    if mode == "before":
        mon = monitor_report(app, text)
        assert (mon.values, mon.memories) == (base.values, base.memories)
        assert sorted(mon.report.splitlines()) == sorted(got.report.splitlines())


def test_s32_helper_wraps():
    assert s32(2**31) == -2**31 and s32(-1) == -1
