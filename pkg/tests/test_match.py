import fnmatch

import pytest

from conftest import PROGRAMS, fixture
from whamm import match as M
from whamm.errors import NotDerivableHere
from whamm.lang import parse_script, typecheck
from whamm.match import MatchOutcome, MatchRule, collect_params, derive, rule_matches
from whamm.wasm import Site


def site(op, stack=(), imms=(), pc=0):
    return Site(0, pc, op, tuple(stack), tuple(imms))


def rule(text, bounds=None):
    return MatchRule.parse(text, bounds)


def glob_oracle(pattern: str, opcode: str) -> bool:
    return any(fnmatch.fnmatchcase(opcode, alt) for alt in pattern.split("|"))


def test_br_if_rule():
    assert rule_matches(rule("wasm:opcode:br_if:before"), site("br_if", ["i32"])) is MatchOutcome.MATCH


def test_load_store_wildcard():
    r = rule("wasm:opcode:*load*|*store*:before")
    assert rule_matches(r, site("i32.load8_u", ["i32"], (0, 0, 0))) is MatchOutcome.MATCH
    assert rule_matches(r, site("i32.add", ["i32", "i32"])) is MatchOutcome.NO_MATCH


def test_bound_mismatch_is_type_no_match():
    r = rule("wasm:opcode:call:before", {"arg0": "i32"})
    assert rule_matches(r, site("call", ["f64"], (1,))) is MatchOutcome.TYPE_NO_MATCH
    assert rule_matches(r, site("call", ["i32"], (1,))) is MatchOutcome.MATCH


def test_mode_applicability():
    assert rule_matches(rule("wasm:opcode:unreachable:after"), site("unreachable")) is MatchOutcome.NO_MATCH
    assert rule_matches(rule("wasm:opcode:block:alt"), site("block")) is MatchOutcome.NO_MATCH


def _directive(text):
    return typecheck(parse_script(text)).directives[0]


def test_collect_params_empty():
    td = _directive("wasm:opcode:call:before { unshared var c: u32; c++; }")
    assert collect_params([td.predicate, td.body]) == []


def test_collect_params_first_use_order():
    td = _directive("report var x: u32; wasm:opcode:br_if:before / arg0 == 3 / { x = pc; }")
    assert collect_params([td.predicate, td.body]) == ["arg0", "pc"]


def test_collect_params_dedup():
    td = _directive("report var x: u32; wasm:opcode:i32.load:before { x = addr as u32 + addr as u32; }")
    assert collect_params([td.predicate, td.body]) == ["addr"]


def test_derive_store_addresses():
    s = site("i32.store", ["i32", "i32"], (8, 2, 0))
    assert derive(s, "addr").recipe == ("arg", 1)
    assert derive(s, "effective_addr").recipe == ("addr_plus", 1, 8)
    load = site("i64.load", ["i32"], (4, 3, 0))
    assert derive(load, "addr").recipe == ("arg", 0)


def test_derive_taken_and_trap():
    assert derive(site("br_if", ["i32"], (0,)), "taken").recipe == ("ne0", 0)
    assert derive(site("br_table", ["i32"], (0,)), "taken").recipe == ("const", True)
    assert derive(site("i32.div_u", ["i32", "i32"]), "trap").recipe[0] == "div_trap"
    assert derive(site("i32.load", ["i32"], (0, 2, 0)), "trap").recipe[0] == "mem_oob"


def test_not_derivable():
    with pytest.raises(NotDerivableHere):
        derive(site("i32.add", ["i32", "i32"]), "taken")


def test_call_indirect_target_name_is_indirect():
    from whamm.rewrite import static_env

    app = fixture("indirect")
    envs = [static_env(app, s) for s in app.all_sites() if s.opcode in ("call", "call_indirect")]
    names = {e["target_fn_name"] for e in envs}
    assert "indirect" in names and any(n.startswith("func") for n in names)


PATTERNS = ["*load*|*store*", "i32.*", "*.const", "br*", "call*", "*", "local.*|global.*",
            "i64.load*", "f*.*", "*_u|*_s"]


@pytest.mark.parametrize("pattern", PATTERNS)
def test_wildcard_soundness_on_corpus(pattern):
    r = rule(f"wasm:opcode:{pattern}:before")
    for name in PROGRAMS:
        sites = fixture(name).all_sites()
        got = {(s.fid, s.pc) for s in sites if rule_matches(r, s) is MatchOutcome.MATCH}
        want = {(s.fid, s.pc) for s in sites if glob_oracle(pattern, s.opcode)}
        assert got == want


def test_bounds_never_grow_the_match_set():
    plain = rule("wasm:opcode:*:before")
    for name in PROGRAMS:
        sites = fixture(name).all_sites()
        base = {s for s in sites if rule_matches(plain, s) is MatchOutcome.MATCH}
        for ty in ("i32", "i64", "f32", "f64"):
            bounded = rule("wasm:opcode:*:before", {"arg0": ty})
            sub = {s for s in sites if rule_matches(bounded, s) is MatchOutcome.MATCH}
            assert sub <= base


def test_catalog_static_flags():
    names = {bv.name: bv.static for bv in M.catalog("call")}
    assert names["pc"] and names["fid"] and names["target_fn_name"]
    assert not names["arg0"]
    loads = {bv.name for bv in M.catalog("i32.load")}
    assert {"addr", "effective_addr", "trap"} <= loads
