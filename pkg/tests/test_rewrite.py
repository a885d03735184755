import pytest

from conftest import PROGRAMS, fixture, rewrite_report, sorted_rows, trace_of
from whamm.errors import LinkError
from whamm.engine import run
from whamm.pipeline import check_script
from whamm.report import HEADER, parse_report, run_instrumented
from whamm.rewrite import REPORT_MEMORY_EXPORT, instrument, match_sites
from whamm.wasm import decode_module, encode_module, load

UNSHARED = "wasm:opcode:call:before { report unshared var count: u32; count++; }"
SHARED = "wasm:opcode:call:before { report shared var count: u32; count++; }"


def build(app, text, entry="main"):
    ts, libs = check_script(text)
    return instrument(app, ts, libs, entry)


def test_empty_script_leaves_module_untouched():
    app = fixture("sort")
    assert encode_module(build(app, "")) == encode_module(app)


def test_unshared_counter_gets_one_slot_per_site():
    app = fixture("three_calls")
    ts, _ = check_script(UNSHARED)
    assert len(match_sites(app, ts)) == 3
    out = rewrite_report(app, UNSHARED)
    rows = out.rows
    assert len(rows) == 3
    assert len({(r["fid"], r["pc"]) for r in rows}) == 3
    assert sorted(int(r["value"]) for r in rows) == [4, 5, 10]


def test_shared_counter_is_a_single_row():
    out = rewrite_report(fixture("three_calls"), SHARED)
    assert [(r["storage"], r["fid"], r["pc"], r["value"]) for r in out.rows] == \
        [("shared", "-1", "-1", "19")]


def test_flush_row_format():
    text = "report var count: u32; wasm:opcode:call:before / fid == 1 && pc < 8 / { count++; }"
    app = fixture("three_calls")
    # oracle: executed calls in function 1 below pc 8
    want = sum(1 for e in trace_of(app).trace if e.opcode == "call" and e.fid == 1 and e.pc < 8)
    report = rewrite_report(app, text).report
    assert report.splitlines() == [HEADER, f"count,global,-1,-1,,u32,{want}"]


def test_map_rows_sorted_by_key():
    text = """
        report var seen: map<u32, u32>;
        wasm:opcode:call:before / pc > 0 / { seen[0]++; seen[0]++; seen[3]++; }
    """
    out = rewrite_report(fixture("answer"), text)
    assert out.report == HEADER + "\n"
    app = fixture("fib")
    calls = sum(1 for e in trace_of(app).trace if e.opcode == "call")
    rows = rewrite_report(app, text).rows
    assert [(r["key"], r["value"]) for r in rows] == [("0", str(2 * calls)), ("3", str(calls))]


def test_no_report_vars_gives_header_only():
    out = rewrite_report(fixture("fib"), "wasm:opcode:call:before { var x: u32 = 1; x++; }")
    assert out.report == HEADER + "\n"


def test_output_validates_and_exports_report_memory():
    out = build(fixture("memops"), UNSHARED)
    again = load(encode_module(out))
    assert REPORT_MEMORY_EXPORT in again.exports


@pytest.mark.parametrize("name", PROGRAMS)
def test_placements_match_brute_force(name):
    app = fixture(name)
    text = "wasm:opcode:*load*|*store*|call*|br_if:before / pc % 2 == 0 / { }"
    ts, _ = check_script(text)
    got = {(p.fid, p.pc) for p in match_sites(app, ts)}
    want = {(s.fid, s.pc) for s in app.all_sites()
            if s.pc % 2 == 0 and (("load" in s.opcode) or ("store" in s.opcode)
                                  or s.opcode.startswith("call") or s.opcode == "br_if")}
    assert got == want


def test_alt_replaces_division():
    app = fixture("trap_div")
    assert run(app).trap.kind == "div-by-zero"
    text = "wasm:opcode:i32.div_u:alt / arg0 == 0 / { return 0; }"
    r = run(build(app, text))
    assert r.trap is None


def test_alt_else_branch_runs_original():
    app = fixture("fib")
    text = "wasm:opcode:i32.add:alt / pc > 100000 / { return 0; }"
    assert run(build(app, text)).values == run(app).values


def test_after_mode_sees_result_stack_unchanged():
    app = fixture("memops")
    text = "report var n: u64; wasm:opcode:i64.load*:after { n++; }"
    out = rewrite_report(app, text)
    loads = sum(1 for e in trace_of(app).trace if e.opcode.startswith("i64.load"))
    assert out.values == run(app).values
    assert out.rows[0]["value"] == str(loads)


def test_function_entry_and_exit():
    app = fixture("recursion")
    text = """
        report var entries: u32;
        report var exits: u32;
        wasm:func:func0:entry { entries++; }
        wasm:func:func0:exit { exits++; }
    """
    rows = {r["name"]: r["value"] for r in rewrite_report(app, text).rows}
    assert rows == {"entries": "5", "exits": "5"}


def test_trap_skips_flush():
    out = rewrite_report(fixture("trap_oob"), "report var n: u32; wasm:opcode:*:before { n++; }")
    assert out.trap is not None and out.trap.kind == "out-of-bounds"
    assert out.report == HEADER + "\n"


def test_missing_library_export_is_link_error():
    with pytest.raises(LinkError):
        check_script("use cache; wasm:opcode:call:before { cache.nope(); }")


def test_missing_entry_is_link_error():
    app = fixture("fib")
    app.exports = {"go": app.exports["main"]}
    with pytest.raises(LinkError):
        build(app, "report var n: u32; wasm:opcode:call:before { n++; }", entry=None)
    out = build(app, "report var n: u32; wasm:opcode:call:before { n++; }", entry="go")
    assert parse_report(run_instrumented(out, "go").report)[0]["value"] == "1"


def test_instrumentation_is_deterministic():
    app = fixture("switch")
    a = encode_module(build(app, UNSHARED))
    b = encode_module(build(app, UNSHARED))
    assert a == b
    assert decode_module(a).num_funcs > app.num_funcs


def test_bundled_cache_library_links():
    app = fixture("cache_walk")
    from whamm.corpus import monitor_source

    out = rewrite_report(app, monitor_source("cache_sim"))
    names = sorted(r["name"] for r in out.rows)
    assert names == ["hits", "misses"]
    assert sum(int(r["value"]) for r in out.rows) == sum(
        1 for e in trace_of(app).trace if "load" in e.opcode or "store" in e.opcode)
    assert sorted_rows(out.report)
