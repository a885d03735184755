"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import collections
import random
import time

import pytest

from conftest import (
    PROGRAMS,
    TRAPPING,
    fixture,
    monitor_report,
    rewrite_report,
    sorted_rows,
    trace_of,
)
from predgen import dynamic_samples, generate
from whamm import match as M
from whamm.corpus import MONITORS, monitor_path, monitor_source
from whamm.engine import run
from whamm.engine.monitor import attach_monitor, run_monitored
from whamm.lang import ast as A
from whamm.lang import parse_script, print_expr, typecheck
from whamm.monitor import CallRef, MatchBinding, encode_export_name, parse_export_name, EXIT_BINDING
from whamm.opt import evaluate, is_literal, split_predicate
from whamm.pipeline import check_script, monitor_text
from whamm.rewrite import instrument, match_sites
from whamm.wasm import decode_module, encode_module


@pytest.fixture
def verdict(capsys):
    def emit(n: int, title: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}"
                  + (f" ({detail})" if detail else ""))
        assert ok, detail
    return emit


# 1 ---------------------------------------------------------------------------


def test_cross_target_equivalence(verdict):
    start = time.perf_counter()
    mismatches, rows = [], 0
    for mon in MONITORS:
        text = monitor_source(mon)
        for prog in PROGRAMS:
            app = fixture(prog)
            a = rewrite_report(app, text)
            b = monitor_report(app, text)
            assert a.trap is None and b.trap is None
            if sorted_rows(a.report) != sorted_rows(b.report):
                mismatches.append(f"{mon}/{prog}")
            rows += len(sorted_rows(a.report))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 60 and rows > 0
    verdict(1, "cross-target CSV equality, 6 monitors x 6 programs", ok,
            f"{rows} rows, {elapsed:.1f}s, mismatches={mismatches}")


# 2 ---------------------------------------------------------------------------


def _app_state(values, trap, memories, n_mem):
    return values, (trap.kind if trap else None), memories[:n_mem]


def test_non_intrusiveness(verdict):
    start = time.perf_counter()
    empty_rewrite = "wasm:opcode:*:before|after { }"
    empty_monitor = monitor_text("wasm:opcode:*:before { }")
    progs = PROGRAMS + TRAPPING + ("cache_walk", "three_calls")
    diffs = []
    for prog in progs:
        app = fixture(prog)
        n = len(app.memories)
        base = run(app)
        want = _app_state(base.values, base.trap, base.memories, n)
        ts, libs = check_script(empty_rewrite)
        inst = instrument(app, ts, libs)
        assert sum(len(f.body) for f in inst.funcs) > sum(len(f.body) for f in app.funcs)
        r = run(inst)
        if _app_state(r.values, r.trap, r.memories, n) != want:
            diffs.append(f"rewrite/{prog}")
        m = run_monitored(app, [empty_monitor])
        if _app_state(m.values, m.trap, m.memories, n) != want:
            diffs.append(f"monitor/{prog}")
        if base.trap and m.trap and (m.trap.fid, m.trap.pc) != (base.trap.fid, base.trap.pc):
            diffs.append(f"monitor-trap-site/{prog}")
    elapsed = time.perf_counter() - start
    verdict(2, "results, traps and memory identical across plain/rewrite/monitor",
            not diffs and elapsed < 30, f"{len(progs)} programs, {elapsed:.1f}s, diffs={diffs}")


# 3 ---------------------------------------------------------------------------


def test_oracle_counts(verdict):
    bad = []
    for prog in PROGRAMS + ("cache_walk", "three_calls"):
        app = fixture(prog)
        counts = collections.Counter((e.fid, e.pc) for e in trace_of(app).trace)
        total = sum(counts.values())
        for target, runner in (("rewrite", rewrite_report), ("monitor", monitor_report)):
            hot = runner(app, monitor_source("hotness")).report
            per_site = {(int(r.split(",")[2]), int(r.split(",")[3])): int(r.split(",")[6])
                        for r in sorted_rows(hot)}
            nonzero = {k: v for k, v in per_site.items() if v}
            if nonzero != dict(counts):
                bad.append(f"hotness/{target}/{prog}")
            ic = runner(app, monitor_source("icount")).report
            if [int(r.split(",")[6]) for r in sorted_rows(ic)] != [total]:
                bad.append(f"icount/{target}/{prog}")
    verdict(3, "hotness per-site and icount totals equal the trace oracle", not bad,
            f"mismatches={bad}")


# 4 ---------------------------------------------------------------------------


def _predicate(text):
    ts = typecheck(parse_script(f"wasm:opcode:i32.add:before / {text} / {{ }}"))
    return ts.directives[0].predicate


def _forced(e, atoms, row):
    """Map ids of every occurrence of each atom to its forced truth value."""
    out = {}

    def visit(node):
        for atom, bit in zip(atoms, row):
            if node == atom:
                out[id(node)] = bit
                return
        for f in ("operand", "left", "right", "cond", "then", "orelse"):
            c = getattr(node, f, None)
            if isinstance(c, A.Expr):
                visit(c)
    visit(e)
    return out


def test_predicate_splitting_soundness(verdict):
    start = time.perf_counter()
    rng = random.Random(20240601)
    checks = failures = 0
    for _ in range(1000):
        g = generate(rng)
        e = _predicate(g.text)
        split = split_predicate(e)
        samples = dynamic_samples(rng)
        # every static truth assignment, via bit masks, against the Python oracle
        for mask in range(1 << g.n_static):
            env = {"pc": mask, "fid": mask}
            residual = split.residual_for(env)
            if any(M.is_static(n) for n in M.collect_params([residual])):
                failures += 1
            for d in samples:
                checks += 1
                failures += bool(evaluate(residual, d)) != g.fn({**env, **d})
        # every truth-table row, with the atoms forced in the original
        for row, residual in split.residuals.items():
            forced = _forced(e, split.atoms, row)
            for d in samples[:8]:
                env = {"pc": 0, "fid": 0, **d}
                checks += 1
                failures += bool(evaluate(e, env, forced)) != bool(evaluate(residual, env))
    s = split_predicate(_predicate("pc == 3 || arg0 == 5"))
    or_case = (is_literal(s.residuals[(True,)]) and s.residuals[(True,)].value is True
               and print_expr(s.residuals[(False,)]) == "arg0 == 5")
    elapsed = time.perf_counter() - start
    verdict(4, "split residuals agree with the original on 1000 random predicates",
            failures == 0 and or_case and elapsed < 10,
            f"{checks} checks, {failures} failures, A||B ok={or_case}, {elapsed:.1f}s")


# 5 ---------------------------------------------------------------------------


def _save_restore_counts(body, site_index, n_locals):
    """(saved, restored) operand counts of the probe spliced before ``site_index``."""
    j = site_index - 1
    restored = 0
    while body[j].op == "local.get" and body[j].imm[0] >= n_locals:
        restored += 1
        j -= 1
    assert body[j].op == "end"
    depth = 0
    while True:
        op = body[j].op
        if op == "end":
            depth += 1
        elif op in ("block", "loop", "if"):
            depth -= 1
            if depth == 0:
                break
        j -= 1
    saved = 0
    j -= 1
    while body[j].op == "local.set" and body[j].imm[0] >= n_locals:
        saved += 1
        j -= 1
    return saved, restored


def _operand_case(prog, opcode, n, bound):
    app = fixture(prog)
    text = (f"report var s: i64; wasm:opcode:{opcode}{bound}:before "
            f"{{ s = s + arg{n} as i64; }}")
    ts, libs = check_script(text)
    out = decode_module(encode_module(instrument(app, ts, libs)))
    sites = [s for s in app.all_sites() if s.opcode == opcode]
    counts = []
    for site in sites:
        f_in = app.func(site.fid)
        # the runtime adds imports; map by position among defined functions
        f_out = out.funcs[app.funcs.index(f_in)]
        idx = [k for k, ins in enumerate(f_out.body) if ins.op == opcode]
        nth = [s.pc for s in f_in.sites if s.opcode == opcode].index(site.pc)
        counts.append(_save_restore_counts(f_out.body, idx[nth], len(f_in.local_types)))
    base = run(app)
    got = rewrite_report(app, text)
    want = sum(e.values[n] for e in trace_of(app).trace if e.opcode == opcode)
    value = int(got.rows[0]["value"])
    stack_ok = got.values == base.values and got.trap is None
    return counts, value == want and stack_ok


def test_operand_save_rule(verdict):
    details, ok = [], True
    cases = [("switch", "select", 0, ""), ("switch", "select", 1, "(arg1: i32)"),
             ("switch", "select", 2, "(arg2: i32)"), ("memops", "i32.store8", 0, ""),
             ("memops", "i32.store8", 1, "")]
    for prog, opcode, n, bound in cases:
        counts, diff_ok = _operand_case(prog, opcode, n, bound)
        exact = counts and all(c == (n + 1, n + 1) for c in counts)
        ok = ok and exact and diff_ok
        details.append(f"{opcode}/arg{n}: saves={sorted(set(c[0] for c in counts))}")
    verdict(5, "probes save exactly N+1 operands and restore the stack", ok, "; ".join(details))


# 6 ---------------------------------------------------------------------------

FRAME_OPCODES = """
report var seen: map<u32, u32>;
frame var mine: u32;
wasm:opcode:i32.le_s(local0: i32):before / fid == 0 / { mine = local0 as u32; }
wasm:opcode:end:before / fid == 0 && pc == 13 / { seen[mine]++; }
"""

FRAME_FUNCS = """
report var seen: map<u32, u32>;
frame var mine: u32;
wasm:func:func0(local0: i32):entry { mine = local0 as u32; }
wasm:func:func0:exit { seen[mine]++; }
"""


def test_storage_class_semantics(verdict):
    app = fixture("three_calls")
    k = sum(1 for e in trace_of(app).trace if e.opcode == "call")
    checks = {}
    for target, runner in (("rewrite", rewrite_report), ("monitor", monitor_report)):
        un = runner(app, "wasm:opcode:call:before { report unshared var c: u32; c++; }")
        per_site = [int(r.split(",")[6]) for r in sorted_rows(un.report)]
        checks[f"unshared/{target}"] = len(per_site) == 3 and sum(per_site) == k
        sh = runner(app, "wasm:opcode:call:before { report shared var c: u32; c++; }")
        checks[f"shared/{target}"] = [int(r.split(",")[6]) for r in sorted_rows(sh.report)] == [k]
    # fact(5): activations n = 5..1, each must see its own value at exit
    hand = {str(n): "1" for n in range(1, 6)}
    rec = fixture("recursion")
    for target, runner, text in (("rewrite", rewrite_report, FRAME_OPCODES),
                                 ("rewrite-func", rewrite_report, FRAME_FUNCS),
                                 ("monitor", monitor_report, FRAME_OPCODES)):
        rows = [r.split(",") for r in sorted_rows(runner(rec, text).report)]
        checks[f"frame/{target}"] = {r[4]: r[6] for r in rows} == hand
    verdict(6, "unshared sums to k, shared equals k, frame is per activation",
            all(checks.values()), f"k={k}, failed={[c for c, v in checks.items() if not v]}")


# 7 ---------------------------------------------------------------------------


class ReferenceLRU:
    def __init__(self, sets: int, ways: int, line: int):
        self.sets, self.ways, self.line = sets, ways, line
        self.lines = [collections.OrderedDict() for _ in range(sets)]
        self.hits = self.misses = 0

    def access(self, addr: int):
        block = addr // self.line
        s = self.lines[block % self.sets]
        tag = block // self.sets
        if tag in s:
            s.move_to_end(tag)
            self.hits += 1
            return
        self.misses += 1
        if len(s) == self.ways:
            s.popitem(last=False)
        s[tag] = True


def _address_stream(app):
    sites = {(s.fid, s.pc): s for s in app.all_sites()}
    for e in trace_of(app).trace:
        if M.is_memory_access(e.opcode):
            a = 0 if M.is_load(e.opcode) else 1
            yield (e.values[a] + sites[(e.fid, e.pc)].immediates[0]) & 0xFFFFFFFF


def test_cache_sim_matches_reference(verdict):
    text = monitor_source("cache_sim")
    results = {}
    ok = True
    for prog in ("cache_walk", "memops", "sort"):
        app = fixture(prog)
        ref = ReferenceLRU(64, 4, 64)
        for addr in _address_stream(app):
            ref.access(addr)
        want = {"hits": ref.hits, "misses": ref.misses}
        for target, runner in (("rewrite", rewrite_report), ("monitor", monitor_report)):
            rows = [r.split(",") for r in sorted_rows(runner(app, text).report)]
            got = {r[0]: int(r[6]) for r in rows}
            ok = ok and got == want
        results[prog] = want
    verdict(7, "cache_sim hits/misses equal a reference LRU over the traced addresses",
            ok and results["cache_walk"]["hits"] > 0, f"{results}")


# 8 ---------------------------------------------------------------------------

_IDS = ("alloc", "p", "pred0", "cb_1", "lib.fn", "_x", "Z9")


def _random_call(rng, depth=0):
    params = []
    for _ in range(rng.randint(0, 3)):
        if depth < 2 and rng.random() < 0.2:
            params.append(_random_call(rng, depth + 1))
        else:
            params.append(rng.choice(("pc", "fid", f"imm{rng.randint(0, 2)}")))
    return CallRef(rng.choice(_IDS), tuple(params) if params or rng.random() < 0.5 else None)


def _random_binding(rng):
    if rng.random() < 0.05:
        return EXIT_BINDING
    op = rng.choice(M.ALL_OPCODES)
    pred = _random_call(rng) if rng.random() < 0.4 else None
    params = None
    if rng.random() < 0.8:
        params = []
        for _ in range(rng.randint(0, 5)):
            kind = rng.randrange(5)
            if kind == 0:
                params.append(f"arg{rng.randint(0, 11)}")
            elif kind == 1:
                params.append(f"local{rng.randint(0, 30)}")
            elif kind == 2:
                params.append(rng.choice(("pc", "fid", "frame", f"imm{rng.randint(0, 2)}")))
            else:
                params.append(_random_call(rng))
        params = tuple(params)
    return MatchBinding("opcode", op, pred, params)


def test_export_name_abi(verdict):
    rng = random.Random(8)
    bindings = [_random_binding(rng) for _ in range(500)]
    round_trips = sum(parse_export_name(encode_export_name(b)) == b for b in bindings)
    exit_ok = parse_export_name("wasm:exit") == EXIT_BINDING
    br_if_ok = parse_export_name("wasm:opcode:br_if(arg0,pc)") == \
        MatchBinding("opcode", "br_if", None, ("arg0", "pc"))
    verdict(8, "export names round trip and documented names parse",
            round_trips == 500 and exit_ok and br_if_ok,
            f"{round_trips}/500 round trips, wasm:exit={exit_ok}, br_if={br_if_ok}")


# 9 ---------------------------------------------------------------------------


def _lines(name):
    return sum(1 for ln in monitor_path(name).read_text().splitlines() if ln.strip())


def test_script_conciseness(verdict):
    hot, cache = _lines("hotness"), _lines("cache_sim")
    verdict(9, "hotness.mm <= 4 and cache_sim.mm <= 13 non-empty lines",
            hot <= 4 and cache <= 13, f"hotness={hot}, cache_sim={cache}")


# 10 --------------------------------------------------------------------------


def test_wildcard_matching(verdict):
    text = "report var n: u32; wasm:opcode:*load*|*store*:before { n++; }"
    ts, _ = check_script(text)
    mon = monitor_text(text)
    bad = []
    for prog in ("memops", "sort", "cache_walk"):
        app = fixture(prog)
        brute = {(s.fid, s.pc) for s in app.all_sites()
                 if "load" in s.opcode or "store" in s.opcode}
        rewrite = {(p.fid, p.pc) for p in match_sites(app, ts)}
        engine = {(a.site.fid, a.site.pc)
                  for a in attach_monitor(app, mon).monitors[0].attachments}
        if not brute or rewrite != brute or engine != brute:
            bad.append(prog)
    verdict(10, "*load*|*store* matches exactly the enumerated load/store sites", not bad,
            f"mismatches={bad}")
