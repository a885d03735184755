import pytest

from conftest import FIXTURES, hand_monitor, sorted_rows
from whamm.cli import EXIT_LINK, EXIT_MONITOR, EXIT_OK, EXIT_SCRIPT, EXIT_TRAP, main
from whamm.corpus import monitor_path
from whamm.wasm import build as B
from whamm.wasm import decode_module, encode_module, load


def app(name):
    return str(FIXTURES / f"{name}.wasm")


@pytest.fixture
def script(tmp_path):
    def write(text, name="s.mm"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def test_instrument_hotness_validates(tmp_path, capsys):
    out = tmp_path / "o.wasm"
    rc = main(["instrument", "--app", app("fib"), "--script", str(monitor_path("hotness")),
               "-o", str(out)])
    assert rc == EXIT_OK
    load(out.read_bytes())


def test_parse_error_reports_position(script, capsys):
    rc = main(["instrument", "--app", app("fib"), "--script",
               script("wasm:opcode:call:before {\n  x = ;\n}")])
    err = capsys.readouterr().err
    assert rc == EXIT_SCRIPT
    assert "s.mm:2:" in err


def test_missing_library_export(script, capsys):
    rc = main(["emit-monitor", "--script",
               script("use cache;\nwasm:opcode:call:before { cache.nope(); }"), "-o", "-"])
    assert rc == EXIT_LINK
    assert "nope" in capsys.readouterr().err


def test_emit_shared_counter(script, tmp_path):
    out = tmp_path / "m.wasm"
    rc = main(["emit-monitor", "--script",
               script("wasm:opcode:call:before { report shared var n: u32; n++; }"), "-o", str(out)])
    assert rc == EXIT_OK
    m = decode_module(out.read_bytes())
    assert sorted(k for k, (kind, _) in m.exports.items() if kind == "func") == \
        ["wasm:exit", "wasm:opcode:call()"]


def test_alt_mode_is_rejected_for_monitors(script, capsys):
    rc = main(["emit-monitor", "--script", script("wasm:opcode:call:alt { }"), "-o", "-"])
    assert rc == EXIT_SCRIPT
    assert "alt" in capsys.readouterr().err


def test_empty_script_monitor(script, tmp_path):
    out = tmp_path / "m.wasm"
    assert main(["emit-monitor", "--script", script(""), "-o", str(out)]) == EXIT_OK
    m = decode_module(out.read_bytes())
    assert set(m.exports) <= {"wasm:exit"}


def test_both_report_paths_agree(tmp_path, capsys):
    hot = str(monitor_path("hotness"))
    inst, mon = tmp_path / "i.wasm", tmp_path / "m.wasm"
    assert main(["instrument", "--app", app("switch"), "--script", hot, "-o", str(inst)]) == 0
    assert main(["emit-monitor", "--script", hot, "-o", str(mon)]) == 0
    capsys.readouterr()
    assert main(["run", "--app", str(inst)]) == EXIT_OK
    rewritten = capsys.readouterr().out
    rep = tmp_path / "r.csv"
    assert main(["run", "--app", app("switch"), "--monitor", str(mon), "--report", str(rep)]) == 0
    assert sorted_rows(rewritten) == sorted_rows(rep.read_text())
    assert len(sorted_rows(rewritten)) > 10


def test_run_result_and_trap(capsys):
    assert main(["run", "--app", app("fib")]) == EXIT_OK
    assert "result: 55" in capsys.readouterr().err
    assert main(["run", "--app", app("trap_div")]) == EXIT_TRAP
    assert "div-by-zero" in capsys.readouterr().err


def test_monitor_trap_exit_code(tmp_path, capsys):
    mon = hand_monitor({"wasm:opcode:call()": ((), [B.op("unreachable")])}, log_arity=None)
    p = tmp_path / "bad.wasm"
    p.write_bytes(encode_module(mon))
    assert main(["run", "--app", app("fib"), "--monitor", str(p)]) == EXIT_MONITOR


def test_bad_binary_is_link_error(tmp_path, capsys):
    p = tmp_path / "junk.wasm"
    p.write_bytes(b"not wasm")
    assert main(["run", "--app", str(p)]) == EXIT_LINK


def test_trace_flag(capsys):
    assert main(["run", "--app", app("answer"), "--trace"]) == EXIT_OK
    assert "trace 0:0 i32.const" in capsys.readouterr().err


def test_info_listings(capsys):
    assert main(["info", "wasm:opcode:call"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("target_fn_name", "arg0", "pc", "fid", "imm0"):
        assert name in out
    assert main(["info", "wasm:opcode:i32.load"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("addr", "effective_addr", "trap"):
        assert name in out
    assert main(["info", "wasi:opcode"]) == EXIT_SCRIPT
    assert "wasm" in capsys.readouterr().err


def test_instrument_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        p = tmp_path / f"o{k}.wasm"
        main(["instrument", "--app", app("cache_walk"), "--script",
              str(monitor_path("cache_sim")), "-o", str(p)])
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
