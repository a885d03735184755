"""Command-line interface.

Exit codes: 0 ok, 1 application trap, 2 parse/type error, 3 link or
validation error, 4 monitor trap.
"""

from __future__ import annotations

import argparse
import pathlib
import sys
from typing import Optional

from . import match as M
from .engine.interp import TraceEvent
from .engine.monitor import attach_monitor
from .errors import (
    CheckError,
    LinkError,
    MalformedProbeName,
    MonitorTrap,
    ParseError,
    TargetNotFound,
    Trap,
    TooManyStaticAtoms,
    UnsupportedForEngineTarget,
    ValidationFailed,
)
from .lang import parse_script
from .monitor import emit_monitor
from .pipeline import check_ast, merge_scripts
from .report import HEADER, REPORT_IMPORT, ReportSink, needs_report_import
from .rewrite import DEFAULT_ENTRIES, instrument
from .wasm import WasmError, encode_module, load
from .wasm.types import F32, F64, ModuleIR

EXIT_OK, EXIT_TRAP, EXIT_SCRIPT, EXIT_LINK, EXIT_MONITOR = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _read_scripts(paths: list[str]):
    asts = []
    for p in paths:
        text = pathlib.Path(p).read_text(encoding="utf-8")
        try:
            asts.append(parse_script(text))
        except ParseError as e:
            raise CliError(EXIT_SCRIPT, f"{p}:{e}") from None
    return asts


def _check(paths: list[str], libs: list[str]):
    asts = _read_scripts(paths)
    try:
        return check_ast(merge_scripts(asts), lib_specs=libs)
    except (CheckError, TooManyStaticAtoms) as e:
        where = paths[0] if len(paths) == 1 else ",".join(paths)
        raise CliError(EXIT_SCRIPT, f"{where}:{e}") from None


def _load_wasm(path: str) -> ModuleIR:
    try:
        return load(pathlib.Path(path).read_bytes())
    except WasmError as e:
        raise CliError(EXIT_LINK, f"{path}: {e}") from None


def _write(path: Optional[str], data: bytes):
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
    else:
        pathlib.Path(path).write_bytes(data)


def _entry(m: ModuleIR, entry: Optional[str]) -> str:
    if entry is not None:
        return entry
    for name in DEFAULT_ENTRIES:
        if m.exports.get(name, ("", 0))[0] == "func":
            return name
    raise CliError(EXIT_LINK, "no entry export found (tried _start, main); use --entry")


# commands ---------------------------------------------------------------------


def cmd_instrument(a) -> int:
    app = _load_wasm(a.app)
    ts, libs = _check(a.script, a.lib)
    out = instrument(app, ts, libs, a.entry)
    _write(a.output, encode_module(out))
    return EXIT_OK


def cmd_emit_monitor(a) -> int:
    ts, libs = _check(a.script, a.lib)
    try:
        mon = emit_monitor(ts, libs)
    except UnsupportedForEngineTarget as e:
        raise CliError(EXIT_SCRIPT, str(e)) from None
    _write(a.output, encode_module(mon))
    return EXIT_OK


def _parse_arg(text: str, ty: str):
    return float(text) if ty in (F32, F64) else int(text, 0)


def cmd_run(a) -> int:
    app = _load_wasm(a.app)
    monitors = [_load_wasm(p) for p in a.monitor]
    entry = _entry(app, a.entry)
    try:
        sig = app.func_type(app.export_func(entry))
    except KeyError:
        raise CliError(EXIT_LINK, f"entry export {entry!r} not found") from None
    if len(a.args) != len(sig.params):
        raise CliError(EXIT_LINK, f"{entry} expects {len(sig.params)} arguments")
    args = [_parse_arg(x, t) for x, t in zip(a.args, sig.params)]

    sink = ReportSink()
    imports = {REPORT_IMPORT: sink.host_func()} if needs_report_import(app) else {}
    pi = attach_monitor(app, imports=imports)
    sink.bind(pi.instance)
    for mon in monitors:
        pi.attach(mon)
    if a.trace:
        pi.instance.tracer = _print_trace
    report = []
    code = EXIT_OK
    try:
        values = pi.run(entry, args)
        print("result:", " ".join(str(v) for v in values), file=sys.stderr)
        if sink.rows:
            report.append(sink.text())
        if monitors:
            report.append(pi.on_exit())
    except Trap as t:
        print(f"trap: {t.kind} (func {t.fid}, pc {t.pc}); report skipped", file=sys.stderr)
        code = EXIT_TRAP
    text = "".join(report)
    if code == EXIT_OK and not text:
        text = HEADER + "\n"
    if code == EXIT_OK:
        if a.report in (None, "-"):
            sys.stdout.write(text)
        else:
            pathlib.Path(a.report).write_text(text, encoding="utf-8")
    return code


def _print_trace(ev: TraceEvent):
    vals = ",".join(str(v) for v in ev.values)
    print(f"trace {ev.fid}:{ev.pc} {ev.opcode} [{vals}]", file=sys.stderr)


def cmd_info(a) -> int:
    parts = a.rule.split(":")
    provider = parts[0] if parts else ""
    if not M.expand(provider, M.PROVIDERS):
        raise CliError(EXIT_SCRIPT, f"unknown provider {provider!r}; valid providers: "
                       + ", ".join(M.PROVIDERS))
    package = parts[1] if len(parts) > 1 else "*"
    packages = M.expand(package, M.PACKAGES)
    if not packages:
        raise CliError(EXIT_SCRIPT, f"unknown package {package!r}; valid packages: "
                       + ", ".join(M.PACKAGES))
    event = parts[2] if len(parts) > 2 else "*"
    if "func" in packages:
        print("wasm:func:* (modes: entry, exit)")
        print("  fid        u32   static   function index")
        print("  localN     bound dynamic  function locals (type bound required)")
    if "opcode" in packages:
        opcodes = M.expand(event, M.ALL_OPCODES)
        if not opcodes:
            raise CliError(EXIT_SCRIPT, f"event {event!r} matches no opcode")
        for op in opcodes:
            print(f"wasm:opcode:{op} (modes: {', '.join(m for m in M.OPCODE_MODES if M.mode_applies(m, op))})")
            for bv in M.catalog(op):
                kind = "static" if bv.static else "dynamic"
                print(f"  {bv.name:<15}{bv.ty or 'bound':<6}{kind}")
    return EXIT_OK


# entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="whamm", description="Whamm instrumentation toolchain")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, app=True, script=True):
        if app:
            sp.add_argument("--app", required=True, help="application module (.wasm)")
        if script:
            sp.add_argument("--script", required=True, action="append",
                            help="script file (.mm); repeatable")
            sp.add_argument("--lib", action="append", default=[],
                            help="library: NAME=PATH, PATH or a bundled name; repeatable")

    sp = sub.add_parser("instrument", help="rewrite an application with a script")
    common(sp)
    sp.add_argument("--entry", help="export whose return flushes the report")
    sp.add_argument("-o", "--output", help="output module (default: stdout)")
    sp.set_defaults(fn=cmd_instrument)

    sp = sub.add_parser("emit-monitor", help="compile a script into a monitor module")
    common(sp, app=False)
    sp.add_argument("-o", "--output", help="output module (default: stdout)")
    sp.set_defaults(fn=cmd_emit_monitor)

    sp = sub.add_parser("run", help="run an application, optionally with monitors")
    common(sp, script=False)
    sp.add_argument("--monitor", action="append", default=[], help="monitor module; repeatable")
    sp.add_argument("--entry", help="export to call (default: _start, then main)")
    sp.add_argument("--report", help="report destination (default: stdout)")
    sp.add_argument("--trace", action="store_true", help="print every executed instruction")
    sp.add_argument("args", nargs="*", help="arguments for the entry function")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("info", help="list the variables in scope for a match rule")
    sp.add_argument("rule", help="rule prefix, e.g. wasm:opcode:call")
    sp.set_defaults(fn=cmd_info)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return a.fn(a)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (LinkError, ValidationFailed, WasmError, MalformedProbeName, TargetNotFound) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LINK
    except (CheckError, UnsupportedForEngineTarget) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCRIPT
    except MonitorTrap as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MONITOR


if __name__ == "__main__":
    sys.exit(main())
