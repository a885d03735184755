import pathlib

import pytest

from whamm.engine import HostFunc, run
from whamm.engine.monitor import run_monitored
from whamm.monitor import emit_monitor
from whamm.pipeline import check_script
from whamm.report import run_instrumented
from whamm.rewrite import instrument
from whamm.seal import Seal
from whamm.wasm import load
from whamm.wasm.types import I32, FuncType, ModuleIR

FIXTURES = pathlib.Path(__file__).resolve().parent / "fixtures"

# recursion, br_table dispatch, loads/stores and call_indirect are each covered
PROGRAMS = ("recursion", "switch", "memops", "indirect", "sort", "fib")
TRAPPING = ("trap_div", "trap_oob")


def fixture_bytes(name: str) -> bytes:
    return (FIXTURES / f"{name}.wasm").read_bytes()


def fixture(name: str):
    return load(fixture_bytes(name))


def sorted_rows(report: str) -> list[str]:
    lines = report.splitlines()
    return sorted(lines[1:])


def rewrite_report(app, text: str, entry: str = "main", args=()):
    ts, libs = check_script(text)
    out = run_instrumented(instrument(app, ts, libs, entry), entry, args)
    return out


def monitor_report(app, text: str, entry: str = "main", args=()):
    ts, libs = check_script(text)
    return run_monitored(app, [emit_monitor(ts, libs)], entry, args)


def trace_of(app, entry: str = "main", args=()):
    return run(app, entry, args, trace=True)


LOG = ("env", "log")


def hand_monitor(probes: dict, callbacks: dict = None, log_arity=0):
    """Monitor with ``name -> (param types, body)`` probe exports.

    Probes may call function 0, an ``env.log`` import taking ``log_arity``
    i32 values (no import when ``log_arity`` is None).
    """
    s = Seal(ModuleIR())
    if log_arity is not None:
        s.add_import_func(*LOG, FuncType((I32,) * log_arity, ()))
    for name, (sig, body) in (callbacks or {}).items():
        s.add_function(sig, [], body, export=name)
    for name, (params, body) in probes.items():
        s.add_function(FuncType(tuple(params), ()), [], body, export=name)
    return s.apply()


def logger(arity, out):
    return {LOG: HostFunc(FuncType((I32,) * arity, ()), lambda *a: out.append(a))}


@pytest.fixture(params=PROGRAMS)
def program(request):
    return request.param, fixture(request.param)
