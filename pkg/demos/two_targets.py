"""Run one script through both backends and show the reports agree.

    python demos/two_targets.py [fixture] [monitor]
"""

import argparse
import pathlib

from whamm.corpus import MONITORS, monitor_source
from whamm.engine.monitor import run_monitored
from whamm.monitor import emit_monitor
from whamm.pipeline import check_script
from whamm.report import run_instrumented
from whamm.rewrite import instrument
from whamm.wasm import load

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("fixture", nargs="?", default="fib")
    ap.add_argument("monitor", nargs="?", default="hotness", choices=MONITORS)
    a = ap.parse_args()

    app = load((FIXTURES / f"{a.fixture}.wasm").read_bytes())
    ts, libs = check_script(monitor_source(a.monitor))

    rewritten = instrument(app, ts, libs)
    before = sum(len(f.body) for f in app.funcs)
    after = sum(len(f.body) for f in rewritten.funcs)
    out_r = run_instrumented(rewritten)
    out_m = run_monitored(app, [emit_monitor(ts, libs)])

    print(f"{a.fixture}: {before} instructions, {after} in the rewritten module (runtime included)")
    print(f"result {out_r.values} (rewrite) vs {out_m.values} (monitor)")
    print(out_r.report, end="")
    same = sorted(out_r.report.splitlines()) == sorted(out_m.report.splitlines())
    print(f"reports identical after sorting: {same}")


if __name__ == "__main__":
    main()
