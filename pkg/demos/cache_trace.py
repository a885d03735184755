"""Simulate a cache over a program's loads and stores, from the CLI.

    python demos/cache_trace.py [fixture]
"""

import argparse
import pathlib
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def whamm(*args):
    return subprocess.run([sys.executable, "-m", "whamm", *args], capture_output=True, text=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("fixture", nargs="?", default="cache_walk")
    a = ap.parse_args()
    app = ROOT / "tests" / "fixtures" / f"{a.fixture}.wasm"
    script = ROOT / "src" / "whamm" / "monitors" / "cache_sim.mm"

    with tempfile.TemporaryDirectory() as d:
        mon = pathlib.Path(d) / "cache.monitor.wasm"
        r = whamm("emit-monitor", "--script", str(script), "-o", str(mon))
        if r.returncode:
            sys.exit(r.stderr)
        r = whamm("run", "--app", str(app), "--monitor", str(mon))
        print(r.stdout, end="")
        print(r.stderr, end="", file=sys.stderr)


if __name__ == "__main__":
    main()
