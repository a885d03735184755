"""Compile the bundled C libraries in src/whamm/lib/src to wasm32 with clang.

The .wasm outputs are checked in; rerun this after editing a library source.
"""

import pathlib
import subprocess
import sys

LIB = pathlib.Path(__file__).resolve().parent.parent / "src" / "whamm" / "lib"
FLAGS = [
    "--target=wasm32", "-O2", "-mcpu=mvp", "-nostdlib", "-fno-builtin",
    "-Wl,--no-entry", "-Wl,--export=__heap_base", "-Wl,--allow-undefined",
    "-Wl,-z,stack-size=8192",
]


def build(name: str):
    src = LIB / "src" / f"{name}.c"
    subprocess.run(["clang", *FLAGS, "-o", str(LIB / f"{name}.wasm"), str(src)], check=True)
    print("built", name)


def main(argv):
    names = argv or sorted(p.stem for p in (LIB / "src").glob("*.c"))
    for n in names:
        build(n)


if __name__ == "__main__":
    main(sys.argv[1:])
