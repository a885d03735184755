"""Assemble tests/fixtures/src/*.wat into tests/fixtures/*.wasm with WABT.

Also writes the deliberately invalid invalid_*.wasm modules and, with
``--verdicts``, prints WABT's accept/reject verdict for every fixture (the
values frozen in tests/test_wasm_core.py).

Run ``npm install`` inside tools/ first.  The generated binaries are checked
in, so the test suite never needs node.
"""

import pathlib
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
WABT_BIN = ROOT / "tools" / "node_modules" / "wabt" / "bin"
WAT2WASM = WABT_BIN / "wat2wasm"
VALIDATE = WABT_BIN / "wasm-validate"


def assemble(src: pathlib.Path, dst: pathlib.Path, extra=()):
    cmd = ["node", str(WAT2WASM), "--enable-multi-memory", *extra, str(src), "-o", str(dst)]
    subprocess.run(cmd, check=True)


def invalid_modules() -> dict:
    sys.path.insert(0, str(ROOT / "src"))
    from whamm.wasm import build as B
    from whamm.wasm.types import FuncType, FunctionIR, ModuleIR

    def one(body):
        ft = FuncType((), ("i32",))
        f = FunctionIR(0, 0, ft, [], list(body) + [B.op("end")])
        return ModuleIR(types=[ft], funcs=[f], exports={"main": ("func", 0)})

    return {
        "invalid_type": one([B.i64_const(1), B.op("i32.eqz")]),
        "invalid_underflow": one([B.op("i32.add")]),
        "invalid_local": one([B.local_get(3)]),
        "invalid_call": one([B.call(5)]),
    }


def wabt_accepts(path: pathlib.Path) -> bool:
    # the node build of wasm-validate exits 0 even on errors; read stderr instead
    r = subprocess.run(["node", str(VALIDATE), "--enable-multi-memory", str(path)],
                       capture_output=True, text=True)
    return "error:" not in r.stderr


def main(argv):
    if "--verdicts" in argv:
        for p in sorted((ROOT / "tests" / "fixtures").glob("*.wasm")):
            print(p.stem, "valid" if wabt_accepts(p) else "invalid")
        return
    invalid = invalid_modules()
    from whamm.wasm import encode_module

    for name, m in invalid.items():
        (ROOT / "tests" / "fixtures" / f"{name}.wasm").write_bytes(encode_module(m))
    jobs = [(ROOT / "tests" / "fixtures" / "src", ROOT / "tests" / "fixtures")]
    jobs.append((ROOT / "src" / "whamm" / "lib", ROOT / "src" / "whamm" / "lib"))
    for src_dir, out_dir in jobs:
        for src in sorted(src_dir.glob("*.wat")):
            assemble(src, out_dir / (src.stem + ".wasm"))
            print("assembled", src.relative_to(ROOT))


if __name__ == "__main__":
    main(sys.argv[1:])
