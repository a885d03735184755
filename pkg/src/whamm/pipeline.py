"""Convenience entry points chaining the front end and the two targets."""

from __future__ import annotations

import pathlib
from typing import Iterable, Optional

from .lang import parse_script, typecheck
from .lang import ast as A
from .lang.typecheck import TypedScript
from .link import bundled, bundled_names
from .errors import LinkError
from .monitor import emit_monitor
from .rewrite import instrument
from .wasm import load
from .wasm.types import ModuleIR


def resolve_lib(spec: str) -> tuple[str, ModuleIR]:
    """``name=path.wasm``, ``path.wasm`` (named after the file) or a bundled name."""
    if "=" in spec:
        name, path = spec.split("=", 1)
        return name, load(pathlib.Path(path).read_bytes())
    p = pathlib.Path(spec)
    if p.suffix == ".wasm" or p.exists():
        return p.stem, load(p.read_bytes())
    if spec in bundled_names():
        return spec, bundled(spec)
    raise LinkError(f"library {spec!r} is neither a file nor a bundled library "
                    f"({', '.join(bundled_names())})")


def resolve_libs(specs: Iterable[str], uses: Iterable[str] = ()) -> dict:
    """Explicit libraries plus bundled ones named by ``use`` and not given."""
    libs = dict(resolve_lib(s) for s in specs)
    for u in uses:
        if u not in libs and u in bundled_names():
            libs[u] = bundled(u)
    return libs


def merge_scripts(scripts: Iterable[A.Script]) -> A.Script:
    out = A.Script()
    for s in scripts:
        out.uses += s.uses
        out.globals += s.globals
        out.directives += s.directives
    return out


def check_script(text: str, libs: Optional[dict] = None, lib_specs: Iterable[str] = ()
                 ) -> tuple[TypedScript, dict]:
    """Parse and check ``text``; returns the typed script and the libraries used."""
    ast = parse_script(text)
    return check_ast(ast, libs, lib_specs)


def check_ast(ast: A.Script, libs: Optional[dict] = None, lib_specs: Iterable[str] = ()
              ) -> tuple[TypedScript, dict]:
    all_libs = resolve_libs(lib_specs, [u.name for u in ast.uses])
    all_libs.update(libs or {})
    return typecheck(ast, libs=all_libs), all_libs


def instrument_text(app: ModuleIR, text: str, libs: Optional[dict] = None,
                    entry: Optional[str] = None) -> ModuleIR:
    ts, all_libs = check_script(text, libs)
    return instrument(app, ts, all_libs, entry)


def monitor_text(text: str, libs: Optional[dict] = None) -> ModuleIR:
    ts, all_libs = check_script(text, libs)
    return emit_monitor(ts, all_libs)
