"""Show how a predicate is split into match-time and run-time parts.

    python demos/predicate_split.py "pc == 3 || arg0 == 5"
"""

import argparse

from whamm.lang import parse_script, print_expr, typecheck
from whamm.opt import split_predicate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("predicate", nargs="?", default="(fid == 1 && pc > 4) || arg0 == 5")
    ap.add_argument("--event", default="i32.add")
    a = ap.parse_args()

    ts = typecheck(parse_script(f"wasm:opcode:{a.event}:before / {a.predicate} / {{ }}"))
    split = split_predicate(ts.directives[0].predicate)
    print("static atoms:", [print_expr(x) for x in split.atoms] or "none")
    for residual, rows in split.groups:
        cond = split.condition(rows) if split.atoms else None
        where = print_expr(cond) if cond is not None else "every site"
        print(f"  where {where}: check {print_expr(residual)}")


if __name__ == "__main__":
    main()
