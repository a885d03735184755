"""Random predicates paired with an independent Python oracle.

Static atoms each read one bit of ``pc`` or ``fid``; setting both to a mask
therefore drives every static atom independently, so enumerating all masks
enumerates every static truth assignment.  Dynamic atoms compare the two
i32 operands of ``i32.add`` (``arg0`` and ``arg1``).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable


def s32(v: int) -> int:
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v & 0x80000000 else v


@dataclass
class Gen:
    text: str
    fn: Callable[[dict], bool]
    n_static: int
    n_dynamic: int


def _static_atom(rng: random.Random, bit: int):
    b = 1 << bit
    var = rng.choice(("pc", "fid"))
    form = rng.randrange(4)
    if form == 0:
        return f"({var} & {b}) != 0", lambda e: (e[var] & b) != 0
    if form == 1:
        return f"({var} & {b}) == 0", lambda e: (e[var] & b) == 0
    if form == 2:
        return f"({var} & {b}) > 0", lambda e: (e[var] & b) > 0
    return f"!(({var} & {b}) == 0)", lambda e: not ((e[var] & b) == 0)


def _dynamic_atom(rng: random.Random):
    c = rng.randint(-6, 6)
    form = rng.randrange(6)
    if form == 0:
        return f"arg0 > {c}", lambda e: e["arg0"] > c
    if form == 1:
        return f"arg1 == {c}", lambda e: e["arg1"] == c
    if form == 2:
        return f"arg0 + arg1 < {c}", lambda e: s32(e["arg0"] + e["arg1"]) < c
    if form == 3:
        return f"arg0 - {c} != arg1", lambda e: s32(e["arg0"] - c) != e["arg1"]
    if form == 4:
        return f"(arg1 & 3) == {c & 3}", lambda e: (e["arg1"] & 3) == (c & 3)
    # a dynamic comparison against a static value
    return "arg0 >= pc as i32", lambda e: e["arg0"] >= s32(e["pc"])


def _combine(rng: random.Random, leaves: list):
    while len(leaves) > 1:
        i = rng.randrange(len(leaves) - 1)
        (lt, lf), (rt, rf) = leaves[i], leaves[i + 1]
        kind = rng.randrange(5)
        if kind < 2:
            node = (f"({lt} && {rt})", lambda e, lf=lf, rf=rf: lf(e) and rf(e))
        elif kind < 4:
            node = (f"({lt} || {rt})", lambda e, lf=lf, rf=rf: lf(e) or rf(e))
        else:
            node = (f"(!({lt}) || {rt})", lambda e, lf=lf, rf=rf: (not lf(e)) or rf(e))
        leaves[i:i + 2] = [node]
    return leaves[0]


def generate(rng: random.Random, max_static: int = 4, max_dynamic: int = 4) -> Gen:
    n_s = rng.randint(0, max_static)
    n_d = rng.randint(0 if n_s else 1, max_dynamic)
    leaves = [_static_atom(rng, bit) for bit in range(n_s)]
    leaves += [_dynamic_atom(rng) for _ in range(n_d)]
    if leaves and rng.random() < 0.3:
        leaves.append(rng.choice(leaves))  # a repeated atom
    rng.shuffle(leaves)
    text, fn = _combine(rng, leaves)
    return Gen(text, fn, n_s, n_d)


def dynamic_samples(rng: random.Random, n: int = 64) -> list[dict]:
    return [{"arg0": rng.randint(-8, 8), "arg1": rng.randint(-8, 8)} for _ in range(n)]
