import pytest

from whamm.errors import TooManyStaticAtoms
from whamm.lang import ast as A
from whamm.lang import parse_script, print_expr, typecheck
from whamm.opt import evaluate, fold, is_literal, split_predicate, static_atoms


def pred(text, event="i32.add", bounds=""):
    ts = typecheck(parse_script(f"wasm:opcode:{event}{bounds}:before / {text} / {{ }}"))
    return ts.directives[0].predicate


def lit(e):
    assert is_literal(e), print_expr(e)
    return e.value


def test_fold_fid_equality():
    e = pred("fid == 53")
    assert lit(fold(e, {"fid": 53})) is True
    assert lit(fold(e, {"fid": 7})) is False


def test_fold_identities():
    assert lit(fold(pred("(pc + 0) * 1 < 10"), {"pc": 4})) is True
    e = fold(pred("arg0 == 1 && true"))
    assert print_expr(e) == "arg0 == 1"
    e = fold(pred("arg0 == 1 || false"))
    assert print_expr(e) == "arg0 == 1"
    e = fold(pred("(arg0 + 0) * 1 == 2"))
    assert print_expr(e) == "arg0 == 2"


def test_fold_constant_division_by_zero_is_flagged():
    e = fold(pred("(arg0 / 0) == 1"))
    assert any(isinstance(n, A.AlwaysTrap) for n in _walk(e))


def _walk(e):
    yield e
    for f in ("operand", "left", "right", "cond", "then", "orelse"):
        c = getattr(e, f, None)
        if isinstance(c, A.Expr):
            yield from _walk(c)


def test_split_or():
    s = split_predicate(pred("pc == 3 || arg0 == 5"))
    assert len(s.atoms) == 1
    assert lit(s.residuals[(True,)]) is True
    assert print_expr(s.residuals[(False,)]) == "arg0 == 5"


def test_split_purely_static():
    s = split_predicate(pred("pc == 3 && fid != 1"))
    assert s.fully_static
    assert all(is_literal(r) for r in s.residuals.values())


def test_split_and_rows_against_direct_evaluation():
    e = pred("fid == 53 && arg0 == 3", "call", "(arg0: i32)")
    s = split_predicate(e)
    assert print_expr(s.residuals[(True,)]) == "arg0 == 3"
    assert lit(s.residuals[(False,)]) is False
    for fid in (53, 7):
        for a in range(-4, 8):
            want = evaluate(e, {"fid": fid, "arg0": a})
            got = evaluate(s.residual_for({"fid": fid}), {"arg0": a})
            assert got == want


def test_rows_with_equal_residuals_merge():
    s = split_predicate(pred("(pc == 1 || pc == 2) || arg0 == 0"))
    assert len(s.groups) <= 2


def test_static_atoms_are_maximal():
    atoms = static_atoms(pred("(pc == 1 && fid == 2) || arg0 == 4"))
    assert len(atoms) == 1 and print_expr(atoms[0]) == "pc == 1 && fid == 2"


def test_too_many_static_atoms():
    big = " || ".join(f"(arg0 == {i} && pc == {i})" for i in range(17))
    with pytest.raises(TooManyStaticAtoms):
        split_predicate(pred(big))


def test_trapping_static_subtree_is_not_an_atom():
    e = pred("fid == 1 || ((pc as i32) / 0) == 2")
    split = split_predicate(e)
    assert [print_expr(a) for a in split.atoms] == ["fid == 1"]
    assert lit(split.residual_for({"pc": 3, "fid": 1})) is True
