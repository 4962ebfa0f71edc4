import math

import numpy as np
import pytest

from regsyn import expr
from regsyn.expr import (Bin, Call, Const, EvalError, Neg, Num, SyntaxError_,
                         Var, compile_fn, evaluate, free_vars, parse, to_string)


def test_precedence_values():
    env = {}
    assert evaluate(parse("2+3*4"), env) == 14
    assert evaluate(parse("2^3^2"), env) == 512  # right-associative
    assert evaluate(parse("-2^2"), env) == -4    # ^ binds tighter than unary -
    assert evaluate(parse("(-2)^2"), env) == 4
    assert evaluate(parse("6/3/2"), env) == 1    # left-associative
    assert evaluate(parse("2*3^2"), env) == 18
    assert evaluate(parse("2 - 3 - 4"), env) == -5
    assert evaluate(parse("--3"), env) == 3


def test_parse_structures():
    assert parse("-(x1)*sin(x2)") == Bin("*", Neg(Var("x1")), Call("sin", Var("x2")))
    assert parse("-w1^3") == Neg(Bin("^", Var("w1"), Num(3.0)))
    assert parse("pi") == Const("pi")
    assert parse("1e-3") == Num(1e-3)
    assert parse("x1*(w1+u)") == Bin("*", Var("x1"), Bin("+", Var("w1"), Var("u")))


def test_constants_and_functions():
    assert evaluate(parse("cos(pi)"), {}) == pytest.approx(-1.0)
    assert evaluate(parse("sqrt(abs(-9))"), {}) == pytest.approx(3.0)
    assert evaluate(parse("exp(0) + tan(0)"), {}) == pytest.approx(1.0)


def test_syntax_errors_carry_offsets():
    with pytest.raises(SyntaxError_):
        parse("2+")
    with pytest.raises(SyntaxError_):
        parse("")
    with pytest.raises(SyntaxError_):
        parse("foo(2)")
    with pytest.raises(SyntaxError_):
        parse("(1+2")
    with pytest.raises(SyntaxError_):
        parse("1 2")
    err = None
    try:
        parse("1+$")
    except SyntaxError_ as e:
        err = e
    assert err is not None and err.offset == 2


def test_eval_errors():
    with pytest.raises(EvalError):
        evaluate(parse("x1"), {})
    with pytest.raises(EvalError):
        evaluate(parse("sqrt(0-1)"), {})
    with pytest.raises(EvalError):
        evaluate(parse("1/0"), {})
    with pytest.raises(EvalError):
        evaluate(parse("(0-2)^0.5"), {})


def test_free_vars():
    assert free_vars(parse("x1 + sin(w2)*u - pi")) == {"x1", "w2", "u"}
    assert free_vars(parse("1 + 2")) == set()


_VARS = ("x1", "x2", "w1")


def _random_ast(rng, depth):
    if depth == 0 or rng.random() < 0.25:
        kind = rng.integers(0, 3)
        if kind == 0:
            # nonnegative literals only: "-3.9" parses as Neg(Num(3.9)), so a
            # negative Num would not round-trip structurally
            return Num(float(np.round(rng.uniform(0, 4), 3)))
        if kind == 1:
            return Var(_VARS[rng.integers(0, len(_VARS))])
        return Const("pi")
    kind = rng.integers(0, 3)
    if kind == 0:
        op = "+-*/^"[rng.integers(0, 5)]
        if op == "^":
            # keep powers tame and domain-safe
            return Bin("^", Call("abs", _random_ast(rng, depth - 1)),
                       Num(float(rng.integers(0, 4))))
        return Bin(op, _random_ast(rng, depth - 1), _random_ast(rng, depth - 1))
    if kind == 1:
        return Neg(_random_ast(rng, depth - 1))
    func = ("sin", "cos", "tan", "exp", "abs")[rng.integers(0, 5)]
    return Call(func, _random_ast(rng, depth - 1))


def test_round_trip_random_asts():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        e = _random_ast(rng, int(rng.integers(1, 7)))
        text = to_string(e)
        assert parse(text) == e, text


def test_print_eval_equivalence_random():
    rng = np.random.default_rng(7)
    fn_cache = {}
    for _ in range(300):
        e = _random_ast(rng, int(rng.integers(1, 6)))
        reparsed = parse(to_string(e))
        fn = compile_fn(e, _VARS)
        for _ in range(10):
            env = {v: float(np.round(rng.uniform(-2, 2), 3)) for v in _VARS}
            try:
                ref = evaluate(e, env)
            except EvalError:
                with pytest.raises(EvalError):
                    evaluate(reparsed, env)
                continue
            assert evaluate(reparsed, env) == ref
            assert fn(*(env[v] for v in _VARS)) == ref


def test_compile_fn_vector():
    exprs = [parse("x1 + x2"), parse("x1 * w1")]
    f = compile_fn(exprs, _VARS)
    assert f(1.0, 2.0, 3.0) == (3.0, 3.0)
    g = compile_fn(parse("x1 - w1"), _VARS)
    assert g(5.0, 0.0, 2.0) == 3.0
