"""Scalar math expressions: parsing, printing, evaluation and compilation.

Expressions define plants, exosystems, controllers and regulator solutions
from plain text.  Grammar (highest precedence first):

    ^ (right-assoc)  >  unary -  >  * /  >  + -

so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.  Supported functions
are sin, cos, tan, exp, sqrt and abs; ``pi`` is a built-in constant.  All
AST nodes are immutable, so parsed expressions can be shared freely between
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ExprError(Exception):
    """Base class for expression errors."""


class SyntaxError_(ExprError):
    """Malformed expression text; carries the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ExprError):
    """Unbound variable or a domain error during evaluation."""


FUNCTIONS = ("sin", "cos", "tan", "exp", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str  # only "pi"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Num | Var | Const | Bin | Neg | Call


# ---------------------------------------------------------------- tokenizer

def _tokenize(text):
    tokens = []  # (kind, value, offset)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise SyntaxError_(f"bad number literal '{lit}'", i)
            tokens.append(("num", value, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
        elif c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
        else:
            raise SyntaxError_(f"unexpected character '{c}'", i)
    tokens.append(("end", None, n))
    return tokens


# ------------------------------------------------------------------ parser

class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise SyntaxError_(f"expected '{kind}', got '{tok[1]}'", tok[2])
        self.pos += 1
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise SyntaxError_(f"trailing input '{tok[1]}'", tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            e = Bin(op, e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            e = Bin(op, e, self.factor())
        return e

    def factor(self):
        # unary minus binds looser than ^, tighter than * /
        if self.peek()[0] == "-":
            self.take()
            return Neg(self.factor())
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return Bin("^", base, self.factor())
        return base

    def atom(self):
        kind, value, offset = self.peek()
        if kind == "num":
            self.take()
            return Num(value)
        if kind == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if kind == "ident":
            self.take()
            if self.peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise SyntaxError_(f"unknown function '{value}'", offset)
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(value, arg)
            if value == "pi":
                return Const("pi")
            return Var(value)
        raise SyntaxError_(f"unexpected token '{value}'", offset)


def parse(text):
    """Parse expression text into an AST."""
    if not text or not text.strip():
        raise SyntaxError_("empty expression", 0)
    return _Parser(text).parse()


# ----------------------------------------------------------------- printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _print(e, parent_prec, right_side):
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_print(e.arg, 0, False)})"
    if isinstance(e, Neg):
        s = "-" + _print(e.arg, _PREC["neg"], True)
        # parenthesize when a parent binds tighter, or when we appear as the
        # right operand of a left-assoc operator of the same precedence
        if parent_prec > _PREC["neg"] or (parent_prec == _PREC["neg"] and right_side):
            return f"({s})"
        return s
    prec = _PREC[e.op]
    if e.op == "^":
        # right-assoc: left child needs parens at equal precedence
        ls = _print(e.left, prec + 1, False)
        rs = _print(e.right, prec, True)
    else:
        ls = _print(e.left, prec, False)
        rs = _print(e.right, prec + 1, True)
    s = f"{ls} {e.op} {rs}" if e.op in "+-" else f"{ls}{e.op}{rs}"
    if parent_prec > prec or (parent_prec == prec and right_side):
        return f"({s})"
    return s


def to_string(e):
    """Pretty-print an AST; parse(to_string(e)) is structurally equal to e."""
    return _print(e, 0, False)


# --------------------------------------------------------------- evaluator

def _pow(a, b):
    if a < 0 and b != int(b):
        raise EvalError(f"fractional power of negative base ({a})^({b})")
    try:
        return a ** b
    except OverflowError as exc:
        raise EvalError(str(exc)) from exc


def _sqrt(a):
    if a < 0:
        raise EvalError(f"sqrt of negative value {a}")
    return math.sqrt(a)


def _div(a, b):
    if b == 0:
        raise EvalError("division by zero")
    return a / b


_FUNC_IMPL = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "sqrt": _sqrt,
    "abs": abs,
}


def evaluate(e, env):
    """Evaluate e with variables bound by env (name -> float)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable '{e.name}'") from None
    if isinstance(e, Const):
        return math.pi
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Call):
        try:
            return _FUNC_IMPL[e.func](evaluate(e.arg, env))
        except (ValueError, OverflowError) as exc:
            raise EvalError(str(exc)) from exc
    a = evaluate(e.left, env)
    b = evaluate(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return _div(a, b)
    return _pow(a, b)


def free_vars(e):
    """Set of variable names appearing in e."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Bin):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, (Neg, Call)):
        arg = e.arg
        return free_vars(arg)
    return set()


# ---------------------------------------------------------------- compiler

def _codegen(e, argmap):
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        try:
            return argmap[e.name]
        except KeyError:
            raise EvalError(f"unbound variable '{e.name}'") from None
    if isinstance(e, Const):
        return "_pi"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, argmap)})"
    if isinstance(e, Call):
        return f"_f_{e.func}({_codegen(e.arg, argmap)})"
    a = _codegen(e.left, argmap)
    b = _codegen(e.right, argmap)
    if e.op == "^":
        return f"_pow({a}, {b})"
    if e.op == "/":
        return f"_div({a}, {b})"
    return f"({a} {e.op} {b})"


def compile_fn(exprs, var_order):
    """Compile expressions into a fast positional function.

    Returns f(v0, v1, ...) with arguments in var_order.  A single expression
    compiles to a scalar-valued function, a list to a tuple-valued one.
    Semantics match evaluate() exactly (same helper functions).
    """
    single = not isinstance(exprs, (list, tuple))
    items = [exprs] if single else list(exprs)
    argmap = {name: f"_a{i}" for i, name in enumerate(var_order)}
    args = ", ".join(argmap[name] for name in var_order)
    bodies = [_codegen(e, argmap) for e in items]
    body = bodies[0] if single else "(" + ", ".join(bodies) + ("," if len(bodies) == 1 else "") + ")"
    src = f"def _compiled({args}):\n    return {body}\n"
    ns = {"_pi": math.pi, "_pow": _pow, "_div": _div}
    for name, impl in _FUNC_IMPL.items():
        ns[f"_f_{name}"] = _wrap_domain(impl)
    exec(src, ns)
    return ns["_compiled"]


def _wrap_domain(impl):
    # evaluate() converts math domain errors to EvalError; compiled
    # functions must do the same
    def call(a, impl=impl):
        try:
            return impl(a)
        except (ValueError, OverflowError) as exc:
            raise EvalError(str(exc)) from exc
    return call
