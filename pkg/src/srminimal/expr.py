"""Scalar expressions over chart coordinates.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative, exponent must fold to a constant
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Functions: sin cos tan exp log sqrt atan.  Constants: pi, e (a chart coordinate with
the same name shadows the constant).

Trees are immutable and hashable; building a node goes through constant folding
(``0*e -> 0``, ``0/e -> 0``, ``e+0 -> e``, ``1*e -> e``, constant subtrees evaluated) and nothing else.
"""
from __future__ import annotations

import math
import re
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "atan")
CONSTANTS = {"pi": math.pi, "e": math.e}

# precedence used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of an operation (x/0, log of x<=0, sqrt of x<0, overflow)."""

    def __init__(self, message: str, subexpr: "Expr"):
        super().__init__(f"{message} in '{subexpr}'")
        self.subexpr = subexpr


class Expr:
    __slots__ = ("_hash",)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self._key() == other._key()

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Expr({self})"

    def __str__(self):
        return to_string(self)

    # operator sugar for building trees in code
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, _lift(exponent))


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)
        self._hash = hash(("c", self.value))

    def _key(self):
        return ("c", self.value)


class Symbol(Expr):
    __slots__ = ("name", "index")

    def __init__(self, name: str, index: int):
        self.name = name
        self.index = index
        self._hash = hash(("s", name, index))

    def _key(self):
        return ("s", self.name, self.index)


class Unary(Expr):
    """Negation ('-') or a one-argument function."""

    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        self.op = op
        self.arg = arg
        self._hash = hash(("u", op, arg._hash))

    def _key(self):
        return ("u", self.op, self.arg)


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        self.op = op
        self.left = left
        self.right = right
        self._hash = hash(("b", op, left._hash, right._hash))

    def _key(self):
        return ("b", self.op, self.left, self.right)


ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(x) -> Expr:
    return x if isinstance(x, Expr) else Const(x)


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


# ---------------------------------------------------------------------------
# folding constructors

def _fold(op: str, *vals: float) -> Const | None:
    try:
        v = _APPLY[op](*vals)
    except (ArithmeticError, ValueError):
        return None
    if isinstance(v, complex) or not math.isfinite(v):
        return None
    return Const(v)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("+", a.value, b.value) or Binary("+", a, b)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return b
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("-", a.value, b.value) or Binary("-", a, b)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("*", a.value, b.value) or Binary("*", a, b)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("/", a.value, b.value) or Binary("/", a, b)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0):
        return ZERO
    return Binary("/", a, b)


def power(base: Expr, exponent: Expr) -> Expr:
    if not isinstance(exponent, Const):
        raise ExprError(f"exponent must be a constant, got '{exponent}'")
    if isinstance(base, Const):
        return _fold("^", base.value, exponent.value) or Binary("^", base, exponent)
    if exponent.value == 1.0:
        return base
    if exponent.value == 0.0:
        return ONE
    return Binary("^", base, exponent)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value) if a.value != 0.0 else ZERO
    if isinstance(a, Unary) and a.op == "-":
        return a.arg
    return Unary("-", a)


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function '{name}'")
    if isinstance(a, Const):
        return _fold(name, a.value) or Unary(name, a)
    return Unary(name, a)


def _pow(a: float, b: float) -> float:
    if b == int(b) and abs(b) < 64:
        return a ** int(b) if a != 0.0 or b > 0 else 1.0 / (a ** int(-b))
    return math.pow(a, b)


_APPLY: dict[str, Callable] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "^": _pow,
    "neg": lambda a: -a,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "atan": math.atan,
}


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ParseError(f"unexpected character {src[bad]!r}", _byte_offset(src, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(src, start)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(src, len(src))))
    return tokens


def _byte_offset(src: str, index: int) -> int:
    return len(src[:index].encode("utf-8"))


class _Parser:
    def __init__(self, src: str, chart: Sequence[str]):
        self.tokens = _tokenize(src)
        self.i = 0
        self.symbols = {name: k for k, name in enumerate(chart)}

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, _ = self.take()
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, _ = self.take()
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return neg(self.unary())
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            _, _, off = self.take()
            exponent = self.unary()
            if not isinstance(exponent, Const):
                raise ParseError("exponent must be a constant expression", off)
            return power(base, exponent)
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ParseError(f"numeric literal {text!r} overflows", off)
            return Const(value)
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function '{text}'", off)
                self.take()
                args = []
                if self.peek()[:2] != ("op", ")"):
                    args.append(self.expr())
                    while self.peek()[:2] == ("op", ","):
                        self.take()
                        args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ParseError(f"function '{text}' takes 1 argument, got {len(args)}", off)
                return func(text, args[0])
            if text in self.symbols:
                return Symbol(text, self.symbols[text])
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            if text in FUNCTIONS:
                raise ParseError(f"function '{text}' used without argument", off)
            raise ParseError(f"unknown identifier '{text}'", off)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", off)


def _check_chart(chart: Sequence[str]) -> None:
    seen = set()
    for name in chart:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
            raise ExprError(f"invalid coordinate name {name!r}")
        if name in FUNCTIONS:
            raise ExprError(f"coordinate name {name!r} clashes with a function")
        if name in seen:
            raise ExprError(f"duplicate coordinate name {name!r}")
        seen.add(name)


def parse_expression(src: str, chart: Sequence[str]) -> Expr:
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", 0)
    _check_chart(chart)
    return _Parser(src, chart).parse()


# ---------------------------------------------------------------------------
# printing

def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "-":
        return _PREC["neg"]
    return 10


def to_string(e: Expr) -> str:
    if isinstance(e, Const):
        s = repr(e.value)
        return f"({s})" if e.value < 0 or s.startswith("-") else s
    if isinstance(e, Symbol):
        return e.name
    if isinstance(e, Unary):
        if e.op == "-":
            inner = to_string(e.arg)
            return "-" + (f"({inner})" if _prec(e.arg) < _PREC["neg"] else inner)
        return f"{e.op}({to_string(e.arg)})"
    p = _PREC[e.op]
    left, right = to_string(e.left), to_string(e.right)
    if e.op == "^":
        # right associative; a negated base must keep its parentheses
        if _prec(e.left) <= p:
            left = f"({left})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left}{e.op}{right}" if e.op in "*/^" else f"{left} {e.op} {right}"


def free_symbols(e: Expr) -> set[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Symbol):
            out.add(n.name)
        elif isinstance(n, Unary):
            stack.append(n.arg)
        elif isinstance(n, Binary):
            stack.extend((n.left, n.right))
    return out


def node_count(e: Expr) -> int:
    """Number of distinct subtrees (the cost of a CSE-compiled evaluation)."""
    seen = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        if isinstance(n, Unary):
            stack.append(n.arg)
        elif isinstance(n, Binary):
            stack.extend((n.left, n.right))
    return len(seen)


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, var: str | int, chart: Sequence[str] | None = None) -> Expr:
    """Exact partial derivative with respect to a chart coordinate (name or index)."""
    if isinstance(var, str):
        if chart is None:
            syms = {s.name: s.index for s in _symbols(e)}
            if var not in syms:
                return ZERO
            var = syms[var]
        else:
            if var not in chart:
                raise ExprError(f"'{var}' is not a chart coordinate")
            var = list(chart).index(var)
    return _d(e, var)


def _symbols(e: Expr):
    stack, out = [e], []
    while stack:
        n = stack.pop()
        if isinstance(n, Symbol):
            out.append(n)
        elif isinstance(n, Unary):
            stack.append(n.arg)
        elif isinstance(n, Binary):
            stack.extend((n.left, n.right))
    return out


@lru_cache(maxsize=200_000)
def _d(e: Expr, k: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Symbol):
        return ONE if e.index == k else ZERO
    if isinstance(e, Unary):
        da = _d(e.arg, k)
        if _is(da, 0.0):
            return ZERO
        a = e.arg
        if e.op == "-":
            return neg(da)
        if e.op == "sin":
            return mul(func("cos", a), da)
        if e.op == "cos":
            return mul(neg(func("sin", a)), da)
        if e.op == "tan":
            return mul(add(ONE, power(e, Const(2.0))), da)
        if e.op == "exp":
            return mul(e, da)
        if e.op == "log":
            return div(da, a)
        if e.op == "sqrt":
            return div(da, mul(Const(2.0), e))
        if e.op == "atan":
            return div(da, add(ONE, power(a, Const(2.0))))
        raise ExprError(f"no derivative rule for {e.op}")
    a, b = e.left, e.right
    if e.op == "^":
        c = b.value
        da = _d(a, k)
        if _is(da, 0.0):
            return ZERO
        return mul(mul(Const(c), power(a, Const(c - 1.0))), da)
    da, db = _d(a, k), _d(b, k)
    if e.op == "+":
        return add(da, db)
    if e.op == "-":
        return sub(da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    # quotient
    if _is(db, 0.0):
        return div(da, b)
    return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))


def gradient(e: Expr, n: int) -> list[Expr]:
    return [_d(e, k) for k in range(n)]


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, point: Sequence[float]) -> float:
    """Evaluate at a chart point; domain violations raise :class:`DomainError`."""
    point = [float(v) for v in point]
    dim = max((s.index for s in _symbols(e)), default=-1) + 1
    if len(point) < dim:
        raise ExprError(f"point has {len(point)} coordinates, expression needs {dim}")
    return _eval(e, point)


def _eval(e: Expr, p: list[float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Symbol):
        return p[e.index]
    if isinstance(e, Unary):
        a = _eval(e.arg, p)
        if e.op == "-":
            return -a
        if e.op == "log" and a <= 0.0:
            raise DomainError(f"log of non-positive value {a!r}", e)
        if e.op == "sqrt" and a < 0.0:
            raise DomainError(f"sqrt of negative value {a!r}", e)
        try:
            v = _APPLY[e.op](a)
        except (OverflowError, ValueError) as exc:
            raise DomainError(f"{e.op} failed ({exc})", e) from None
        return _finite(v, e)
    a = _eval(e.left, p)
    b = _eval(e.right, p)
    if e.op == "/" and b == 0.0:
        raise DomainError("division by zero", e)
    if e.op == "^":
        if a == 0.0 and b < 0:
            raise DomainError("division by zero (zero to a negative power)", e)
        if a < 0.0 and b != int(b):
            raise DomainError(f"non-integer power of negative value {a!r}", e)
    try:
        v = _APPLY[e.op](a, b)
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise DomainError(f"'{e.op}' failed ({exc})", e) from None
    return _finite(v, e)


def _finite(v: float, e: Expr) -> float:
    if not math.isfinite(v):
        raise DomainError("overflow", e)
    return v


# ---------------------------------------------------------------------------
# compilation (common subexpressions emitted once)

_NP_FUNCS = {f: f"np.{f}" for f in FUNCTIONS}
_NP_FUNCS["atan"] = "np.arctan"
_MATH_FUNCS = {f: f"math.{f}" for f in FUNCTIONS}


def _codegen(exprs: Sequence[Expr], funcs: dict[str, str], pow_fmt: str):
    lines: list[str] = []
    memo: dict[Expr, str] = {}

    def emit(node: Expr) -> str:
        if isinstance(node, Const):
            return f"({node.value!r})"
        if isinstance(node, Symbol):
            return f"a{node.index}"
        got = memo.get(node)
        if got is not None:
            return got
        # iterative post-order avoids recursion limits on long sums
        stack = [(node, False)]
        while stack:
            cur, done = stack.pop()
            if isinstance(cur, (Const, Symbol)) or cur in memo:
                continue
            kids = [cur.arg] if isinstance(cur, Unary) else [cur.left, cur.right]
            if not done:
                stack.append((cur, True))
                stack.extend((k, False) for k in kids)
                continue
            args = [emit(k) for k in kids]
            if isinstance(cur, Unary):
                src = f"(-{args[0]})" if cur.op == "-" else f"{funcs[cur.op]}({args[0]})"
            elif cur.op == "^":
                src = pow_fmt.format(args[0], cur.right.value)
            else:
                src = f"({args[0]} {cur.op} {args[1]})"
            name = f"t{len(lines)}"
            lines.append(f"    {name} = {src}")
            memo[cur] = name
        return memo[node]

    outs = [emit(e) for e in exprs]
    return lines, outs


class Compiled:
    """Fast evaluator for a list of expressions over an ``n``-coordinate chart.

    ``batch(points)`` takes an ``(..., n)`` array and returns ``(..., k)``;
    ``point(p)`` takes one point and returns a tuple of floats.  Both raise
    :class:`DomainError` on domain violations, pinned to the offending subexpression.
    """

    def __init__(self, exprs: Sequence[Expr], n: int):
        self.exprs = tuple(exprs)
        self.n = n
        unpack = "".join(f"    a{i} = P[..., {i}]\n" for i in range(n))
        lines, outs = _codegen(self.exprs, _NP_FUNCS, "np.power({}, {!r})")
        body = "\n".join(lines)
        fill = "\n".join(f"    out[..., {j}] = {o}" for j, o in enumerate(outs))
        src = (
            "def _batch(P):\n" + unpack + body + "\n"
            f"    out = np.empty(P.shape[:-1] + ({len(outs)},))\n" + fill + "\n    return out\n"
        )
        ns: dict = {"np": np}
        exec(compile(src, "<srminimal-batch>", "exec"), ns)
        self._batch = ns["_batch"]

        unpack = "".join(f"    a{i} = p[{i}]\n" for i in range(n))
        lines, outs = _codegen(self.exprs, _MATH_FUNCS, "_pow({}, {!r})")
        src = "def _point(p):\n" + unpack + "\n".join(lines) + f"\n    return ({', '.join(outs)},)\n"
        ns = {"math": math, "_pow": _pow}
        exec(compile(src, "<srminimal-point>", "exec"), ns)
        self._point = ns["_point"]

    def batch(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float)
        if P.shape[-1] != self.n:
            raise ExprError(f"points have {P.shape[-1]} coordinates, chart has {self.n}")
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                out = self._batch(P)
        except FloatingPointError:
            self._locate(P.reshape(-1, self.n))
            raise
        return out

    def point(self, p) -> tuple:
        try:
            out = self._point(p)
        except (ArithmeticError, ValueError):
            self._locate([p])
            raise
        for v in out:
            if not math.isfinite(v):
                self._locate([p])
        return out

    def _locate(self, points):
        for p in points:
            for e in self.exprs:
                evaluate(e, p)
        raise DomainError("floating point failure", self.exprs[0])


def compile_exprs(exprs: Sequence[Expr], n: int) -> Compiled:
    return Compiled(exprs, n)
