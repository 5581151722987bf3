"""Expression trees over the Wirtinger symbols z, zbar, w, wbar.

Expressions are hash-consed: structurally equal trees are the same object,
so identity comparison is structural comparison and derivative / codegen
caches can key on ``id``.  Nodes are immutable and safe to share between
threads.

Surface syntax::

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := ('-'|'+') unary | factor
    factor := atom ('^' ['-'] int)?
    atom   := number | 'i' | 'z' | 'w' | 'zbar' | 'wbar'
            | func '(' expr ')' | '|' expr '|' '^2' | '(' expr ')'
    func   := exp | log | Re | Im | conj | neg

``Re``, ``Im``, ``|.|^2`` and ``conj`` are lowered while parsing, so a
parsed tree only ever has the four symbols as leaves.
"""

from __future__ import annotations

import cmath
import re
import threading
import weakref
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

SYMBOLS = ("z", "zbar", "w", "wbar")
CONJUGATE = {"z": "zbar", "zbar": "z", "w": "wbar", "wbar": "w"}

UNARY_OPS = ("neg", "exp", "log")
BINARY_OPS = ("add", "sub", "mul", "div")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    """Syntax error at a byte offset of the source."""

    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset)


class EvalError(ExprError):
    """Singular evaluation (log of zero, division by zero)."""

    def __init__(self, message: str, node: "Expr"):
        self.node = node
        super().__init__(f"{message} in {to_source(node)}")


class Expr:
    """One interned node.  Build with the constructor functions below."""

    __slots__ = ("op", "args", "value", "__weakref__")

    op: str
    args: tuple
    value: object  # complex for const, str for var, int for pow

    def __repr__(self) -> str:
        return f"Expr({to_source(self)})"

    def __reduce__(self):
        return (parse, (to_source(self),))

    # operator sugar, mostly for building fixtures in tests
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        return power(self, n)

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def size(self) -> int:
        seen: set[int] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.extend(node.args)
        return len(seen)

    def symbols(self) -> frozenset[str]:
        out = set()
        for node in _postorder(self):
            if node.op == "var":
                out.add(node.value)
        return frozenset(out)


_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_table_lock = threading.Lock()


def _intern(op: str, args: tuple, value) -> Expr:
    key = (op, tuple(id(a) for a in args), value)
    with _table_lock:
        node = _table.get(key)
        if node is None:
            node = object.__new__(Expr)
            node.op, node.args, node.value = op, args, value
            _table[key] = node
        return node


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, complex)):
        return const(x)
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


def const(c) -> Expr:
    c = complex(c)
    # normalise signed zeros so 0.0 and -0.0 intern to one node
    c = complex(c.real + 0.0, c.imag + 0.0)
    return _intern("const", (), c)


def var(name: str) -> Expr:
    if name not in SYMBOLS:
        raise ValueError(f"unknown symbol {name!r}")
    return _intern("var", (), name)


ZERO = const(0)
ONE = const(1)


def _is(node: Expr, c: complex) -> bool:
    return node.op == "const" and node.value == c


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return _intern("neg", (a,), None)


def exp(a: Expr) -> Expr:
    if a.is_const:
        return const(cmath.exp(a.value))
    return _intern("exp", (a,), None)


def log(a: Expr) -> Expr:
    if a.is_const:
        if a.value == 0:
            raise ExprError("log of constant zero")
        return const(cmath.log(a.value))
    return _intern("log", (a,), None)


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return _intern("add", (a, b), None)


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    return _intern("sub", (a, b), None)


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    return _intern("mul", (a, b), None)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        raise ExprError("division by constant zero")
    if a.is_const and b.is_const:
        return const(a.value / b.value)
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return _intern("div", (a, b), None)


def power(a: Expr, n: int) -> Expr:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise ExprError(f"only integer powers are supported, got {n!r}")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if a.is_const:
        if a.value == 0 and n < 0:
            raise ExprError("negative power of constant zero")
        return const(a.value**n)
    return _intern("pow", (a,), n)


def conj(a: Expr) -> Expr:
    """Complex conjugate, pushed down to the leaves."""
    memo: dict[int, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        op = node.op
        if op == "const":
            out = const(node.value.conjugate())
        elif op == "var":
            out = var(CONJUGATE[node.value])
        elif op == "pow":
            out = power(go(node.args[0]), node.value)
        else:
            out = _BUILD[op](*(go(c) for c in node.args))
        memo[id(node)] = out
        return out

    return go(a)


def re_part(a: Expr) -> Expr:
    return div(add(a, conj(a)), const(2))


def im_part(a: Expr) -> Expr:
    return div(sub(a, conj(a)), const(2j))


def abs2(a: Expr) -> Expr:
    return mul(a, conj(a))


_BUILD: dict[str, Callable[..., Expr]] = {
    "neg": neg,
    "exp": exp,
    "log": log,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
}


def _postorder(root: Expr) -> list[Expr]:
    """Distinct nodes, children before parents."""
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in reversed(node.args):
            if id(child) not in seen:
                stack.append((child, False))
    return order


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()|])
    """,
    re.VERBOSE,
)

_FUNCS: dict[str, Callable[[Expr], Expr]] = {
    "exp": exp,
    "log": log,
    "Re": re_part,
    "Im": im_part,
    "conj": conj,
    "neg": neg,
}
_ATOM_START = ("number", "i", "z", "w", "zbar", "wbar", "(", "|", *_FUNCS)


@dataclass(frozen=True)
class _Tok:
    kind: str  # number | ident | op | end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Tok]:
    raw = source.encode("utf-8")
    toks: list[_Tok] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            offset = len(source[:pos].encode("utf-8"))
            raise ParseError(f"unexpected character {source[pos]!r}", offset)
        if m.lastgroup != "ws":
            offset = len(source[:pos].encode("utf-8"))
            toks.append(_Tok(m.lastgroup, m.group(), offset))
        pos = m.end()
    toks.append(_Tok("end", "", len(raw)))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, expected: Sequence[str]):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.offset, expected)

    def expect(self, text: str):
        if self.tok.kind == "op" and self.tok.text == text:
            return self.advance()
        self.fail([text])

    def at_op(self, *texts: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in texts

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(["+", "-", "*", "/", "^", "end of input"])
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            rhs = self.unary()
            if op == "*":
                node = mul(node, rhs)
            else:
                node = self._guard(div, node, rhs)
        return node

    def unary(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            return neg(self.unary())
        if self.at_op("+"):
            self.advance()
            return self.unary()
        return self.factor()

    def factor(self) -> Expr:
        start = self.tok.offset
        base = self.atom()
        if self.at_op("^"):
            self.advance()
            sign = 1
            if self.at_op("-"):
                self.advance()
                sign = -1
            n = self.integer()
            try:
                return power(base, sign * n)
            except ExprError as exc:
                raise ParseError(str(exc), start) from None
        return base

    def integer(self) -> int:
        t = self.tok
        if t.kind == "number" and t.text.isdigit():
            self.advance()
            return int(t.text)
        self.fail(["integer exponent"])

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return const(float(t.text))
        if t.kind == "ident":
            self.advance()
            if t.text == "i":
                return const(1j)
            if t.text in SYMBOLS:
                return var(t.text)
            if t.text in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return self._guard(_FUNCS[t.text], arg, offset=t.offset)
            raise UnknownIdentifierError(t.text, t.offset)
        if self.at_op("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if self.at_op("|"):
            self.advance()
            node = self.expr()
            self.expect("|")
            self.expect("^")
            if not (self.tok.kind == "number" and self.tok.text == "2"):
                self.fail(["2"])
            self.advance()
            return abs2(node)
        self.fail(_ATOM_START)

    def _guard(self, fn, *args, offset: int | None = None) -> Expr:
        try:
            return fn(*args)
        except ExprError as exc:
            raise ParseError(str(exc), self.tok.offset if offset is None else offset) from None


def parse(source: str) -> Expr:
    """Parse and lower ``source``; raises :class:`ParseError` on bad input."""
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# printing


def _fmt_const(c: complex) -> str:
    if c.imag == 0:
        return f"({c.real!r})" if c.real < 0 else repr(c.real)
    return f"({c.real!r} + {c.imag!r}*i)"


def to_source(node: Expr) -> str:
    """Fully parenthesised text that reparses to the identical tree."""
    text: dict[int, str] = {}
    for n in _postorder(node):
        op = n.op
        if op == "const":
            s = _fmt_const(n.value)
        elif op == "var":
            s = n.value
        elif op == "neg":
            s = f"(-{text[id(n.args[0])]})"
        elif op in ("exp", "log"):
            s = f"{op}({text[id(n.args[0])]})"
        elif op == "pow":
            s = f"({text[id(n.args[0])]})^{n.value}"
        else:
            sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[op]
            s = f"({text[id(n.args[0])]} {sym} {text[id(n.args[1])]})"
        text[id(n)] = s
    return text[id(node)]


# ---------------------------------------------------------------------------
# evaluation
#
# Trees are compiled to straight-line Python with common subexpressions
# shared.  The generated functions work on Python complex scalars as well as
# numpy arrays of any complex dtype (clongdouble gives extended precision).


def _codegen(roots: Sequence[Expr], checked: bool) -> tuple[str, list[Expr]]:
    names: dict[int, str] = {}
    lines: list[str] = []
    nodes: list[Expr] = []
    seen: set[int] = set()
    order: list[Expr] = []
    for r in roots:
        for n in _postorder(r):
            if id(n) not in seen:
                seen.add(id(n))
                order.append(n)
    for n in order:
        op = n.op
        if op == "var":
            names[id(n)] = n.value
            continue
        if op == "const":
            c = n.value
            names[id(n)] = repr(c.real) if c.imag == 0 else repr(c)
            continue
        k = len(nodes)
        nodes.append(n)
        a = [names[id(c)] for c in n.args]
        t = f"t{k}"
        if op == "neg":
            rhs = f"-{a[0]}"
        elif op == "exp":
            rhs = f"_exp({a[0]})"
        elif op == "log":
            rhs = f"_log({a[0]}, {k})" if checked else f"_log({a[0]})"
        elif op == "pow":
            if n.value < 0 and checked:
                rhs = f"_div(1.0, {a[0]}**{-n.value}, {k})"
            else:
                rhs = f"{a[0]}**{n.value}"
        elif op == "add":
            rhs = f"{a[0]} + {a[1]}"
        elif op == "sub":
            rhs = f"{a[0]} - {a[1]}"
        elif op == "mul":
            rhs = f"{a[0]} * {a[1]}"
        else:
            rhs = f"_div({a[0]}, {a[1]}, {k})" if checked else f"{a[0]} / {a[1]}"
        lines.append(f"    {t} = {rhs}")
        names[id(n)] = t
    out = ", ".join(names[id(r)] for r in roots)
    src = "def _f(z, zbar, w, wbar):\n" + "\n".join(lines) + f"\n    return ({out},)\n"
    return src, nodes


def compile_exprs(roots: Sequence[Expr], checked: bool = False) -> Callable:
    """Compile ``roots`` into ``f(z, zbar, w, wbar) -> tuple`` of values.

    With ``checked`` set, logs of zero and divisions by zero raise
    :class:`EvalError` naming the node; otherwise numpy semantics apply.
    """
    src, nodes = _codegen(roots, checked)

    def _ck_div(a, b, k):
        if np.any(b == 0):
            raise EvalError("division by zero", nodes[k])
        return a / b

    def _ck_log(a, k):
        if np.any(a == 0):
            raise EvalError("log of zero", nodes[k])
        return np.log(a)

    env = {
        "_exp": np.exp,
        "_log": _ck_log if checked else np.log,
        "_div": _ck_div,
    }
    exec(compile(src, "<geomlab-expr>", "exec"), env)
    return env["_f"]


_compiled: dict[int, tuple[Expr, Callable]] = {}
_compiled_lock = threading.Lock()


def _compiled_checked(node: Expr) -> Callable:
    with _compiled_lock:
        hit = _compiled.get(id(node))
        if hit is not None and hit[0] is node:
            return hit[1]
    fn = compile_exprs([node], checked=True)
    with _compiled_lock:
        _compiled[id(node)] = (node, fn)
    return fn


def point_args(p, dtype=np.complex128) -> tuple:
    """Symbol values (z, zbar, w, wbar) for a point with x, y, u, v fields."""
    if dtype is np.clongdouble:
        z = np.longdouble(p.x) + 1j * np.longdouble(p.y)
        w = np.longdouble(p.u) + 1j * np.longdouble(p.v)
    else:
        z = complex(p.x, p.y)
        w = complex(p.u, p.v)
    return z, np.conj(z), w, np.conj(w)


def evaluate(ast: Expr, p, dtype=np.complex128) -> complex:
    """Value of ``ast`` at point ``p``.

    ``p`` is anything with ``x, y, u, v`` attributes.  Singular points raise
    :class:`EvalError`.
    """
    fn = _compiled_checked(ast)
    with np.errstate(all="ignore"):
        (val,) = fn(*point_args(p, dtype))
    if dtype is np.complex128:
        return complex(val)
    return val


def evaluate_real(ast: Expr, p) -> tuple[float, float]:
    """Real value of a real-valued expression and its stray imaginary part."""
    val = evaluate(ast, p)
    return val.real, val.imag
