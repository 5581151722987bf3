"""Symbolic Wirtinger derivatives.

z, zbar, w, wbar are independent symbols, so d/dz of zbar is zero.  Results
are plain expression trees; the only simplification is constant folding.
"""

from __future__ import annotations

import threading
from typing import Iterable, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr

MAX_ORDER = 4

_cache: dict[tuple[int, str], tuple[Expr, Expr]] = {}
_lock = threading.Lock()


def deriv_key(symbols: Iterable[str] | str) -> tuple[str, ...]:
    """Validate a derivative key: 1 to 4 symbols from z, zbar, w, wbar."""
    key = (symbols,) if isinstance(symbols, str) else tuple(symbols)
    if not 1 <= len(key) <= MAX_ORDER:
        raise ValueError(f"derivative order must be 1..{MAX_ORDER}, got {len(key)}")
    for s in key:
        if s not in ex.SYMBOLS:
            raise ValueError(f"unknown symbol {s!r}")
    return key


def _d(node: Expr, sym: str) -> Expr:
    key = (id(node), sym)
    with _lock:
        hit = _cache.get(key)
    if hit is not None and hit[0] is node:
        return hit[1]

    # iterative post-order so deep trees don't hit the recursion limit
    out: dict[int, Expr] = {}
    for n in ex._postorder(node):
        with _lock:
            hit = _cache.get((id(n), sym))
        if hit is not None and hit[0] is n:
            out[id(n)] = hit[1]
            continue
        out[id(n)] = r = _rule(n, sym, out)
        with _lock:
            _cache[(id(n), sym)] = (n, r)
    return out[id(node)]


def _rule(n: Expr, sym: str, d: dict[int, Expr]) -> Expr:
    op = n.op
    if op == "const":
        return ex.ZERO
    if op == "var":
        return ex.ONE if n.value == sym else ex.ZERO
    a = n.args[0]
    da = d[id(a)]
    if op == "neg":
        return ex.neg(da)
    if op == "exp":
        return ex.mul(n, da)
    if op == "log":
        return ex.div(da, a)
    if op == "pow":
        k = n.value
        return ex.mul(ex.mul(ex.const(k), ex.power(a, k - 1)), da)
    b = n.args[1]
    db = d[id(b)]
    if op == "add":
        return ex.add(da, db)
    if op == "sub":
        return ex.sub(da, db)
    if op == "mul":
        return ex.add(ex.mul(da, b), ex.mul(a, db))
    if op == "div":
        # (a/b)' = a'/b - a b'/b^2
        return ex.sub(ex.div(da, b), ex.div(ex.mul(a, db), ex.power(b, 2)))
    raise ValueError(f"cannot differentiate node {op!r}")


def derive(ast: Expr, key: Sequence[str] | str) -> Expr:
    """Exact derivative of ``ast``, applying the symbols of ``key`` in order."""
    for sym in deriv_key(key):
        ast = _d(ast, sym)
    return ast


def derive_eval(ast: Expr, key: Sequence[str] | str, p, dtype=np.complex128) -> complex:
    """``evaluate(derive(ast, key), p)`` with derivative trees cached."""
    return ex.evaluate(derive(ast, key), p, dtype=dtype)


def clear_cache() -> None:
    with _lock:
        _cache.clear()
