"""Small arithmetic expression language for configuration files.

Grammar (recursive descent, no eval):

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ("+" | "-") factor | power
    power  := atom ("^" factor)?          # right-associative
    atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

Known functions: sin, cos, exp, ln, sqrt, ml_alpha.  ml_alpha(z) is the
one-parameter Mittag-Leffler function; its order comes from the
evaluation context, not from the expression.  Variables are whatever the
environment supplies (the pipeline uses x1, x2, v, y4).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .mlf import mittag_leffler, mittag_leffler_array

__all__ = ["ExpressionError", "Expression", "parse_expression"]

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
}


class ExpressionError(ValueError):
    """Malformed expression text; carries the character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


@dataclass(frozen=True)
class _Num:
    value: float


@dataclass(frozen=True)
class _Var:
    name: str


@dataclass(frozen=True)
class _Call:
    fn: str
    arg: "_Node"


@dataclass(frozen=True)
class _Neg:
    operand: "_Node"


@dataclass(frozen=True)
class _Bin:
    op: str
    left: "_Node"
    right: "_Node"


_Node = Union[_Num, _Var, _Call, _Neg, _Bin]


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> tuple[str, str, int]:
        save = self.pos
        tok = self.next()
        self.pos = save
        return tok

    def next(self) -> tuple[str, str, int]:
        self._skip_ws()
        start = self.pos
        if self.pos >= len(self.text):
            return ("end", "", start)
        ch = self.text[self.pos]
        if ch in "+-*/^()":
            self.pos += 1
            return ("op", ch, start)
        if ch.isdigit() or ch == ".":
            j = self.pos
            seen_exp = False
            while j < len(self.text):
                c = self.text[j]
                if c.isdigit() or c == ".":
                    j += 1
                elif c in "eE" and not seen_exp:
                    seen_exp = True
                    j += 1
                    if j < len(self.text) and self.text[j] in "+-":
                        j += 1
                else:
                    break
            lit = self.text[self.pos : j]
            try:
                val = float(lit)
            except ValueError:
                raise ExpressionError(f"bad numeric literal {lit!r}", start) from None
            self.pos = j
            return ("num", repr(val), start)
        if ch.isalpha() or ch == "_":
            j = self.pos
            while j < len(self.text) and (self.text[j].isalnum() or self.text[j] == "_"):
                j += 1
            name = self.text[self.pos : j]
            self.pos = j
            return ("ident", name, start)
        raise ExpressionError(f"unexpected character {ch!r}", start)


class _Parser:
    def __init__(self, text: str):
        self.tk = _Tokenizer(text)

    def parse(self) -> _Node:
        node = self._expr()
        kind, val, pos = self.tk.next()
        if kind != "end":
            raise ExpressionError(f"trailing input {val!r}", pos)
        return node

    def _expr(self) -> _Node:
        node = self._term()
        while True:
            kind, val, _ = self.tk.peek()
            if kind == "op" and val in "+-":
                self.tk.next()
                node = _Bin(val, node, self._term())
            else:
                return node

    def _term(self) -> _Node:
        node = self._factor()
        while True:
            kind, val, _ = self.tk.peek()
            if kind == "op" and val in "*/":
                self.tk.next()
                node = _Bin(val, node, self._factor())
            else:
                return node

    def _factor(self) -> _Node:
        kind, val, _ = self.tk.peek()
        if kind == "op" and val in "+-":
            self.tk.next()
            operand = self._factor()
            return _Neg(operand) if val == "-" else operand
        return self._power()

    def _power(self) -> _Node:
        base = self._atom()
        kind, val, _ = self.tk.peek()
        if kind == "op" and val == "^":
            self.tk.next()
            return _Bin("^", base, self._factor())
        return base

    def _atom(self) -> _Node:
        kind, val, pos = self.tk.next()
        if kind == "num":
            return _Num(float(val))
        if kind == "ident":
            nkind, nval, _ = self.tk.peek()
            if nkind == "op" and nval == "(":
                self.tk.next()
                arg = self._expr()
                ckind, cval, cpos = self.tk.next()
                if not (ckind == "op" and cval == ")"):
                    raise ExpressionError("expected ')'", cpos)
                if val not in _FUNCTIONS and val != "ml_alpha":
                    raise ExpressionError(f"unknown function {val!r}", pos)
                return _Call(val, arg)
            return _Var(val)
        if kind == "op" and val == "(":
            node = self._expr()
            ckind, cval, cpos = self.tk.next()
            if not (ckind == "op" and cval == ")"):
                raise ExpressionError("expected ')'", cpos)
            return node
        if kind == "end":
            raise ExpressionError("unexpected end of expression", pos)
        raise ExpressionError(f"unexpected token {val!r}", pos)


def _variables(node: _Node, out: set[str]) -> None:
    if isinstance(node, _Var):
        out.add(node.name)
    elif isinstance(node, _Call):
        _variables(node.arg, out)
    elif isinstance(node, _Neg):
        _variables(node.operand, out)
    elif isinstance(node, _Bin):
        _variables(node.left, out)
        _variables(node.right, out)


def _evaluate(node: _Node, env: Mapping[str, object], ml_order: float | None):
    if isinstance(node, _Num):
        return node.value
    if isinstance(node, _Var):
        try:
            return env[node.name]
        except KeyError:
            raise ExpressionError(f"unknown variable {node.name!r}", 0) from None
    if isinstance(node, _Neg):
        return -_evaluate(node.operand, env, ml_order)
    if isinstance(node, _Call):
        arg = _evaluate(node.arg, env, ml_order)
        if node.fn == "ml_alpha":
            if ml_order is None:
                raise ExpressionError("ml_alpha needs a configured order", 0)
            if np.isscalar(arg):
                return mittag_leffler(ml_order, float(arg))
            return mittag_leffler_array(ml_order, np.asarray(arg, dtype=float))
        return _FUNCTIONS[node.fn](arg)
    if isinstance(node, _Bin):
        left = _evaluate(node.left, env, ml_order)
        right = _evaluate(node.right, env, ml_order)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            return left / right
        return np.power(left, right)
    raise TypeError(f"unhandled node {node!r}")


class Expression:
    """Parsed arithmetic expression, evaluable on scalars or arrays."""

    def __init__(self, text: str):
        self.text = text
        self._root = _Parser(text).parse()

    def variables(self) -> set[str]:
        out: set[str] = set()
        _variables(self._root, out)
        return out

    def __call__(self, env: Mapping[str, object], ml_order: float | None = None):
        return _evaluate(self._root, env, ml_order)

    def is_constant(self) -> bool:
        return not self.variables()

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


def parse_expression(text: str) -> Expression:
    """Parse ``text``; raises ExpressionError with a character position."""
    return Expression(text)
