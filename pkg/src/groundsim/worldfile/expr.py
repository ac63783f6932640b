"""Infix arithmetic for $(...) directives.

Recursive descent over + - * / ^ with parentheses, unary sign, a few
math functions, and named variables (loop counters).  ^ is
right-associative and binds tighter than unary minus, so -2^2 = -4.
"""

from __future__ import annotations

import math

from ..errors import ExpressionError

_FUNCTIONS = {
    "sin": (1, math.sin),
    "cos": (1, math.cos),
    "tan": (1, math.tan),
    "atan2": (2, math.atan2),
    "sqrt": (1, math.sqrt),
    "abs": (1, abs),
    "floor": (1, math.floor),
    "pi": (0, lambda: math.pi),
}


class _Parser:
    def __init__(self, text: str, variables):
        self.text = text
        self.pos = 0
        self.variables = variables or {}

    def fail(self, message: str):
        raise ExpressionError(f"{message} in expression {self.text!r}")

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def parse(self) -> float:
        value = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.fail(f"unexpected {self.text[self.pos]!r}")
        return value

    def expr(self) -> float:
        value = self.term()
        while True:
            ch = self.peek()
            if ch == "+":
                self.pos += 1
                value += self.term()
            elif ch == "-":
                self.pos += 1
                value -= self.term()
            else:
                return value

    def term(self) -> float:
        value = self.unary()
        while True:
            ch = self.peek()
            if ch == "*":
                self.pos += 1
                value *= self.unary()
            elif ch == "/":
                self.pos += 1
                divisor = self.unary()
                if divisor == 0.0:
                    self.fail("division by zero")
                value /= divisor
            else:
                return value

    def unary(self) -> float:
        ch = self.peek()
        if ch == "-":
            self.pos += 1
            return -self.unary()
        if ch == "+":
            self.pos += 1
            return self.unary()
        return self.power()

    def power(self) -> float:
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            exponent = self.unary()
            try:
                result = base ** exponent
            except (OverflowError, ValueError, ZeroDivisionError) as exc:
                self.fail(f"cannot raise {base} to {exponent}: {exc}")
            if isinstance(result, complex):
                self.fail("complex result")
            return result
        return base

    def atom(self) -> float:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.fail("unexpected end")
        ch = self.text[self.pos]
        if ch == "(":
            self.pos += 1
            value = self.expr()
            if self.peek() != ")":
                self.fail("missing )")
            self.pos += 1
            return value
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch.isalpha() or ch == "_":
            return self.name()
        self.fail(f"unexpected {ch!r}")

    def number(self) -> float:
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isdigit() or text[self.pos] == "."):
            self.pos += 1
        # exponent suffix like 1e-3
        if self.pos < len(text) and text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(text) and text[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(text) and text[self.pos].isdigit():
                while self.pos < len(text) and text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark
        try:
            return float(text[start:self.pos])
        except ValueError:
            self.fail(f"bad number {text[start:self.pos]!r}")

    def name(self) -> float:
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isalnum() or text[self.pos] == "_"):
            self.pos += 1
        ident = text[start:self.pos]
        if self.peek() == "(":
            return self.call(ident)
        if ident in self.variables:
            return float(self.variables[ident])
        self.fail(f"unknown variable {ident!r}")

    def call(self, ident: str) -> float:
        if ident not in _FUNCTIONS:
            self.fail(f"unknown function {ident!r}")
        arity, fn = _FUNCTIONS[ident]
        self.pos += 1  # consume (
        args = []
        if self.peek() != ")":
            args.append(self.expr())
            while self.peek() == ",":
                self.pos += 1
                args.append(self.expr())
        if self.peek() != ")":
            self.fail("missing ) in call")
        self.pos += 1
        if len(args) != arity:
            self.fail(f"{ident} takes {arity} argument(s), got {len(args)}")
        try:
            return float(fn(*args))
        except ValueError as exc:
            self.fail(f"domain error in {ident}: {exc}")


def evaluate(text: str, variables=None) -> float:
    """Evaluate one expression with the given variable bindings."""
    return _Parser(text, variables).parse()
