"""Textual macro expansion that runs before XML parsing.

Handled directives, everything else copied byte-for-byte:
  ${VAR} / ${VAR|default}   environment substitution
  $(expr)                   arithmetic, loop variables in scope
  $$                        literal dollar sign
  <include file="..."/>     splice another file, paths relative to
                            the including file
  <for var="i" from="a" to="b" step="s">...</for>
                            inclusive integer bounds, nestable; inner
                            loops expand before the enclosing loop
                            moves to its next iteration

The output of a full expansion contains no directives, so running the
preprocessor twice is the identity on its own output.
"""

from __future__ import annotations

import os

from ..errors import (ExpressionError, IncludeCycle, UndefinedVariable,
                      WorldFileError)
from .expr import evaluate

_MAX_INCLUDE_DEPTH = 32


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _is_name_end(text: str, pos: int) -> bool:
    """True when the tag name ending at pos is not a longer word."""
    return pos >= len(text) or not (text[pos].isalnum() or text[pos] in "_-")


class _Expander:
    def __init__(self, env):
        self.env = env if env is not None else {}
        self.include_stack = []

    # -- error helpers -------------------------------------------------

    def _line_of(self, text: str, pos: int, line_offset: int) -> int:
        return line_offset + text.count("\n", 0, pos) + 1

    def _fail(self, exc_type, message, text, pos, src_path, line_offset):
        raise exc_type(message, path=src_path,
                       line=self._line_of(text, pos, line_offset))

    # -- main scanner --------------------------------------------------

    def expand(self, text, scope, src_path, base_dir, line_offset=0) -> str:
        out = []
        i = 0
        n = len(text)
        while i < n:
            ch = text[i]
            if ch == "$" and i + 1 < n:
                nxt = text[i + 1]
                if nxt == "$":
                    out.append("$")
                    i += 2
                    continue
                if nxt == "{":
                    i = self._substitute_var(text, i, out, src_path, line_offset)
                    continue
                if nxt == "(":
                    i = self._substitute_expr(text, i, out, scope,
                                              src_path, line_offset)
                    continue
            elif ch == "<":
                if text.startswith("<include", i) and _is_name_end(text, i + 8):
                    i = self._splice_include(text, i, out, scope,
                                             src_path, base_dir, line_offset)
                    continue
                if text.startswith("<for", i) and _is_name_end(text, i + 4):
                    i = self._expand_for(text, i, out, scope,
                                         src_path, base_dir, line_offset)
                    continue
                if text.startswith("</for", i) and _is_name_end(text, i + 5):
                    self._fail(WorldFileError, "</for> without matching <for>",
                               text, i, src_path, line_offset)
            out.append(ch)
            i += 1
        return "".join(out)

    # -- ${VAR} --------------------------------------------------------

    def _substitute_var(self, text, start, out, src_path, line_offset):
        end = text.find("}", start + 2)
        if end < 0:
            self._fail(WorldFileError, "unterminated ${", text, start,
                       src_path, line_offset)
        body = text[start + 2:end]
        name, sep, default = body.partition("|")
        if not name:
            self._fail(WorldFileError, "empty variable name in ${}", text,
                       start, src_path, line_offset)
        value = self.env.get(name)
        if value is None:
            if not sep:
                self._fail(UndefinedVariable,
                           f"environment variable {name!r} is not set "
                           "and has no default", text, start, src_path,
                           line_offset)
            value = default
        out.append(value)
        return end + 1

    # -- $(expr) -------------------------------------------------------

    def _substitute_expr(self, text, start, out, scope, src_path, line_offset):
        depth = 0
        i = start + 1
        while i < len(text):
            if text[i] == "(":
                depth += 1
            elif text[i] == ")":
                depth -= 1
                if depth == 0:
                    break
            i += 1
        if depth != 0:
            self._fail(WorldFileError, "unterminated $(", text, start,
                       src_path, line_offset)
        expression = text[start + 2:i]
        try:
            value = evaluate(expression, scope)
        except ExpressionError as exc:
            self._fail(ExpressionError, str(exc), text, start,
                       src_path, line_offset)
        out.append(_format_number(value))
        return i + 1

    # -- <include/> ----------------------------------------------------

    def _splice_include(self, text, start, out, scope, src_path, base_dir,
                        line_offset):
        tag_end = text.find(">", start)
        if tag_end < 0:
            self._fail(WorldFileError, "unterminated <include>", text, start,
                       src_path, line_offset)
        tag = text[start:tag_end + 1]
        if not tag.rstrip(">").rstrip().endswith("/"):
            self._fail(WorldFileError, "<include> must be self-closing", text,
                       start, src_path, line_offset)
        attrs = self._parse_attrs(tag[len("<include"):-2], text, start,
                                  src_path, line_offset)
        if set(attrs) != {"file"}:
            self._fail(WorldFileError,
                       "<include> takes exactly one attribute: file", text,
                       start, src_path, line_offset)
        rel = self.expand(attrs["file"], scope, src_path, base_dir, line_offset)
        path = os.path.normpath(os.path.join(base_dir, rel))
        real = os.path.realpath(path)
        if real in self.include_stack:
            self._fail(IncludeCycle, f"include cycle through {path}", text,
                       start, src_path, line_offset)
        if len(self.include_stack) >= _MAX_INCLUDE_DEPTH:
            self._fail(IncludeCycle,
                       f"include depth exceeds {_MAX_INCLUDE_DEPTH}", text,
                       start, src_path, line_offset)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                content = fh.read()
        except OSError as exc:
            self._fail(WorldFileError, f"cannot read include: {exc}", text,
                       start, src_path, line_offset)
        self.include_stack.append(real)
        try:
            out.append(self.expand(content, scope, path,
                                   os.path.dirname(path) or "."))
        finally:
            self.include_stack.pop()
        return tag_end + 1

    # -- <for> ---------------------------------------------------------

    def _expand_for(self, text, start, out, scope, src_path, base_dir,
                    line_offset):
        tag_end = text.find(">", start)
        if tag_end < 0:
            self._fail(WorldFileError, "unterminated <for> tag", text, start,
                       src_path, line_offset)
        tag = text[start:tag_end + 1]
        self_closing = tag.rstrip(">").rstrip().endswith("/")
        inner = tag[len("<for"):-2 if self_closing else -1]
        attrs = self._parse_attrs(inner, text, start, src_path, line_offset)
        unknown = set(attrs) - {"var", "from", "to", "step"}
        if unknown or not {"var", "from", "to"} <= set(attrs):
            self._fail(WorldFileError,
                       "<for> needs var, from, to (step optional)", text,
                       start, src_path, line_offset)
        if self_closing:
            return tag_end + 1
        body_start = tag_end + 1
        body_end, close_end = self._matching_for_close(text, body_start,
                                                       src_path, line_offset)
        body = text[body_start:body_end]
        var = attrs["var"]
        lo = self._int_attr(attrs["from"], scope, text, start, src_path,
                            line_offset)
        hi = self._int_attr(attrs["to"], scope, text, start, src_path,
                            line_offset)
        step = self._int_attr(attrs.get("step", "1"), scope, text, start,
                              src_path, line_offset)
        if step == 0:
            self._fail(ExpressionError, "<for> step must be nonzero", text,
                       start, src_path, line_offset)
        body_offset = self._line_of(text, body_start, line_offset) - 1
        value = lo
        while (step > 0 and value <= hi) or (step < 0 and value >= hi):
            inner_scope = dict(scope)
            inner_scope[var] = value
            out.append(self.expand(body, inner_scope, src_path, base_dir,
                                   body_offset))
            value += step
        return close_end

    def _matching_for_close(self, text, pos, src_path, line_offset):
        """Index range of the </for> matching an already-open <for>."""
        depth = 1
        i = pos
        while i < len(text):
            if text.startswith("</for", i) and _is_name_end(text, i + 5):
                end = text.find(">", i)
                if end < 0:
                    break
                depth -= 1
                if depth == 0:
                    return i, end + 1
                i = end + 1
            elif text.startswith("<for", i) and _is_name_end(text, i + 4):
                end = text.find(">", i)
                if end < 0:
                    break
                if not text[i:end + 1].rstrip(">").rstrip().endswith("/"):
                    depth += 1
                i = end + 1
            else:
                i += 1
        self._fail(WorldFileError, "<for> without matching </for>", text,
                   pos - 1, src_path, line_offset)

    def _int_attr(self, raw, scope, text, pos, src_path, line_offset):
        expanded = self.expand(raw, scope, src_path, ".", line_offset)
        try:
            value = evaluate(expanded, scope)
        except ExpressionError as exc:
            self._fail(ExpressionError, str(exc), text, pos, src_path,
                       line_offset)
        if value != int(value):
            self._fail(ExpressionError,
                       f"<for> bound {raw!r} is not an integer", text, pos,
                       src_path, line_offset)
        return int(value)

    # -- attribute scanning -------------------------------------------

    def _parse_attrs(self, chunk, text, pos, src_path, line_offset):
        attrs = {}
        i = 0
        n = len(chunk)
        while i < n:
            while i < n and chunk[i].isspace():
                i += 1
            if i >= n:
                break
            start = i
            while i < n and (chunk[i].isalnum() or chunk[i] in "_-"):
                i += 1
            name = chunk[start:i]
            while i < n and chunk[i].isspace():
                i += 1
            if not name or i >= n or chunk[i] != "=":
                self._fail(WorldFileError, f"malformed attribute near "
                           f"{chunk[start:start + 20]!r}", text, pos,
                           src_path, line_offset)
            i += 1
            while i < n and chunk[i].isspace():
                i += 1
            if i >= n or chunk[i] not in "\"'":
                self._fail(WorldFileError,
                           f"attribute {name!r} value must be quoted", text,
                           pos, src_path, line_offset)
            quote = chunk[i]
            i += 1
            end = chunk.find(quote, i)
            if end < 0:
                self._fail(WorldFileError,
                           f"unterminated value for attribute {name!r}", text,
                           pos, src_path, line_offset)
            attrs[name] = chunk[i:end]
            i = end + 1
        return attrs


def preprocess(text: str, env=None, base_dir: str = ".") -> str:
    """Expand all directives in text; include paths resolve against
    base_dir."""
    return _Expander(env).expand(text, {}, "<string>", base_dir)


def preprocess_file(path: str, env=None) -> str:
    """Expand a file on disk, include paths relative to it."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise WorldFileError(f"cannot read world file: {exc}", path=str(path))
    expander = _Expander(env)
    expander.include_stack.append(os.path.realpath(path))
    return expander.expand(text, {}, str(path),
                           os.path.dirname(str(path)) or ".")
