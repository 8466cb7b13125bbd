"""Source parsing into a uniform call-site tree.

Python goes through the stdlib ``ast`` module.  JavaScript and Ruby go
through a tolerant single-pass scanner that recognizes dotted call paths
(``a.b.c(...)``, ``Net::HTTP.get(...)``) while skipping comments, strings,
regex literals, template/heredoc bodies and percent literals.  The scanner
is not a full grammar: it recovers call sites and argument counts, raises
on unbalanced brackets and unterminated strings, and deliberately ignores
constructs that cannot contain a call path (it does not, for example,
balance Ruby ``do``/``end``).

Known scanner limits, accepted on purpose:

* Ruby paren-less calls (``system "ls"``) are not recorded.
* Calls inside string interpolation (``#{...}``, ``${...}``) are skipped.
* Bare ``<<IDENT`` is read as a heredoc only when IDENT is all-caps or the
  squiggly/dash form is used; anything else is treated as a shift.

Name paths normalize every connector (``.``, ``?.``, ``::``) to ``.`` and
use a ``?`` head segment when the receiver is not a plain identifier chain
(call result, literal, subscript), e.g. ``require('http').get`` becomes
``?.get``.
"""

from __future__ import annotations

import ast as python_ast
import re
from dataclasses import dataclass, field

from .catalog import Language
from .errors import ParseError

JS_KEYWORDS = frozenset({
    "if", "for", "while", "switch", "catch", "return", "function", "typeof",
    "new", "delete", "void", "in", "of", "instanceof", "do", "else", "case",
    "break", "continue", "var", "let", "const", "class", "extends", "super",
    "this", "throw", "try", "finally", "yield", "await", "with", "debugger",
    "export", "import", "default",
})

RUBY_KEYWORDS = frozenset({
    "if", "elsif", "unless", "while", "until", "for", "case", "when", "def",
    "end", "do", "then", "else", "begin", "rescue", "ensure", "return",
    "yield", "break", "next", "redo", "retry", "super", "self", "nil",
    "true", "false", "and", "or", "not", "alias", "undef", "module",
    "class", "in",
})

_DEFINER = {Language.JAVASCRIPT: "function", Language.RUBY: "def"}

# tokens after which a / starts a regex literal rather than division
_JS_REGEX_PREDECESSORS = frozenset({
    "(", "[", "{", ",", ";", ":", "!", "?", "=>", "=", "==", "===", "!=",
    "!==", "+", "-", "*", "/", "%", "&&", "||", "&", "|", "^", "~", "<",
    ">", "<=", ">=", "return", "typeof", "case", "in", "of", "instanceof",
    "new", "delete", "void", "throw",
})


@dataclass
class SyntaxNode:
    """One node of the uniform tree; ``call`` nodes carry path and arity."""

    kind: str
    line: int = 0
    col: int = 0
    name_path: str | None = None
    argument_count: int | None = None
    children: list["SyntaxNode"] = field(default_factory=list)

    def walk(self):
        """Depth-first preorder over the subtree, self first."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


def parse_source(source: str | bytes, language: Language | str) -> SyntaxNode:
    """Parse one source file into a tree rooted at a ``module`` node."""
    language = Language(language)
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError:
            source = source.decode("latin-1")
    if language is Language.PYTHON:
        return _parse_python(source)
    return _Scanner(source, language).parse()


# ---------------------------------------------------------------------------
# python via stdlib ast
# ---------------------------------------------------------------------------

def _python_call_path(func) -> str | None:
    parts: list[str] = []
    node = func
    while isinstance(node, python_ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, python_ast.Name):
        parts.append(node.id)
    elif parts:
        parts.append("?")
    else:
        return None
    return ".".join(reversed(parts))


def _python_children(anode) -> list[SyntaxNode]:
    out: list[SyntaxNode] = []
    for child in python_ast.iter_child_nodes(anode):
        out.extend(_python_nodes(child))
    return out


def _python_nodes(anode) -> list[SyntaxNode]:
    line = getattr(anode, "lineno", 0)
    col = getattr(anode, "col_offset", 0)
    if isinstance(anode, python_ast.Call):
        node = SyntaxNode(
            "call", line=line, col=col,
            name_path=_python_call_path(anode.func),
            argument_count=len(anode.args) + len(anode.keywords),
        )
        node.children = _python_children(anode)
        return [node]
    if isinstance(anode, python_ast.Attribute):
        node = SyntaxNode(
            "attribute", line=line, col=col,
            name_path=_python_call_path(anode),
        )
        node.children = _python_children(anode)
        return [node]
    if isinstance(anode, python_ast.Name):
        return [SyntaxNode("identifier", line=line, col=col, name_path=anode.id)]
    if isinstance(anode, python_ast.Constant):
        return [SyntaxNode("literal", line=line, col=col)]
    return _python_children(anode)


def _parse_python(text: str) -> SyntaxNode:
    try:
        module = python_ast.parse(text)
    except (SyntaxError, ValueError) as exc:
        line = getattr(exc, "lineno", 0) or 0
        offset = getattr(exc, "offset", 1) or 1
        raise ParseError(f"python parse failed: {exc}", line=line,
                         column=max(0, offset - 1)) from exc
    root = SyntaxNode("module", line=1, col=0)
    root.children = _python_children(module)
    return root


# ---------------------------------------------------------------------------
# javascript / ruby scanner
# ---------------------------------------------------------------------------

@dataclass
class _Token:
    type: str  # ident | connector | punct | string | number | regex | rparen | rbracket
    value: str
    line: int
    col: int


class _Paren:
    __slots__ = ("char", "line", "col", "node", "parent", "commas", "has_content")

    def __init__(self, char: str, line: int, col: int, node, parent):
        self.char = char
        self.line = line
        self.col = col
        self.node = node  # call node owning this "(" or None
        self.parent = parent  # enclosing node for children created inside
        self.commas = 0
        self.has_content = False


_JS_IDENT_RE = re.compile(r"[A-Za-z_$#][A-Za-z0-9_$]*")
_RUBY_IDENT_RE = re.compile(r"(?:@@?|\$)?[A-Za-z_]\w*[?!]?")
_NUMBER_RE = re.compile(r"\d[\w.]*")
_HEREDOC_RE = re.compile(r"<<([-~]?)([\"'`]?)([A-Za-z_]\w*)\2")

_PERCENT_DELIMS = {"(": ")", "[": "]", "{": "}", "<": ">"}


class _Scanner:
    def __init__(self, text: str, language: Language):
        self.text = text
        self.n = len(text)
        self.i = 0
        self.line = 1
        self.col = 0
        self.language = language
        self.root = SyntaxNode("module", line=1, col=0)
        self.parens: list[_Paren] = []
        self.brackets: list[tuple[str, int, int]] = []  # all open brackets
        self.recent: list[_Token] = []  # significant-token history
        self.pending_heredocs: list[tuple[str, bool]] = []
        self.pending_call: SyntaxNode | None = None  # for the JS ")"+"{" rule

    # -- low-level cursor ---------------------------------------------------

    def _advance(self, count: int = 1) -> None:
        for _ in range(count):
            if self.i >= self.n:
                return
            if self.text[self.i] == "\n":
                self.line += 1
                self.col = 0
                if self.pending_heredocs:
                    self.i += 1
                    self._consume_heredocs()
                    continue
            else:
                self.col += 1
            self.i += 1

    def _peek(self, offset: int = 0) -> str:
        pos = self.i + offset
        return self.text[pos] if pos < self.n else ""

    def _fail(self, message: str, line: int | None = None,
              col: int | None = None) -> None:
        raise ParseError(
            message,
            line=self.line if line is None else line,
            column=self.col if col is None else col,
        )

    # -- token bookkeeping ----------------------------------------------------

    def _emit(self, type_: str, value: str, line: int, col: int) -> None:
        # JS definition-body rule: a "{" right after a call's ")" means the
        # "call" was really a method/shorthand definition header.
        if self.pending_call is not None:
            node = self.pending_call
            self.pending_call = None
            if (self.language is Language.JAVASCRIPT
                    and type_ == "punct" and value == "{"):
                self._unmake_call(node)
        if self.parens:
            top = self.parens[-1]
            if type_ == "punct" and value == "," and top.char == "(":
                top.commas += 1
            else:
                top.has_content = True
        self.recent.append(_Token(type_, value, line, col))
        if len(self.recent) > 64:
            del self.recent[0]

    def _unmake_call(self, node: SyntaxNode) -> None:
        parent = self._find_parent(self.root, node)
        if parent is None:
            return
        at = parent.children.index(node)
        parent.children[at:at + 1] = node.children

    def _find_parent(self, current: SyntaxNode, node: SyntaxNode):
        for child in current.children:
            if child is node:
                return current
            found = self._find_parent(child, node)
            if found is not None:
                return found
        return None

    def _last_significant(self) -> _Token | None:
        return self.recent[-1] if self.recent else None

    # -- string/comment/literal skippers ------------------------------------

    def _skip_line_comment(self) -> None:
        while self.i < self.n and self.text[self.i] != "\n":
            self._advance()

    def _skip_block_comment(self) -> None:
        start_line, start_col = self.line, self.col
        self._advance(2)
        while self.i < self.n:
            if self.text.startswith("*/", self.i):
                self._advance(2)
                return
            self._advance()
        self._fail("unterminated block comment", start_line, start_col)

    def _skip_quoted(self, quote: str, allow_newline: bool,
                     interpolate: str | None) -> None:
        """Cursor sits on the opening quote; consume through the closing one.

        ``interpolate`` is the interpolation opener ("#{" or "${") whose body
        is skipped brace-balanced, so quotes inside it cannot end the string.
        """
        start_line, start_col = self.line, self.col
        self._advance()
        while self.i < self.n:
            ch = self.text[self.i]
            if ch == "\\":
                self._advance(2)
                continue
            if ch == quote:
                self._advance()
                return
            if ch == "\n" and not allow_newline:
                self._fail("unterminated string literal", start_line, start_col)
            if interpolate and self.text.startswith(interpolate, self.i):
                self._advance(2)
                self._skip_balanced_braces()
                continue
            self._advance()
        self._fail("unterminated string literal", start_line, start_col)

    def _skip_balanced_braces(self) -> None:
        """Skip an interpolation body up to its matching ``}``."""
        depth = 1
        while self.i < self.n and depth:
            ch = self.text[self.i]
            if ch == "\\":
                self._advance(2)
                continue
            if ch in "'\"`":
                self._skip_quoted(ch, allow_newline=True, interpolate=None)
                continue
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
            self._advance()
        if depth:
            self._fail("unterminated interpolation")

    def _skip_js_regex(self) -> None:
        start_line, start_col = self.line, self.col
        self._advance()
        in_class = False
        while self.i < self.n:
            ch = self.text[self.i]
            if ch == "\\":
                self._advance(2)
                continue
            if ch == "\n":
                self._fail("unterminated regex literal", start_line, start_col)
            if ch == "[":
                in_class = True
            elif ch == "]":
                in_class = False
            elif ch == "/" and not in_class:
                self._advance()
                while self.i < self.n and self.text[self.i].isalpha():
                    self._advance()
                return
            self._advance()
        self._fail("unterminated regex literal", start_line, start_col)

    def _skip_percent_literal(self) -> None:
        start_line, start_col = self.line, self.col
        self._advance()  # %
        if self._peek().isalpha():
            self._advance()
        opener = self._peek()
        closer = _PERCENT_DELIMS.get(opener, opener)
        paired = opener in _PERCENT_DELIMS
        self._advance()
        depth = 1
        while self.i < self.n:
            ch = self.text[self.i]
            if ch == "\\":
                self._advance(2)
                continue
            if paired and ch == opener:
                depth += 1
            elif ch == closer:
                depth -= 1
                if depth == 0:
                    self._advance()
                    return
            self._advance()
        self._fail("unterminated percent literal", start_line, start_col)

    def _consume_heredocs(self) -> None:
        """Cursor sits at the start of the line after heredoc openers."""
        while self.pending_heredocs:
            terminator, _squiggly = self.pending_heredocs.pop(0)
            found = False
            while self.i < self.n:
                end = self.text.find("\n", self.i)
                if end == -1:
                    end = self.n
                body_line = self.text[self.i:end]
                self.i = min(end + 1, self.n)
                self.line += 1
                self.col = 0
                if body_line.strip() == terminator:
                    found = True
                    break
            if not found:
                self._fail("unterminated heredoc")

    def _maybe_heredoc(self) -> bool:
        match = _HEREDOC_RE.match(self.text, self.i)
        if not match:
            return False
        squiggly = match.group(1) in ("-", "~")
        terminator = match.group(3)
        if not squiggly:
            prev = self._last_significant()
            after_value = prev is not None and prev.type in (
                "ident", "number", "string", "rparen", "rbracket",
            )
            if after_value and not terminator.isupper():
                return False  # a << b shift
        self._emit("string", "<<HEREDOC", self.line, self.col)
        self._advance(match.end() - self.i)
        self.pending_heredocs.append((terminator, squiggly))
        return True

    # -- call construction ----------------------------------------------------

    def _current_parent(self) -> SyntaxNode:
        for entry in reversed(self.parens):
            if entry.node is not None:
                return entry.node
        return self.root

    def _path_before_paren(self):
        """Walk recent tokens backward from an ident adjacent to ``(``.

        Returns (path, first_token) or None when the tokens do not form a
        callable path.
        """
        toks = self.recent
        j = len(toks) - 1
        if j < 0 or toks[j].type != "ident":
            return None
        segments = [toks[j].value]
        first = toks[j]
        j -= 1
        unresolved = False
        while j >= 0 and toks[j].type == "connector":
            if j - 1 >= 0 and toks[j - 1].type == "ident":
                segments.append(toks[j - 1].value)
                first = toks[j - 1]
                j -= 2
            else:
                unresolved = True
                break
        path = ".".join(reversed(segments))
        if unresolved:
            path = "?." + path
        else:
            definer = _DEFINER[self.language]
            if j >= 0 and toks[j].type == "ident" and toks[j].value == definer:
                return None  # function/def header, not a call
            keywords = (JS_KEYWORDS if self.language is Language.JAVASCRIPT
                        else RUBY_KEYWORDS)
            if len(segments) == 1 and segments[0] in keywords:
                return None
        return path, first

    def _open_paren(self) -> None:
        line, col = self.line, self.col
        node = None
        prev = self._last_significant()
        if prev is not None and prev.type == "ident" and prev.line == line:
            found = self._path_before_paren()
            if found is not None:
                path, first = found
                node = SyntaxNode("call", line=first.line, col=first.col,
                                  name_path=path, argument_count=0)
                self._current_parent().children.append(node)
        self._emit("punct", "(", line, col)
        entry = _Paren("(", line, col, node, self._current_parent())
        self.parens.append(entry)
        self.brackets.append(("(", line, col))

    def _close_bracket(self, ch: str) -> None:
        expected = {")": "(", "]": "[", "}": "{"}[ch]
        if not self.brackets or self.brackets[-1][0] != expected:
            self._fail(f"unbalanced '{ch}'")
        self.brackets.pop()
        line, col = self.line, self.col
        if ch == ")":
            entry = self.parens.pop()
            if entry.node is not None:
                if entry.has_content:
                    entry.node.argument_count = entry.commas + 1
                else:
                    entry.node.argument_count = 0
                self._emit("rparen", ")", line, col)
                self.pending_call = entry.node
                self._advance()
                return
            self._emit("rparen", ")", line, col)
        elif ch == "]":
            self.parens.pop()
            self._emit("rbracket", "]", line, col)
        else:
            self.parens.pop()
            self._emit("punct", "}", line, col)
        self._advance()

    # -- main loop ------------------------------------------------------------

    def parse(self) -> SyntaxNode:
        text = self.text
        if text.startswith("#!"):
            self._skip_line_comment()
        is_js = self.language is Language.JAVASCRIPT
        ident_re = _JS_IDENT_RE if is_js else _RUBY_IDENT_RE

        while self.i < self.n:
            ch = text[self.i]

            if ch in " \t\r\n":
                self._advance()
                continue

            if is_js and ch == "/" and self._peek(1) == "/":
                self._skip_line_comment()
                continue
            if is_js and ch == "/" and self._peek(1) == "*":
                self._skip_block_comment()
                continue
            if not is_js and ch == "#":
                self._skip_line_comment()
                continue
            if not is_js and self.col == 0 and text.startswith("=begin", self.i):
                end = text.find("\n=end", self.i)
                if end == -1:
                    self._fail("unterminated =begin comment")
                self._advance(end + 1 - self.i)
                self._skip_line_comment()
                continue

            if ch in "'\"":
                line, col = self.line, self.col
                interpolate = None
                if is_js:
                    allow_newline = False
                else:
                    allow_newline = True
                    interpolate = "#{" if ch == '"' else None
                self._skip_quoted(ch, allow_newline, interpolate)
                self._emit("string", ch, line, col)
                continue
            if is_js and ch == "`":
                line, col = self.line, self.col
                self._skip_quoted("`", allow_newline=True, interpolate="${")
                self._emit("string", "`", line, col)
                continue
            if not is_js and ch == "`":
                line, col = self.line, self.col
                self._skip_quoted("`", allow_newline=True, interpolate="#{")
                self._emit("string", "`", line, col)
                continue

            if ch == "/":
                prev = self._last_significant()
                prev_value = prev.value if prev else None
                regex_ok = prev is None or prev.type in ("punct", "connector") \
                    or prev_value in _JS_REGEX_PREDECESSORS
                if prev is not None and prev.type in ("ident", "number",
                                                      "rparen", "rbracket",
                                                      "string", "regex"):
                    regex_ok = prev_value in _JS_REGEX_PREDECESSORS
                if regex_ok:
                    line, col = self.line, self.col
                    self._skip_js_regex()
                    self._emit("regex", "/", line, col)
                else:
                    self._emit("punct", "/", self.line, self.col)
                    self._advance()
                continue

            if not is_js and ch == "%":
                prev = self._last_significant()
                operand_before = prev is not None and prev.type in (
                    "ident", "number", "rparen", "rbracket", "string",
                )
                nxt = self._peek(1)
                literal_start = (nxt.isalpha() and self._peek(2) in
                                 "([{<|!/\"'~^") or nxt in "([{<|!"
                if literal_start and not operand_before:
                    line, col = self.line, self.col
                    self._skip_percent_literal()
                    self._emit("string", "%", line, col)
                    continue
                self._emit("punct", "%", self.line, self.col)
                self._advance()
                continue

            if not is_js and ch == "<" and self._peek(1) == "<":
                if self._maybe_heredoc():
                    continue
                self._emit("punct", "<<", self.line, self.col)
                self._advance(2)
                continue

            if ch == "(":
                self._open_paren()
                self._advance()
                continue
            if ch in "[{":
                self.brackets.append((ch, self.line, self.col))
                # emit first so the bracket marks the enclosing group's
                # content, then shield inner commas from any outer call
                self._emit("punct", ch, self.line, self.col)
                self.parens.append(
                    _Paren(ch, self.line, self.col, None,
                           self._current_parent())
                )
                self._advance()
                continue
            if ch in ")]}":
                self._close_bracket(ch)
                continue

            if is_js and ch == "?" and self._peek(1) == ".":
                self._emit("connector", "?.", self.line, self.col)
                self._advance(2)
                continue
            if not is_js and ch == ":" and self._peek(1) == ":":
                self._emit("connector", "::", self.line, self.col)
                self._advance(2)
                continue
            if not is_js and ch == ":":
                nxt = self._peek(1)
                if nxt.isalpha() or nxt == "_" or nxt in "\"'":
                    # symbol; swallow the tag so ":foo" is not an ident
                    self._emit("string", ":", self.line, self.col)
                    self._advance()
                    if self._peek() in "\"'":
                        self._skip_quoted(self._peek(), True, None)
                    else:
                        match = _RUBY_IDENT_RE.match(self.text, self.i)
                        if match:
                            self._advance(match.end() - self.i)
                    continue
                self._emit("punct", ":", self.line, self.col)
                self._advance()
                continue
            if ch == ".":
                if self._peek(1).isdigit():
                    match = _NUMBER_RE.match(self.text, self.i + 1)
                    length = 1 + (match.end() - match.start() if match else 0)
                    self._emit("number", self.text[self.i:self.i + length],
                               self.line, self.col)
                    self._advance(length)
                    continue
                self._emit("connector", ".", self.line, self.col)
                self._advance()
                continue

            if ch.isdigit():
                match = _NUMBER_RE.match(self.text, self.i)
                self._emit("number", match.group(), self.line, self.col)
                self._advance(match.end() - self.i)
                continue

            match = ident_re.match(self.text, self.i)
            if match:
                self._emit("ident", match.group(), self.line, self.col)
                self._advance(match.end() - self.i)
                continue

            if not is_js and ch == "?" and self._peek(1) not in (" ", "\t", ""):
                prev = self._last_significant()
                if prev is None or prev.type in ("punct", "connector"):
                    self._advance(2)  # character literal like ?a
                    continue

            # multi-char operators that matter for the regex heuristic
            for op in ("===", "!==", "==", "!=", "<=", ">=", "&&", "||",
                       "=>", "**"):
                if self.text.startswith(op, self.i):
                    self._emit("punct", op, self.line, self.col)
                    self._advance(len(op))
                    break
            else:
                self._emit("punct", ch, self.line, self.col)
                self._advance()

        if self.pending_heredocs:
            self._fail("unterminated heredoc")
        if self.brackets:
            char, line, col = self.brackets[0]
            raise ParseError(f"unclosed '{char}'", line=line, column=col)
        return self.root
