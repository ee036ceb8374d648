"""CSS selector engine for the bundled DOM.

Covers the subset the blueprint vocabulary needs: type/universal/id/class
selectors, the full attribute operator set, descendant/child/sibling
combinators, comma groups, structural pseudo-classes (first/last/nth of
child and type), ``:not()``, and the scraping-convention ``:contains("...")``
text pseudo-class used by text-tier strategies.

Expressions are parsed once into an AST and matched right-to-left, the
same strategy browsers use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .dom import Document, Element, Node, normalized_text


class SelectorError(ValueError):
    """Raised for selector expressions outside the supported grammar."""


_IDENT_RE = re.compile(r"[A-Za-z_][-A-Za-z0-9_]*|-[-A-Za-z_][-A-Za-z0-9_]*")
_NTH_RE = re.compile(r"^(?:(odd)|(even)|([+-]?\d+)|([+-]?\d*)n(?:\s*([+-])\s*(\d+))?)$")


@dataclass(frozen=True)
class AttrTest:
    name: str
    op: Optional[str] = None  # =, ~=, |=, ^=, $=, *=
    value: Optional[str] = None


@dataclass(frozen=True)
class NthTest:
    a: int
    b: int
    of_type: bool = False
    from_end: bool = False

    def matches_index(self, index: int) -> bool:
        # index is 1-based position among the relevant siblings
        diff = index - self.b
        if self.a == 0:
            return diff == 0
        return diff % self.a == 0 and diff // self.a >= 0


@dataclass(frozen=True)
class Compound:
    tag: Optional[str] = None  # None means universal
    ids: tuple[str, ...] = ()
    classes: tuple[str, ...] = ()
    attrs: tuple[AttrTest, ...] = ()
    nths: tuple[NthTest, ...] = ()
    contains: tuple[str, ...] = ()
    negations: tuple["Compound", ...] = ()


@dataclass(frozen=True)
class Complex:
    """Compounds joined by combinators; ``combinators[i]`` sits before
    ``compounds[i + 1]``."""

    compounds: tuple[Compound, ...]
    combinators: tuple[str, ...]  # " ", ">", "+", "~"


@dataclass
class _Cursor:
    text: str
    pos: int = 0

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> bool:
        start = self.pos
        while not self.eof() and self.text[self.pos].isspace():
            self.pos += 1
        return self.pos > start

    def ident(self) -> str:
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            raise SelectorError(f"expected identifier at offset {self.pos} in {self.text!r}")
        self.pos = m.end()
        return m.group(0)


def parse_selector(expression: str) -> tuple[Complex, ...]:
    """Parse a selector list into alternatives. Raises SelectorError."""
    cur = _Cursor(expression)
    alternatives = [_parse_complex(cur)]
    cur.skip_ws()
    while cur.peek() == ",":
        cur.pos += 1
        alternatives.append(_parse_complex(cur))
        cur.skip_ws()
    if not cur.eof():
        raise SelectorError(f"unexpected {cur.peek()!r} at offset {cur.pos} in {expression!r}")
    return tuple(alternatives)


def _parse_complex(cur: _Cursor) -> Complex:
    cur.skip_ws()
    compounds = [_parse_compound(cur)]
    combinators: list[str] = []
    while True:
        had_ws = cur.skip_ws()
        ch = cur.peek()
        if ch in (">", "+", "~"):
            cur.pos += 1
            cur.skip_ws()
            combinators.append(ch)
        elif had_ws and ch not in ("", ","):
            combinators.append(" ")
        else:
            break
        compounds.append(_parse_compound(cur))
    return Complex(tuple(compounds), tuple(combinators))


def _parse_compound(cur: _Cursor) -> Compound:
    tag: Optional[str] = None
    ids: list[str] = []
    classes: list[str] = []
    attrs: list[AttrTest] = []
    nths: list[NthTest] = []
    contains: list[str] = []
    negations: list[Compound] = []
    matched_anything = False

    if cur.peek() == "*":
        cur.pos += 1
        matched_anything = True
    elif _IDENT_RE.match(cur.text, cur.pos):
        tag = cur.ident().lower()
        matched_anything = True

    while True:
        ch = cur.peek()
        if ch == "#":
            cur.pos += 1
            ids.append(cur.ident())
        elif ch == ".":
            cur.pos += 1
            classes.append(cur.ident())
        elif ch == "[":
            attrs.append(_parse_attr(cur))
        elif ch == ":":
            cur.pos += 1
            if cur.peek() == ":":
                raise SelectorError("pseudo-elements are not supported")
            name = cur.ident().lower()
            arg = _parse_pseudo_arg(cur) if cur.peek() == "(" else None
            _apply_pseudo(name, arg, nths, contains, negations)
        else:
            break
        matched_anything = True

    if not matched_anything:
        raise SelectorError(f"empty compound selector at offset {cur.pos} in {cur.text!r}")
    return Compound(tag, tuple(ids), tuple(classes), tuple(attrs), tuple(nths),
                    tuple(contains), tuple(negations))


def _parse_attr(cur: _Cursor) -> AttrTest:
    assert cur.peek() == "["
    cur.pos += 1
    cur.skip_ws()
    name = cur.ident().lower()
    cur.skip_ws()
    ch = cur.peek()
    if ch == "]":
        cur.pos += 1
        return AttrTest(name)
    op = ""
    if ch in ("~", "|", "^", "$", "*"):
        op = ch
        cur.pos += 1
    if cur.peek() != "=":
        raise SelectorError(f"expected '=' in attribute selector at offset {cur.pos}")
    cur.pos += 1
    op += "="
    op = "=" if op == "=" else op
    cur.skip_ws()
    value = _parse_attr_value(cur)
    cur.skip_ws()
    if cur.peek() != "]":
        raise SelectorError(f"expected ']' at offset {cur.pos} in {cur.text!r}")
    cur.pos += 1
    return AttrTest(name, op, value)


def _parse_attr_value(cur: _Cursor) -> str:
    ch = cur.peek()
    if ch in ('"', "'"):
        quote = ch
        cur.pos += 1
        start = cur.pos
        while not cur.eof() and cur.peek() != quote:
            if cur.peek() == "\\":
                cur.pos += 1
            cur.pos += 1
        if cur.eof():
            raise SelectorError("unterminated quoted value")
        raw = cur.text[start:cur.pos]
        cur.pos += 1
        return raw.replace("\\" + quote, quote).replace("\\\\", "\\")
    start = cur.pos
    while not cur.eof() and cur.peek() not in ("]",) and not cur.peek().isspace():
        cur.pos += 1
    if cur.pos == start:
        raise SelectorError(f"empty attribute value at offset {cur.pos}")
    return cur.text[start:cur.pos]


def _parse_pseudo_arg(cur: _Cursor) -> str:
    assert cur.peek() == "("
    cur.pos += 1
    depth = 1
    start = cur.pos
    while not cur.eof():
        ch = cur.peek()
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                arg = cur.text[start:cur.pos]
                cur.pos += 1
                return arg
        elif ch in ('"', "'"):
            quote = ch
            cur.pos += 1
            while not cur.eof() and cur.peek() != quote:
                if cur.peek() == "\\":
                    cur.pos += 1
                cur.pos += 1
        cur.pos += 1
    raise SelectorError("unterminated pseudo-class argument")


def _apply_pseudo(name: str, arg: Optional[str], nths: list[NthTest],
                  contains: list[str], negations: list[Compound]) -> None:
    if name == "first-child":
        nths.append(NthTest(0, 1))
    elif name == "last-child":
        nths.append(NthTest(0, 1, from_end=True))
    elif name == "first-of-type":
        nths.append(NthTest(0, 1, of_type=True))
    elif name == "last-of-type":
        nths.append(NthTest(0, 1, of_type=True, from_end=True))
    elif name in ("nth-child", "nth-of-type", "nth-last-child", "nth-last-of-type"):
        if arg is None:
            raise SelectorError(f":{name} requires an argument")
        a, b = _parse_nth(arg.strip())
        nths.append(NthTest(a, b, of_type="of-type" in name, from_end="last" in name))
    elif name == "contains":
        if arg is None:
            raise SelectorError(":contains requires an argument")
        contains.append(_strip_quotes(arg.strip()))
    elif name == "not":
        if arg is None:
            raise SelectorError(":not requires an argument")
        inner = _Cursor(arg.strip())
        negations.append(_parse_compound(inner))
        inner.skip_ws()
        if not inner.eof():
            raise SelectorError(":not accepts a single compound selector")
    else:
        raise SelectorError(f"unsupported pseudo-class :{name}")


def _strip_quotes(text: str) -> str:
    if len(text) >= 2 and text[0] in ('"', "'") and text[-1] == text[0]:
        return text[1:-1]
    return text


def _parse_nth(arg: str) -> tuple[int, int]:
    m = _NTH_RE.match(arg.replace(" ", ""))
    if not m:
        raise SelectorError(f"bad nth expression {arg!r}")
    odd, even, pure, a_part, sign, b_part = m.groups()
    if odd:
        return 2, 1
    if even:
        return 2, 0
    if pure is not None:
        return 0, int(pure)
    a = 1 if a_part in ("", "+") else -1 if a_part == "-" else int(a_part)
    b = int(b_part) if b_part else 0
    if sign == "-":
        b = -b
    return a, b


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


def _attr_matches(el: Element, test: AttrTest) -> bool:
    if not el.has_attr(test.name):
        return False
    if test.op is None:
        return True
    value = el.get(test.name) or ""
    want = test.value or ""
    if test.op == "=":
        return value == want
    if test.op == "~=":
        return want in value.split()
    if test.op == "|=":
        return value == want or value.startswith(want + "-")
    if test.op == "^=":
        return bool(want) and value.startswith(want)
    if test.op == "$=":
        return bool(want) and value.endswith(want)
    if test.op == "*=":
        return bool(want) and want in value
    return False


def _sibling_index(el: Element, of_type: bool, from_end: bool) -> int:
    parent = el.parent
    if parent is None:
        return 1
    siblings = [c for c in parent.children
                if isinstance(c, Element) and (not of_type or c.tag == el.tag)]
    if from_end:
        siblings = list(reversed(siblings))
    return siblings.index(el) + 1


def _compound_matches(el: Element, c: Compound) -> bool:
    if c.tag is not None and el.tag != c.tag:
        return False
    for id_ in c.ids:
        if el.get("id") != id_:
            return False
    if c.classes:
        have = el.classes()
        if any(cls not in have for cls in c.classes):
            return False
    for test in c.attrs:
        if not _attr_matches(el, test):
            return False
    for nth in c.nths:
        if not nth.matches_index(_sibling_index(el, nth.of_type, nth.from_end)):
            return False
    for needle in c.contains:
        if needle not in normalized_text(el):
            return False
    for neg in c.negations:
        if _compound_matches(el, neg):
            return False
    return True


def _complex_matches(el: Element, cx: Complex) -> bool:
    return _matches_from(el, cx, len(cx.compounds) - 1)


def _matches_from(el: Element, cx: Complex, idx: int) -> bool:
    if not _compound_matches(el, cx.compounds[idx]):
        return False
    if idx == 0:
        return True
    combinator = cx.combinators[idx - 1]
    if combinator == ">":
        parent = el.parent
        return (parent is not None and not isinstance(parent, Document)
                and _matches_from(parent, cx, idx - 1))
    if combinator == " ":
        ancestor = el.parent
        while ancestor is not None and not isinstance(ancestor, Document):
            if _matches_from(ancestor, cx, idx - 1):
                return True
            ancestor = ancestor.parent
        return False
    # sibling combinators
    parent = el.parent
    if parent is None:
        return False
    siblings = parent.child_elements()
    pos = siblings.index(el)
    if combinator == "+":
        return pos > 0 and _matches_from(siblings[pos - 1], cx, idx - 1)
    for prev in siblings[:pos]:
        if _matches_from(prev, cx, idx - 1):
            return True
    return False


def matches(el: Element, expression: str) -> bool:
    """True when *el* matches any alternative of *expression*."""
    return any(_complex_matches(el, cx) for cx in parse_selector(expression))


def query(root: Element, expression: str, scope: Optional[Element] = None) -> list[Element]:
    """All elements matching *expression*, in document order.

    With *scope*, only descendants of *scope* are returned while ancestor
    combinators may still reach outside it, mirroring
    ``element.querySelectorAll``.
    """
    alternatives = parse_selector(expression)
    search_root = scope if scope is not None else root
    found: list[Element] = []
    for el in search_root.iter_elements():
        if any(_complex_matches(el, cx) for cx in alternatives):
            found.append(el)
    return found
