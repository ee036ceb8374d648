"""Lightweight DOM built on the stdlib ``html.parser``.

Gives the rest of the toolkit a parse -> traverse -> serialize loop with
browser-style leniency: malformed markup is repaired, never rejected.
No external HTML library is required, which keeps parsing a pure function
of the input string.
"""

from __future__ import annotations

from html import escape
from html.parser import HTMLParser
from typing import Iterator, Optional

VOID_ELEMENTS = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
}

# Opening one of these while the same tag is open implies closing the
# previous one (subset of the HTML5 implied-end-tag rules that matters
# for real-world listing/form markup).
# Start tag -> open-element tags it implicitly closes (approximates the
# HTML5 "has an element in scope" rules for the common offenders).
_IMPLIED_CLOSERS: dict[str, frozenset[str]] = {
    "p": frozenset({"p"}),
    "li": frozenset({"li"}),
    "option": frozenset({"option"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "tr": frozenset({"tr", "td", "th"}),
    "td": frozenset({"td", "th"}),
    "th": frozenset({"td", "th"}),
    "thead": frozenset({"tr", "td", "th"}),
    "tbody": frozenset({"tr", "td", "th", "thead"}),
    "tfoot": frozenset({"tr", "td", "th", "tbody"}),
}

# Raw-text elements whose content must not be entity-decoded or re-escaped.
RAW_TEXT_ELEMENTS = {"script", "style"}


class Node:
    """Base class for everything hanging off a :class:`Document`."""

    __slots__ = ("parent",)

    def __init__(self) -> None:
        self.parent: Optional[Element] = None


class Text(Node):
    __slots__ = ("data",)

    def __init__(self, data: str) -> None:
        super().__init__()
        self.data = data

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Text({self.data!r})"


class Comment(Node):
    __slots__ = ("data",)

    def __init__(self, data: str) -> None:
        super().__init__()
        self.data = data

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Comment({self.data!r})"


class Element(Node):
    """An element node.

    Attribute values are stored as strings; a bare boolean attribute
    (``<div hidden>``) is stored as ``None`` and serialized back without
    a value.
    """

    __slots__ = ("tag", "attrs", "children")

    def __init__(self, tag: str, attrs: Optional[dict[str, Optional[str]]] = None) -> None:
        super().__init__()
        self.tag = tag
        self.attrs: dict[str, Optional[str]] = attrs if attrs is not None else {}
        self.children: list[Node] = []

    def append(self, node: Node) -> None:
        node.parent = self
        self.children.append(node)

    def get(self, name: str, default: Optional[str] = None) -> Optional[str]:
        """Attribute value; bare attributes read as empty string."""
        if name not in self.attrs:
            return default
        value = self.attrs[name]
        return "" if value is None else value

    def has_attr(self, name: str) -> bool:
        return name in self.attrs

    def classes(self) -> list[str]:
        value = self.get("class")
        return value.split() if value else []

    def iter_elements(self) -> Iterator["Element"]:
        """Depth-first document-order iteration over descendant elements."""
        for child in self.children:
            if isinstance(child, Element):
                yield child
                yield from child.iter_elements()

    def child_elements(self) -> list["Element"]:
        return [c for c in self.children if isinstance(c, Element)]

    def text_content(self) -> str:
        parts: list[str] = []
        _collect_text(self, parts)
        return "".join(parts)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<{self.tag} {self.attrs!r}>"


class Document(Element):
    """Root node; serializes to the concatenation of its children."""

    def __init__(self) -> None:
        super().__init__("#document")


def _collect_text(el: Element, out: list[str]) -> None:
    for child in el.children:
        if isinstance(child, Text):
            out.append(child.data)
        elif isinstance(child, Element):
            _collect_text(child, out)


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = Document()
        self.stack: list[Element] = [self.root]

    # -- helpers -------------------------------------------------------

    def _top(self) -> Element:
        return self.stack[-1]

    def _open(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> Element:
        attr_map: dict[str, Optional[str]] = {}
        for name, value in attrs:
            name = name.lower()
            if name not in attr_map:  # first occurrence wins, as in browsers
                attr_map[name] = value
        el = Element(tag, attr_map)
        self._top().append(el)
        return el

    # -- HTMLParser callbacks ------------------------------------------

    def handle_starttag(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> None:
        tag = tag.lower()
        closers = _IMPLIED_CLOSERS.get(tag)
        if closers:
            while len(self.stack) > 1 and self._top().tag in closers:
                self.stack.pop()
        el = self._open(tag, attrs)
        if tag not in VOID_ELEMENTS:
            self.stack.append(el)

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> None:
        self._open(tag.lower(), attrs)

    def handle_endtag(self, tag: str) -> None:
        tag = tag.lower()
        if tag in VOID_ELEMENTS:
            return
        # Pop to the matching open element; ignore stray end tags.
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return

    def handle_data(self, data: str) -> None:
        if data:
            self._top().append(Text(data))

    def handle_comment(self, data: str) -> None:
        self._top().append(Comment(data))

    def handle_decl(self, decl: str) -> None:
        # Doctype carries no automation signal; dropped.
        pass

    def error(self, message: str) -> None:  # pragma: no cover - py<3.10 compat hook
        pass


def parse(html: str) -> Document:
    """Parse *html* into a :class:`Document`. Never raises on bad markup."""
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    return builder.root


def serialize(node: Node) -> str:
    """Serialize a node (document, element, or text) back to HTML."""
    out: list[str] = []
    _write(node, out)
    return "".join(out)


def _write(node: Node, out: list[str]) -> None:
    if isinstance(node, Document):
        for child in node.children:
            _write(child, out)
        return
    if isinstance(node, Text):
        raw = node.parent is not None and node.parent.tag in RAW_TEXT_ELEMENTS
        out.append(node.data if raw else escape(node.data, quote=False))
        return
    if isinstance(node, Comment):
        out.append(f"<!--{node.data}-->")
        return
    assert isinstance(node, Element)
    out.append(f"<{node.tag}")
    for name, value in node.attrs.items():
        if value is None:
            out.append(f" {name}")
        else:
            out.append(f' {name}="{escape(value, quote=True)}"')
    out.append(">")
    if node.tag in VOID_ELEMENTS:
        return
    for child in node.children:
        _write(child, out)
    out.append(f"</{node.tag}>")


def clone(node: Node) -> Node:
    """Deep copy of a subtree (parent link of the copy is cleared)."""
    if isinstance(node, Text):
        return Text(node.data)
    if isinstance(node, Comment):
        return Comment(node.data)
    assert isinstance(node, Element)
    copy = Document() if isinstance(node, Document) else Element(node.tag, dict(node.attrs))
    for child in node.children:
        copy.append(clone(child))
    return copy


def normalized_text(el: Element) -> str:
    """Text content with whitespace runs collapsed and ends trimmed."""
    return " ".join(el.text_content().split())
