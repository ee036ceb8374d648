"""DOM sanitization: raw HTML -> token-budgeted semantic skeleton.

Three passes applied in one traversal:

1. noise pruning -- script/style/svg/noscript/iframe subtrees, comments,
   and oversized ``data:`` URI attribute values;
2. visibility filtering -- inline ``display:none`` / ``visibility:hidden``,
   the ``hidden`` attribute, and ``aria-hidden="true"`` subtrees;
3. attribute cleansing -- everything outside the allowlist is dropped and
   class lists are reduced to their semantic members.

Visibility is judged from the HTML string alone (no stylesheet cascade),
so sanitization stays a pure function.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

from . import dom
from .dom import Comment, Document, Element, Node, Text

ClassLabel = Literal["semantic", "utility"]

DEFAULT_PRUNED_TAGS = frozenset({"script", "style", "svg", "noscript", "iframe"})

# Names plus prefixes (trailing "-" marks a prefix). "content" is kept so
# meta generator tags survive for stack-fingerprinting workflows.
DEFAULT_ATTRIBUTE_ALLOWLIST = frozenset({
    "data-", "aria-",
    "id", "name", "role", "href", "type", "placeholder", "value", "alt", "title",
    "content", "for", "action", "method",
})


@dataclass(frozen=True)
class PatternRule:
    """One ordered class-policy rule: first matching pattern wins."""

    pattern: str
    label: ClassLabel

    def compiled(self) -> re.Pattern[str]:
        return re.compile(self.pattern)


# Order matters: BEM shapes are semantic before any utility rule can fire;
# unmatched names default to semantic so stable-class selectors keep working.
DEFAULT_CLASS_POLICY: tuple[PatternRule, ...] = (
    PatternRule(r".*(__|--).*", "semantic"),
    PatternRule(r".*[\[\]:].*", "utility"),
    PatternRule(r".*-(\d+(\.\d+)?|px|full|auto|screen)$", "utility"),
    PatternRule(
        r"^(flex|grid|block|inline|inline-block|hidden|relative|absolute|fixed|sticky|"
        r"static|container|row|col|wrap|nowrap|truncate|italic|underline|uppercase|"
        r"lowercase|capitalize|antialiased|border|rounded|shadow|transition|transform|"
        r"clearfix|center)$",
        "utility",
    ),
    PatternRule(
        r"^(m|p)(t|r|b|l|x|y)?-|^(w|h|min-w|max-w|min-h|max-h|gap|space|inset|top|right|"
        r"bottom|left|z|order|grow|shrink|basis|col|row)-|^(text|bg|font|leading|tracking|"
        r"justify|items|content|self|place|overflow|object|opacity|ring|outline|divide|"
        r"align|float|clear|duration|ease|delay|animate|cursor|select|resize|scroll|snap|"
        r"touch|fill|stroke|sr|d|position|v)-",
        "utility",
    ),
)

_HIDDEN_STYLE_RE = re.compile(r"(display\s*:\s*none|visibility\s*:\s*hidden)", re.IGNORECASE)
_DATA_URI_RE = re.compile(r"^\s*data:", re.IGNORECASE)


class ConfigError(ValueError):
    """Raised for sanitizer configs violating their invariants."""


@dataclass(frozen=True)
class SanitizerConfig:
    pruned_tags: frozenset[str] = DEFAULT_PRUNED_TAGS
    attribute_allowlist: frozenset[str] = DEFAULT_ATTRIBUTE_ALLOWLIST
    class_policy: tuple[PatternRule, ...] = DEFAULT_CLASS_POLICY
    max_data_uri_chars: int = 256
    token_chars_ratio: int = 4
    # Open design point surfaced as config: inputs with type="hidden" are
    # treated as hidden elements by default.
    drop_hidden_inputs: bool = True

    def __post_init__(self) -> None:
        required_tags = {"script", "style", "svg", "noscript"}
        if not self.pruned_tags or not required_tags <= set(self.pruned_tags):
            raise ConfigError(f"pruned_tags must include {sorted(required_tags)}")
        required_attrs = {"data-", "aria-", "id", "name", "role", "href", "type",
                          "placeholder", "value", "alt", "title"}
        if not required_attrs <= set(self.attribute_allowlist):
            missing = sorted(required_attrs - set(self.attribute_allowlist))
            raise ConfigError(f"attribute_allowlist missing required entries: {missing}")
        if self.token_chars_ratio < 1:
            raise ConfigError("token_chars_ratio must be >= 1")
        if self.max_data_uri_chars < 0:
            raise ConfigError("max_data_uri_chars must be >= 0")

    def allows_attribute(self, name: str) -> bool:
        name = name.lower()
        if name in self.attribute_allowlist:
            return True
        return any(name.startswith(entry) for entry in self.attribute_allowlist
                   if entry.endswith("-"))

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> "SanitizerConfig":
        raw = json.loads(Path(path).read_text())
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "SanitizerConfig":
        kwargs: dict = {}
        if "pruned_tags" in raw:
            kwargs["pruned_tags"] = frozenset(t.lower() for t in raw["pruned_tags"])
        if "attribute_allowlist" in raw:
            kwargs["attribute_allowlist"] = frozenset(a.lower() for a in raw["attribute_allowlist"])
        if "class_policy" in raw:
            kwargs["class_policy"] = tuple(
                PatternRule(rule["pattern"], rule["label"]) for rule in raw["class_policy"]
            )
        for key in ("max_data_uri_chars", "token_chars_ratio", "drop_hidden_inputs"):
            if key in raw:
                kwargs[key] = raw[key]
        return cls(**kwargs)


@dataclass(frozen=True)
class SanitizeStats:
    nodes_in: int
    nodes_out: int
    chars_in: int
    chars_out: int
    est_tokens_in: int
    est_tokens_out: int
    reduction_ratio: float

    def to_dict(self) -> dict:
        return {
            "nodes_in": self.nodes_in,
            "nodes_out": self.nodes_out,
            "chars_in": self.chars_in,
            "chars_out": self.chars_out,
            "est_tokens_in": self.est_tokens_in,
            "est_tokens_out": self.est_tokens_out,
            "reduction_ratio": self.reduction_ratio,
        }


@dataclass(frozen=True)
class SanitizedSkeleton:
    html: str
    stats: SanitizeStats


def estimate_tokens(text: str, ratio: int) -> int:
    """Ceiling of character count / ratio; the configurable stand-in for a
    model tokenizer."""
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    return -(-len(text) // ratio)


def classify_class(name: str, policy: tuple[PatternRule, ...] = DEFAULT_CLASS_POLICY) -> ClassLabel:
    """Label one class token. First matching policy rule wins; names no
    rule claims are kept as semantic."""
    for rule in policy:
        if rule.compiled().search(name):
            return rule.label
    return "semantic"


def _is_noise(node: Node, config: SanitizerConfig) -> bool:
    if isinstance(node, Comment):
        return True
    return isinstance(node, Element) and node.tag in config.pruned_tags


def _is_hidden(el: Element, config: SanitizerConfig) -> bool:
    style = el.get("style")
    if style and _HIDDEN_STYLE_RE.search(style):
        return True
    if el.has_attr("hidden"):
        return True
    if el.get("aria-hidden") == "true":
        return True
    if (config.drop_hidden_inputs and el.tag == "input"
            and (el.get("type") or "").lower() == "hidden"):
        return True
    return False


def _cleansed_attrs(el: Element, config: SanitizerConfig) -> dict[str, Optional[str]]:
    kept: dict[str, Optional[str]] = {}
    for name, value in el.attrs.items():
        if name == "class":
            semantic = [c for c in (value or "").split()
                        if classify_class(c, config.class_policy) == "semantic"]
            if semantic:
                kept["class"] = " ".join(semantic)
            continue
        if not config.allows_attribute(name):
            continue
        if value is not None and len(value) > config.max_data_uri_chars and _DATA_URI_RE.match(value):
            continue
        kept[name] = value
    return kept


def _strip_long_data_uris(el: Element, config: SanitizerConfig) -> dict[str, Optional[str]]:
    return {
        name: value
        for name, value in el.attrs.items()
        if not (value is not None and len(value) > config.max_data_uri_chars
                and _DATA_URI_RE.match(value))
    }


def _rebuild(node: Node, config: SanitizerConfig, *, prune: bool, hidden: bool,
             cleanse: bool, collapse_text: bool) -> Optional[Node]:
    if isinstance(node, Text):
        if not collapse_text:
            return Text(node.data)
        # Runs collapse to one space; edge spaces survive so adjacent inline
        # content does not fuse. Whitespace-only nodes disappear.
        collapsed = re.sub(r"\s+", " ", node.data)
        return Text(collapsed) if collapsed.strip() else None
    if isinstance(node, Comment):
        return None if prune else Comment(node.data)
    assert isinstance(node, Element)
    if prune and not isinstance(node, Document) and node.tag in config.pruned_tags:
        return None
    if hidden and not isinstance(node, Document) and _is_hidden(node, config):
        return None
    if isinstance(node, Document):
        copy: Element = Document()
    else:
        if cleanse:
            attrs = _cleansed_attrs(node, config)
        elif prune:
            attrs = _strip_long_data_uris(node, config)
        else:
            attrs = dict(node.attrs)
        copy = Element(node.tag, attrs)
    for child in node.children:
        rebuilt = _rebuild(child, config, prune=prune, hidden=hidden,
                           cleanse=cleanse, collapse_text=collapse_text)
        if rebuilt is not None:
            copy.append(rebuilt)
    return copy


def prune_noise(doc: Document, config: Optional[SanitizerConfig] = None) -> Document:
    """Drop pruned-tag subtrees, comments, and oversized data: URI values."""
    config = config or SanitizerConfig()
    out = _rebuild(doc, config, prune=True, hidden=False, cleanse=False, collapse_text=False)
    assert isinstance(out, Document)
    return out


def filter_hidden(doc: Document, config: Optional[SanitizerConfig] = None) -> Document:
    """Drop subtrees hidden via inline style, the hidden attribute, or
    aria-hidden="true"."""
    config = config or SanitizerConfig()
    out = _rebuild(doc, config, prune=False, hidden=True, cleanse=False, collapse_text=False)
    assert isinstance(out, Document)
    return out


def cleanse_attributes(doc: Document, config: Optional[SanitizerConfig] = None) -> Document:
    """Keep only allowlisted attributes; class lists keep semantic members
    or disappear entirely."""
    config = config or SanitizerConfig()
    out = _rebuild(doc, config, prune=False, hidden=False, cleanse=True, collapse_text=False)
    assert isinstance(out, Document)
    return out


def collapse_whitespace(doc: Document) -> Document:
    """Collapse whitespace runs in text nodes; drop whitespace-only nodes."""
    out = _rebuild(doc, SanitizerConfig(), prune=False, hidden=False, cleanse=False,
                   collapse_text=True)
    assert isinstance(out, Document)
    return out


def sanitize(html: str, config: Optional[SanitizerConfig] = None) -> SanitizedSkeleton:
    """Full pipeline in one traversal. Empty input yields an empty skeleton
    with zero stats."""
    config = config or SanitizerConfig()
    source = dom.parse(html)
    nodes_in = sum(1 for _ in source.iter_elements())
    chars_in = len(html)
    tokens_in = estimate_tokens(html, config.token_chars_ratio)

    cleaned = _rebuild(source, config, prune=True, hidden=True, cleanse=True,
                       collapse_text=True)
    assert isinstance(cleaned, Document)
    out_html = dom.serialize(cleaned)
    nodes_out = sum(1 for _ in cleaned.iter_elements())
    tokens_out = estimate_tokens(out_html, config.token_chars_ratio)
    reduction = 1.0 - tokens_out / tokens_in if tokens_in > 0 else 0.0
    stats = SanitizeStats(
        nodes_in=nodes_in,
        nodes_out=nodes_out,
        chars_in=chars_in,
        chars_out=len(out_html),
        est_tokens_in=tokens_in,
        est_tokens_out=tokens_out,
        reduction_ratio=reduction,
    )
    return SanitizedSkeleton(html=out_html, stats=stats)


def scan_violations(html: str, config: Optional[SanitizerConfig] = None) -> list[str]:
    """Scan skeleton HTML for anything sanitization should have removed.

    Returns human-readable violation descriptions; empty list means the
    string satisfies the skeleton invariants.
    """
    config = config or SanitizerConfig()
    doc = dom.parse(html)
    problems: list[str] = []
    for el in doc.iter_elements():
        if el.tag in config.pruned_tags:
            problems.append(f"pruned tag <{el.tag}> present")
        if el.get("aria-hidden") == "true":
            problems.append(f"aria-hidden subtree on <{el.tag}> present")
        if (config.drop_hidden_inputs and el.tag == "input"
                and (el.get("type") or "").lower() == "hidden"):
            problems.append("hidden input present")
        for name, value in el.attrs.items():
            if name == "class":
                for cls in (value or "").split():
                    if classify_class(cls, config.class_policy) != "semantic":
                        problems.append(f"utility class {cls!r} on <{el.tag}>")
                continue
            if not config.allows_attribute(name):
                problems.append(f"disallowed attribute {name!r} on <{el.tag}>")
    return problems
