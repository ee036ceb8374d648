"""Shared fixtures and hypothesis strategies for blueprint-shaped data."""

from __future__ import annotations

import itertools

from hypothesis import strategies as st

from webforge.blueprint import (
    Blueprint,
    BlueprintMeta,
    Capture,
    ClickStep,
    DelayStep,
    ExtractStep,
    FieldMapping,
    InputStep,
    LoopStep,
    NavigateStep,
    SelectStep,
    SelectorSpec,
    SelectorStrategy,
    Step,
    TIER_PRIORITY,
    TokenUsage,
    ValueSource,
    WaitCondition,
    WaitStep,
)

# Valid CSS expressions per tier, parseable by the bundled engine.
TIER_EXPRESSIONS = {
    "aria": ['[aria-label="Next page"]', '[role="button"]', '[aria-pressed="false"]'],
    "data_attr": ['[data-testid="pager-next"]', '[data-field="phone"]', '[data-listing-id]'],
    "id": ["#results", "#quote", "#main"],
    "stable_class": [".directory__card", ".pager__next", ".results__row"],
    "text": ['a:contains("Next")', 'button:contains("Save")'],
    "positional": ["ul > li:nth-child(2)", "main div:first-child"],
}

_TIERS_BY_PRIORITY = sorted(TIER_PRIORITY, key=TIER_PRIORITY.get, reverse=True)


@st.composite
def selector_specs(draw) -> SelectorSpec:
    n = draw(st.integers(1, 3))
    tiers = sorted(
        draw(st.lists(st.sampled_from(_TIERS_BY_PRIORITY), min_size=n, max_size=n)),
        key=TIER_PRIORITY.get, reverse=True)
    strategies = tuple(
        SelectorStrategy(t, draw(st.sampled_from(TIER_EXPRESSIONS[t]))) for t in tiers)
    return SelectorSpec(strategies, draw(st.sampled_from(["one", "many"])))


_words = st.text("abcdefgh", min_size=1, max_size=8)


@st.composite
def _leaf_steps(draw, ids: "itertools.count") -> Step:
    kind = draw(st.sampled_from(
        ["navigate", "click", "input", "select", "extract", "wait", "delay"]))
    sid = f"s{next(ids)}"
    if kind == "navigate":
        return NavigateStep(sid, f"https://example.com/{draw(_words)}")
    if kind == "click":
        return ClickStep(sid, draw(selector_specs()))
    if kind == "input":
        source = draw(st.one_of(
            st.builds(lambda v: ValueSource("literal", value=v), _words),
            st.builds(lambda f: ValueSource("payload_field", field=f), _words)))
        return InputStep(sid, draw(selector_specs()), source)
    if kind == "select":
        return SelectStep(sid, draw(selector_specs()), draw(_words))
    if kind == "extract":
        names = draw(st.lists(_words, min_size=1, max_size=4, unique=True))
        fields = tuple(
            FieldMapping(n, draw(selector_specs()),
                         draw(st.sampled_from([Capture("text"), Capture("attribute", "href")])))
            for n in names)
        return ExtractStep(sid, draw(selector_specs()), fields, draw(_words))
    if kind == "wait":
        cond = draw(st.sampled_from(["mutation_quiet", "network_idle", "selector_visible"]))
        selector = draw(selector_specs()) if cond == "selector_visible" else None
        return WaitStep(sid, WaitCondition(cond, selector), draw(st.integers(1, 30_000)))
    return DelayStep(sid, draw(st.integers(0, 5_000)), draw(st.integers(0, 500)))


@st.composite
def _steps(draw, ids: "itertools.count", depth: int) -> Step:
    if depth < 3 and draw(st.integers(0, 4)) == 0:
        sid = f"s{next(ids)}"
        mode = draw(st.sampled_from(["paginate", "repeat_count"]))
        body = tuple(draw(st.lists(_steps(ids, depth + 1), min_size=1, max_size=3)))
        if mode == "paginate":
            return LoopStep(sid, "paginate", body, draw(st.integers(1, 10)),
                            draw(st.integers(0, 2_000)), next_selector=draw(selector_specs()))
        return LoopStep(sid, "repeat_count", body, draw(st.integers(1, 10)),
                        draw(st.integers(0, 2_000)), count=draw(st.integers(0, 5)))
    return draw(_leaf_steps(ids))


@st.composite
def blueprints(draw) -> Blueprint:
    ids = itertools.count()
    steps = tuple(draw(st.lists(_steps(ids, 0), min_size=1, max_size=6)))
    meta = BlueprintMeta(
        intent=draw(_words),
        source_url=f"https://example.com/{draw(_words)}",
        compiled_at=draw(st.sampled_from(["", "2026-03-17T10:00:00Z"])),
        model_id=draw(st.sampled_from(["", "stub-model"])),
        token_usage=TokenUsage(draw(st.integers(0, 99_999)), draw(st.integers(0, 9_999))),
    )
    return Blueprint("1.0", meta, steps)


def sample_blueprint() -> Blueprint:
    """Hand-authored five-step blueprint covering the common path."""
    sel = lambda *strats: SelectorSpec(tuple(SelectorStrategy(t, e) for t, e in strats))
    return Blueprint(
        version="1.0",
        meta=BlueprintMeta(
            intent="Collect plumber listings with phone numbers",
            source_url="https://vtdirectory.example.com/search?q=plumbers",
            compiled_at="2026-03-17T10:00:00Z",
            model_id="stub-model",
            token_usage=TokenUsage(11_000, 1_400),
        ),
        steps=(
            NavigateStep("nav-1", "https://vtdirectory.example.com/search?q=plumbers"),
            WaitStep("wait-1", WaitCondition("selector_visible", sel(("id", "#results"))),
                     timeout_ms=5_000),
            InputStep("input-1", sel(("data_attr", '[data-testid="search-box"]'),
                                     ("id", "#q")),
                      ValueSource("literal", value="plumbers")),
            ClickStep("click-1", sel(("aria", '[aria-label="Run search"]'),
                                     ("stable_class", ".site-search__go"))),
            ExtractStep(
                "extract-1",
                scope_selector=SelectorSpec(
                    (SelectorStrategy("stable_class", ".results__row"),), "many"),
                fields=(
                    FieldMapping("name", sel(("stable_class", ".results__name"))),
                    FieldMapping("url", sel(("stable_class", ".results__name a")),
                                 Capture("attribute", "href")),
                    FieldMapping("phone", sel(("data_attr", '[data-field="phone"]'))),
                ),
                dataset="listings",
            ),
        ),
    )
