"""The deterministic workflow blueprint: typed model, exhaustive validation,
canonical serialization, structural fingerprinting, and selector patching.

A blueprint is the compiled artifact the runtime replays without any model
in the loop, so everything here is immutable values and pure functions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterator, Literal, Optional, Union
from urllib.parse import urlparse

from . import selectors

Tier = Literal["aria", "data_attr", "id", "stable_class", "text", "positional"]
Cardinality = Literal["one", "many"]

# Higher value = preferred strategy family. Strategy lists must be ordered
# non-increasing so the runtime tries robust selectors first.
TIER_PRIORITY: dict[str, int] = {
    "aria": 5,
    "data_attr": 4,
    "id": 3,
    "stable_class": 2,
    "text": 1,
    "positional": 0,
}

MAX_LOOP_NESTING = 3

STEP_KINDS = ("navigate", "click", "input", "select", "extract", "wait", "delay", "loop")


@dataclass(frozen=True)
class ValidationError:
    path: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.path}: [{self.rule}] {self.detail}"


class InvalidBlueprint(ValueError):
    """Carries the exhaustive list of violations; never a partial result."""

    def __init__(self, errors: list[ValidationError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors[:5])
                         + (f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""))


class PatchError(ValueError):
    pass


# -- selector model ----------------------------------------------------


@dataclass(frozen=True)
class SelectorStrategy:
    tier: Tier
    expression: str


@dataclass(frozen=True)
class SelectorSpec:
    strategies: tuple[SelectorStrategy, ...]
    expected_cardinality: Cardinality = "one"


@dataclass(frozen=True)
class Capture:
    kind: Literal["text", "attribute"]
    attr: Optional[str] = None


@dataclass(frozen=True)
class FieldMapping:
    name: str
    selector: SelectorSpec
    capture: Capture = Capture("text")


@dataclass(frozen=True)
class ValueSource:
    kind: Literal["literal", "payload_field"]
    value: Optional[str] = None
    field: Optional[str] = None


@dataclass(frozen=True)
class WaitCondition:
    kind: Literal["mutation_quiet", "network_idle", "selector_visible"]
    selector: Optional[SelectorSpec] = None


# -- steps -------------------------------------------------------------


@dataclass(frozen=True)
class NavigateStep:
    id: str
    url: str
    kind: str = field(default="navigate", init=False)


@dataclass(frozen=True)
class ClickStep:
    id: str
    selector: SelectorSpec
    kind: str = field(default="click", init=False)


@dataclass(frozen=True)
class InputStep:
    id: str
    selector: SelectorSpec
    value_source: ValueSource
    kind: str = field(default="input", init=False)


@dataclass(frozen=True)
class SelectStep:
    id: str
    selector: SelectorSpec
    option_label: str
    kind: str = field(default="select", init=False)


@dataclass(frozen=True)
class ExtractStep:
    id: str
    scope_selector: SelectorSpec
    fields: tuple[FieldMapping, ...]
    dataset: str
    kind: str = field(default="extract", init=False)


@dataclass(frozen=True)
class WaitStep:
    id: str
    condition: WaitCondition
    timeout_ms: int
    kind: str = field(default="wait", init=False)


@dataclass(frozen=True)
class DelayStep:
    id: str
    base_ms: int
    jitter_ms: int = 0
    kind: str = field(default="delay", init=False)


@dataclass(frozen=True)
class LoopStep:
    id: str
    mode: Literal["paginate", "repeat_count"]
    body: tuple["Step", ...]
    max_iterations: int
    inter_iteration_delay_ms: int = 0
    next_selector: Optional[SelectorSpec] = None   # paginate only
    count: Optional[int] = None                    # repeat_count only
    kind: str = field(default="loop", init=False)


Step = Union[NavigateStep, ClickStep, InputStep, SelectStep, ExtractStep,
             WaitStep, DelayStep, LoopStep]


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass(frozen=True)
class BlueprintMeta:
    intent: str
    source_url: str
    compiled_at: str = ""
    model_id: str = ""
    token_usage: TokenUsage = TokenUsage()


@dataclass(frozen=True)
class Blueprint:
    version: str
    meta: BlueprintMeta
    steps: tuple[Step, ...]


@dataclass(frozen=True)
class SelectorPatch:
    step_id: str
    strategies: tuple[SelectorStrategy, ...]


# -- traversal helpers -------------------------------------------------


def iter_steps(bp: Blueprint) -> Iterator[Step]:
    """All steps depth-first, loop bodies included."""

    def walk(steps: tuple[Step, ...]) -> Iterator[Step]:
        for step in steps:
            yield step
            if isinstance(step, LoopStep):
                yield from walk(step.body)

    return walk(bp.steps)


def find_step(bp: Blueprint, step_id: str) -> Optional[Step]:
    for step in iter_steps(bp):
        if step.id == step_id:
            return step
    return None


def step_selector(step: Step) -> Optional[SelectorSpec]:
    """The patchable selector a step bears, if any."""
    if isinstance(step, (ClickStep, InputStep, SelectStep)):
        return step.selector
    if isinstance(step, ExtractStep):
        return step.scope_selector
    if isinstance(step, WaitStep):
        return step.condition.selector
    if isinstance(step, LoopStep):
        return step.next_selector
    return None


# -- canonical serialization ------------------------------------------


def _selector_to_dict(spec: SelectorSpec) -> dict:
    return {
        "strategies": [{"tier": s.tier, "expression": s.expression} for s in spec.strategies],
        "expected_cardinality": spec.expected_cardinality,
    }


def _capture_to_dict(c: Capture) -> dict:
    return {"kind": "text"} if c.kind == "text" else {"kind": "attribute", "attr": c.attr}


def _step_to_dict(step: Step) -> dict:
    d: dict = {"id": step.id, "kind": step.kind}
    if isinstance(step, NavigateStep):
        d["url"] = step.url
    elif isinstance(step, ClickStep):
        d["selector"] = _selector_to_dict(step.selector)
    elif isinstance(step, InputStep):
        d["selector"] = _selector_to_dict(step.selector)
        if step.value_source.kind == "literal":
            d["value_source"] = {"kind": "literal", "value": step.value_source.value}
        else:
            d["value_source"] = {"kind": "payload_field", "field": step.value_source.field}
    elif isinstance(step, SelectStep):
        d["selector"] = _selector_to_dict(step.selector)
        d["option_label"] = step.option_label
    elif isinstance(step, ExtractStep):
        d["scope_selector"] = _selector_to_dict(step.scope_selector)
        d["fields"] = [{"name": f.name, "selector": _selector_to_dict(f.selector),
                        "capture": _capture_to_dict(f.capture)} for f in step.fields]
        d["dataset"] = step.dataset
    elif isinstance(step, WaitStep):
        cond: dict = {"kind": step.condition.kind}
        if step.condition.selector is not None:
            cond["selector"] = _selector_to_dict(step.condition.selector)
        d["condition"] = cond
        d["timeout_ms"] = step.timeout_ms
    elif isinstance(step, DelayStep):
        d["base_ms"] = step.base_ms
        d["jitter_ms"] = step.jitter_ms
    elif isinstance(step, LoopStep):
        d["mode"] = step.mode
        if step.mode == "paginate":
            d["next_selector"] = _selector_to_dict(step.next_selector)  # type: ignore[arg-type]
        else:
            d["count"] = step.count
        d["max_iterations"] = step.max_iterations
        d["inter_iteration_delay_ms"] = step.inter_iteration_delay_ms
        d["body"] = [_step_to_dict(s) for s in step.body]
    return d


def to_dict(bp: Blueprint) -> dict:
    return {
        "version": bp.version,
        "meta": {
            "intent": bp.meta.intent,
            "source_url": bp.meta.source_url,
            "compiled_at": bp.meta.compiled_at,
            "model_id": bp.meta.model_id,
            "token_usage": {
                "input_tokens": bp.meta.token_usage.input_tokens,
                "output_tokens": bp.meta.token_usage.output_tokens,
            },
        },
        "steps": [_step_to_dict(s) for s in bp.steps],
    }


def serialize(bp: Blueprint) -> bytes:
    """Canonical bytes: sorted keys, no insignificant whitespace, UTF-8."""
    return json.dumps(to_dict(bp), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


# -- validation --------------------------------------------------------


class _Collector:
    def __init__(self) -> None:
        self.errors: list[ValidationError] = []

    def add(self, path: str, rule: str, detail: str) -> None:
        self.errors.append(ValidationError(path, rule, detail))


def _expect_str(raw: dict, key: str, path: str, errs: _Collector, *,
                required: bool = True, default: str = "", allow_empty: bool = True) -> str:
    if key not in raw:
        if required:
            errs.add(f"{path}.{key}", "missing", "required field absent")
        return default
    value = raw[key]
    if not isinstance(value, str):
        errs.add(f"{path}.{key}", "type", f"expected string, got {type(value).__name__}")
        return default
    if not allow_empty and not value:
        errs.add(f"{path}.{key}", "empty", "must be non-empty")
    return value


def _expect_int(raw: dict, key: str, path: str, errs: _Collector, *,
                minimum: Optional[int] = None, exclusive_minimum: Optional[int] = None,
                required: bool = True, default: int = 0) -> int:
    if key not in raw:
        if required:
            errs.add(f"{path}.{key}", "missing", "required field absent")
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, int):
        errs.add(f"{path}.{key}", "type", f"expected integer, got {type(value).__name__}")
        return default
    if minimum is not None and value < minimum:
        errs.add(f"{path}.{key}", "range", f"must be >= {minimum}, got {value}")
    if exclusive_minimum is not None and value <= exclusive_minimum:
        errs.add(f"{path}.{key}", "range", f"must be > {exclusive_minimum}, got {value}")
    return value


def _check_unknown_keys(raw: dict, allowed: set[str], path: str, errs: _Collector) -> None:
    for key in raw:
        if key not in allowed:
            errs.add(f"{path}.{key}", "unknown-field", "not part of the schema")


def _parse_selector_spec(raw: object, path: str, errs: _Collector) -> SelectorSpec:
    fallback = SelectorSpec((SelectorStrategy("id", "#invalid"),))
    if not isinstance(raw, dict):
        errs.add(path, "type", "selector spec must be an object")
        return fallback
    _check_unknown_keys(raw, {"strategies", "expected_cardinality"}, path, errs)
    cardinality = raw.get("expected_cardinality", "one")
    if cardinality not in ("one", "many"):
        errs.add(f"{path}.expected_cardinality", "enum", f"must be one|many, got {cardinality!r}")
        cardinality = "one"
    raw_strats = raw.get("strategies")
    if not isinstance(raw_strats, list) or not raw_strats:
        errs.add(f"{path}.strategies", "empty", "at least one selector strategy required")
        return fallback
    strategies: list[SelectorStrategy] = []
    for i, rs in enumerate(raw_strats):
        spath = f"{path}.strategies[{i}]"
        if not isinstance(rs, dict):
            errs.add(spath, "type", "strategy must be an object")
            continue
        _check_unknown_keys(rs, {"tier", "expression"}, spath, errs)
        tier = rs.get("tier")
        if tier not in TIER_PRIORITY:
            errs.add(f"{spath}.tier", "enum",
                     f"must be one of {'|'.join(TIER_PRIORITY)}, got {tier!r}")
            continue
        expr = rs.get("expression")
        if not isinstance(expr, str) or not expr:
            errs.add(f"{spath}.expression", "empty", "selector expression required")
            continue
        try:
            selectors.parse_selector(expr)
        except selectors.SelectorError as exc:
            errs.add(f"{spath}.expression", "selector-syntax", str(exc))
            continue
        strategies.append(SelectorStrategy(tier, expr))
    if not strategies:
        return fallback
    _check_tier_order(strategies, path, errs)
    return SelectorSpec(tuple(strategies), cardinality)


def _check_tier_order(strategies: list[SelectorStrategy], path: str, errs: _Collector) -> None:
    priorities = [TIER_PRIORITY[s.tier] for s in strategies]
    if any(a < b for a, b in zip(priorities, priorities[1:])):
        errs.add(f"{path}.strategies", "ordering",
                 "tiers must appear in non-increasing priority order "
                 f"(got {[s.tier for s in strategies]})")
    elif (strategies[0].tier == "positional"
          and any(s.tier != "positional" for s in strategies)):
        errs.add(f"{path}.strategies", "ordering",
                 "positional strategy must not lead when other tiers are present")


def _parse_capture(raw: object, path: str, errs: _Collector) -> Capture:
    if raw is None:
        return Capture("text")
    if not isinstance(raw, dict):
        errs.add(path, "type", "capture must be an object")
        return Capture("text")
    kind = raw.get("kind")
    if kind == "text":
        _check_unknown_keys(raw, {"kind"}, path, errs)
        return Capture("text")
    if kind == "attribute":
        _check_unknown_keys(raw, {"kind", "attr"}, path, errs)
        attr = raw.get("attr")
        if not isinstance(attr, str) or not attr:
            errs.add(f"{path}.attr", "empty", "attribute capture requires attr name")
            return Capture("text")
        return Capture("attribute", attr)
    errs.add(f"{path}.kind", "enum", f"must be text|attribute, got {kind!r}")
    return Capture("text")


def _parse_step(raw: object, path: str, errs: _Collector, depth: int) -> Optional[Step]:
    if not isinstance(raw, dict):
        errs.add(path, "type", "step must be an object")
        return None
    step_id = _expect_str(raw, "id", path, errs, allow_empty=False)
    kind = raw.get("kind")
    if kind not in STEP_KINDS:
        errs.add(f"{path}.kind", "enum", f"must be one of {'|'.join(STEP_KINDS)}, got {kind!r}")
        return None
    base_keys = {"id", "kind"}

    if kind == "navigate":
        _check_unknown_keys(raw, base_keys | {"url"}, path, errs)
        url = _expect_str(raw, "url", path, errs, allow_empty=False)
        return NavigateStep(step_id, url)

    if kind == "click":
        _check_unknown_keys(raw, base_keys | {"selector"}, path, errs)
        if "selector" not in raw:
            errs.add(f"{path}.selector", "missing", "required field absent")
            return None
        return ClickStep(step_id, _parse_selector_spec(raw["selector"], f"{path}.selector", errs))

    if kind == "input":
        _check_unknown_keys(raw, base_keys | {"selector", "value_source"}, path, errs)
        if "selector" not in raw or "value_source" not in raw:
            for k in ("selector", "value_source"):
                if k not in raw:
                    errs.add(f"{path}.{k}", "missing", "required field absent")
            return None
        sel = _parse_selector_spec(raw["selector"], f"{path}.selector", errs)
        vs_raw = raw["value_source"]
        vs = ValueSource("literal", value="")
        if not isinstance(vs_raw, dict):
            errs.add(f"{path}.value_source", "type", "must be an object")
        elif vs_raw.get("kind") == "literal":
            _check_unknown_keys(vs_raw, {"kind", "value"}, f"{path}.value_source", errs)
            value = vs_raw.get("value")
            if not isinstance(value, str):
                errs.add(f"{path}.value_source.value", "type", "literal requires string value")
            else:
                vs = ValueSource("literal", value=value)
        elif vs_raw.get("kind") == "payload_field":
            _check_unknown_keys(vs_raw, {"kind", "field"}, f"{path}.value_source", errs)
            fname = vs_raw.get("field")
            if not isinstance(fname, str) or not fname:
                errs.add(f"{path}.value_source.field", "empty", "payload field name required")
            else:
                vs = ValueSource("payload_field", field=fname)
        else:
            errs.add(f"{path}.value_source.kind", "enum",
                     f"must be literal|payload_field, got {vs_raw.get('kind')!r}")
        return InputStep(step_id, sel, vs)

    if kind == "select":
        _check_unknown_keys(raw, base_keys | {"selector", "option_label"}, path, errs)
        if "selector" not in raw:
            errs.add(f"{path}.selector", "missing", "required field absent")
            return None
        sel = _parse_selector_spec(raw["selector"], f"{path}.selector", errs)
        label = _expect_str(raw, "option_label", path, errs, allow_empty=False)
        return SelectStep(step_id, sel, label)

    if kind == "extract":
        _check_unknown_keys(raw, base_keys | {"scope_selector", "fields", "dataset"}, path, errs)
        if "scope_selector" not in raw:
            errs.add(f"{path}.scope_selector", "missing", "required field absent")
            return None
        scope = _parse_selector_spec(raw["scope_selector"], f"{path}.scope_selector", errs)
        dataset = _expect_str(raw, "dataset", path, errs, allow_empty=False)
        raw_fields = raw.get("fields")
        mappings: list[FieldMapping] = []
        if not isinstance(raw_fields, list) or not raw_fields:
            errs.add(f"{path}.fields", "empty", "extract requires at least one field mapping")
        else:
            seen: set[str] = set()
            for i, rf in enumerate(raw_fields):
                fpath = f"{path}.fields[{i}]"
                if not isinstance(rf, dict):
                    errs.add(fpath, "type", "field mapping must be an object")
                    continue
                _check_unknown_keys(rf, {"name", "selector", "capture"}, fpath, errs)
                name = _expect_str(rf, "name", fpath, errs, allow_empty=False)
                if name in seen:
                    errs.add(f"{fpath}.name", "duplicate", f"field name {name!r} repeats")
                seen.add(name)
                if "selector" not in rf:
                    errs.add(f"{fpath}.selector", "missing", "required field absent")
                    continue
                fsel = _parse_selector_spec(rf["selector"], f"{fpath}.selector", errs)
                mappings.append(FieldMapping(name, fsel, _parse_capture(rf.get("capture"), f"{fpath}.capture", errs)))
        return ExtractStep(step_id, scope, tuple(mappings), dataset)

    if kind == "wait":
        _check_unknown_keys(raw, base_keys | {"condition", "timeout_ms"}, path, errs)
        timeout = _expect_int(raw, "timeout_ms", path, errs, exclusive_minimum=0, default=1)
        cond_raw = raw.get("condition")
        cond = WaitCondition("mutation_quiet")
        if not isinstance(cond_raw, dict):
            errs.add(f"{path}.condition", "missing", "wait requires a condition object")
        else:
            ckind = cond_raw.get("kind")
            if ckind in ("mutation_quiet", "network_idle"):
                _check_unknown_keys(cond_raw, {"kind"}, f"{path}.condition", errs)
                cond = WaitCondition(ckind)
            elif ckind == "selector_visible":
                _check_unknown_keys(cond_raw, {"kind", "selector"}, f"{path}.condition", errs)
                if "selector" not in cond_raw:
                    errs.add(f"{path}.condition.selector", "missing",
                             "selector_visible requires a selector")
                else:
                    cond = WaitCondition("selector_visible", _parse_selector_spec(
                        cond_raw["selector"], f"{path}.condition.selector", errs))
            else:
                errs.add(f"{path}.condition.kind", "enum",
                         f"must be mutation_quiet|network_idle|selector_visible, got {ckind!r}")
        return WaitStep(step_id, cond, timeout)

    if kind == "delay":
        _check_unknown_keys(raw, base_keys | {"base_ms", "jitter_ms"}, path, errs)
        base = _expect_int(raw, "base_ms", path, errs, minimum=0)
        jitter = _expect_int(raw, "jitter_ms", path, errs, minimum=0, required=False)
        return DelayStep(step_id, base, jitter)

    # loop
    _check_unknown_keys(raw, base_keys | {"mode", "next_selector", "count", "max_iterations",
                                          "inter_iteration_delay_ms", "body"}, path, errs)
    if depth + 1 > MAX_LOOP_NESTING:
        errs.add(path, "nesting", f"loop nesting exceeds {MAX_LOOP_NESTING}")
        return None
    mode = raw.get("mode")
    if mode not in ("paginate", "repeat_count"):
        errs.add(f"{path}.mode", "enum", f"must be paginate|repeat_count, got {mode!r}")
        return None
    max_iter = _expect_int(raw, "max_iterations", path, errs, minimum=1, default=1)
    inter = _expect_int(raw, "inter_iteration_delay_ms", path, errs, minimum=0, required=False)
    next_sel: Optional[SelectorSpec] = None
    count: Optional[int] = None
    if mode == "paginate":
        if "count" in raw:
            errs.add(f"{path}.count", "unknown-field", "count is repeat_count-only")
        if "next_selector" not in raw:
            errs.add(f"{path}.next_selector", "missing", "paginate requires next_selector")
            return None
        next_sel = _parse_selector_spec(raw["next_selector"], f"{path}.next_selector", errs)
    else:
        if "next_selector" in raw:
            errs.add(f"{path}.next_selector", "unknown-field", "next_selector is paginate-only")
        count = _expect_int(raw, "count", path, errs, minimum=0)
    raw_body = raw.get("body")
    body: list[Step] = []
    if not isinstance(raw_body, list):
        errs.add(f"{path}.body", "missing", "loop requires a body step list")
    else:
        for i, rs in enumerate(raw_body):
            parsed = _parse_step(rs, f"{path}.body[{i}]", errs, depth + 1)
            if parsed is not None:
                body.append(parsed)
    return LoopStep(step_id, mode, tuple(body), max_iter, inter, next_sel, count)


def validate(raw_json: Union[bytes, str], *, allow_draft: bool = False) -> Blueprint:
    """Parse and validate blueprint JSON.

    Returns a fully-typed Blueprint or raises InvalidBlueprint carrying the
    exhaustive violation list; never a partial object. ``allow_draft``
    permits an empty step list.
    """
    errs = _Collector()
    try:
        if isinstance(raw_json, bytes):
            raw_json = raw_json.decode("utf-8")
        data = json.loads(raw_json)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidBlueprint([ValidationError("$", "syntax", str(exc))]) from exc

    if not isinstance(data, dict):
        raise InvalidBlueprint([ValidationError("$", "type", "top level must be an object")])

    _check_unknown_keys(data, {"version", "meta", "steps"}, "$", errs)
    version = _expect_str(data, "version", "$", errs, allow_empty=False)

    meta = BlueprintMeta(intent="", source_url="")
    raw_meta = data.get("meta")
    if not isinstance(raw_meta, dict):
        errs.add("$.meta", "missing", "required field absent")
    else:
        _check_unknown_keys(raw_meta, {"intent", "source_url", "compiled_at", "model_id",
                                       "token_usage"}, "$.meta", errs)
        intent = _expect_str(raw_meta, "intent", "$.meta", errs, allow_empty=False)
        source_url = _expect_str(raw_meta, "source_url", "$.meta", errs, allow_empty=False)
        if source_url:
            parts = urlparse(source_url)
            if not (parts.scheme and parts.netloc):
                errs.add("$.meta.source_url", "url", f"must be absolute, got {source_url!r}")
        compiled_at = _expect_str(raw_meta, "compiled_at", "$.meta", errs, required=False)
        model_id = _expect_str(raw_meta, "model_id", "$.meta", errs, required=False)
        usage = TokenUsage()
        raw_usage = raw_meta.get("token_usage")
        if raw_usage is not None:
            if not isinstance(raw_usage, dict):
                errs.add("$.meta.token_usage", "type", "must be an object")
            else:
                _check_unknown_keys(raw_usage, {"input_tokens", "output_tokens"},
                                    "$.meta.token_usage", errs)
                usage = TokenUsage(
                    _expect_int(raw_usage, "input_tokens", "$.meta.token_usage", errs,
                                minimum=0, required=False),
                    _expect_int(raw_usage, "output_tokens", "$.meta.token_usage", errs,
                                minimum=0, required=False),
                )
        meta = BlueprintMeta(intent, source_url, compiled_at, model_id, usage)

    steps: list[Step] = []
    raw_steps = data.get("steps")
    if not isinstance(raw_steps, list):
        errs.add("$.steps", "missing", "required field absent")
    else:
        if not raw_steps and not allow_draft:
            errs.add("$.steps", "empty", "executable blueprint requires at least one step")
        for i, rs in enumerate(raw_steps):
            parsed = _parse_step(rs, f"$.steps[{i}]", errs, 0)
            if parsed is not None:
                steps.append(parsed)

    bp = Blueprint(version, meta, tuple(steps))
    seen_ids: set[str] = set()
    for step in iter_steps(bp):
        if step.id in seen_ids:
            errs.add("$.steps", "duplicate", f"step id {step.id!r} repeats")
        seen_ids.add(step.id)

    if errs.errors:
        raise InvalidBlueprint(errs.errors)
    return bp


# -- fingerprint -------------------------------------------------------


def _fingerprint_step(step: Step) -> dict:
    """Step projection with every selector strategy list erased; only the
    declared cardinality of each selector slot survives."""
    d = _step_to_dict(step)

    def scrub(obj: object) -> object:
        if isinstance(obj, dict):
            if set(obj) == {"strategies", "expected_cardinality"}:
                return {"expected_cardinality": obj["expected_cardinality"]}
            return {k: scrub(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [scrub(v) for v in obj]
        return obj

    return scrub(d)  # type: ignore[return-value]


def structural_fingerprint(bp: Blueprint) -> str:
    """Hex digest over step ids, kinds, nesting, and non-selector payloads.

    Selector strategies are excluded entirely, so selector patches never
    change the fingerprint; meta is excluded so re-compilation bookkeeping
    does not either.
    """
    projection = [_fingerprint_step(s) for s in bp.steps]
    blob = json.dumps(projection, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# -- patching ----------------------------------------------------------


def apply_patch(bp: Blueprint, patch: SelectorPatch) -> Blueprint:
    """Replace the selector strategies of one step, immutably.

    The step's declared cardinality is preserved. Raises PatchError for an
    unknown step id, a selector-less step, or a strategy list violating
    the tier ordering rules.
    """
    target = find_step(bp, patch.step_id)
    if target is None:
        raise PatchError(f"no step with id {patch.step_id!r}")
    if step_selector(target) is None:
        raise PatchError(f"step {patch.step_id!r} ({target.kind}) bears no selector")
    if not patch.strategies:
        raise PatchError("patch requires at least one selector strategy")
    errs = _Collector()
    for i, strat in enumerate(patch.strategies):
        if strat.tier not in TIER_PRIORITY:
            raise PatchError(f"unknown tier {strat.tier!r}")
        try:
            selectors.parse_selector(strat.expression)
        except selectors.SelectorError as exc:
            raise PatchError(f"strategy[{i}] expression invalid: {exc}") from exc
    _check_tier_order(list(patch.strategies), "$", errs)
    if errs.errors:
        raise PatchError(errs.errors[0].detail)

    def rewrite(steps: tuple[Step, ...]) -> tuple[Step, ...]:
        out: list[Step] = []
        for step in steps:
            if step.id == patch.step_id:
                step = _with_strategies(step, patch.strategies)
            if isinstance(step, LoopStep):
                step = replace(step, body=rewrite(step.body))
            out.append(step)
        return tuple(out)

    return replace(bp, steps=rewrite(bp.steps))


def _with_strategies(step: Step, strategies: tuple[SelectorStrategy, ...]) -> Step:
    def swap(spec: SelectorSpec) -> SelectorSpec:
        return replace(spec, strategies=strategies)

    if isinstance(step, (ClickStep, InputStep, SelectStep)):
        return replace(step, selector=swap(step.selector))
    if isinstance(step, ExtractStep):
        return replace(step, scope_selector=swap(step.scope_selector))
    if isinstance(step, WaitStep):
        assert step.condition.selector is not None
        return replace(step, condition=replace(step.condition,
                                               selector=swap(step.condition.selector)))
    assert isinstance(step, LoopStep) and step.next_selector is not None
    return replace(step, next_selector=swap(step.next_selector))
