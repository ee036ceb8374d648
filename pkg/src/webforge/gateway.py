"""One-shot compiler gateway: prompt assembly, transport, validation,
failure classification, and cost accounting.

The model is invoked exactly once per compile; retry policy belongs to
callers. Transports are pluggable so every test runs against a stub.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, replace
from decimal import Decimal, ROUND_HALF_EVEN
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Literal, Optional, Protocol, Union

import requests

from . import blueprint as bpm
from .blueprint import Blueprint, InvalidBlueprint, TokenUsage, ValidationError
from .sanitize import estimate_tokens

Mode = Literal["compile", "heal"]
FailureClass = Literal["schema_violation", "semantic_misalignment", "reasoning_exhaustion"]

DEFAULT_CONTEXT_BUDGET_TOKENS = 120_000

_STEP_VOCABULARY = "navigate, click, input, select, extract, wait, delay, loop"
_TIER_ORDER = "aria >= data_attr >= id >= stable_class >= text >= positional"

_COMPILE_SYSTEM = f"""You compile a web workflow into one deterministic JSON blueprint.

Output exactly one JSON object with top-level keys version, meta, steps and
nothing else. No prose, no markdown fences, no follow-up questions. Every
decision is made now; the runtime executing your output performs no
reasoning and will never ask you anything.

Step vocabulary (closed set): {_STEP_VOCABULARY}.
Loops nest at most 3 deep. Each step carries a unique id.

Selectors: each selector-bearing step lists fallback strategies ordered by
tier, {_TIER_ORDER}, and a positional strategy never leads when another
tier is present. Prefer aria labels, data-* attributes, ids, and stable
semantic classes; use bare text matching or positional paths only as last
resorts. Declare expected_cardinality one or many.

Extraction: extract steps declare a scope selector with cardinality many
plus per-record field mappings (capture text or a named attribute) and a
dataset name. Use wait steps (mutation_quiet, network_idle, or
selector_visible) before acting on late-rendering content, and delay steps
for politeness pauses."""

_HEAL_SYSTEM = f"""You repair one dead CSS selector inside an existing web workflow.

Output exactly one JSON object of the shape
{{"strategies": [{{"tier": "...", "expression": "..."}}, ...]}}
and nothing else. No prose, no markdown fences.

Tiers are ordered {_TIER_ORDER}; list strategies in non-increasing tier
order and never lead with a positional strategy when another tier is
present. Choose expressions that resolve to exactly the node the failed
step targeted, judged from the page skeleton supplied."""


class PromptTooLarge(ValueError):
    pass


class TransportError(RuntimeError):
    pass


class TransportTimeout(TransportError):
    pass


class TransportHTTPError(TransportError):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        super().__init__(f"HTTP {status}: {body[:200]}")


class TransportProtocolError(TransportError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    mode: Mode


@dataclass(frozen=True)
class ModelConfig:
    endpoint_url: str
    model_id: str
    usd_per_input_token: Decimal
    usd_per_output_token: Decimal
    timeout_ms: int = 60_000
    api_key_env_name: str = ""

    def __post_init__(self) -> None:
        if self.usd_per_input_token < 0 or self.usd_per_output_token < 0:
            raise ValueError("prices must be >= 0")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")


@dataclass(frozen=True)
class TransportResponse:
    text: str
    usage: TokenUsage
    finish_reason: Optional[str] = None


class Transport(Protocol):
    def send(self, bundle: PromptBundle, cfg: ModelConfig) -> TransportResponse: ...


# -- prompt assembly ---------------------------------------------------


def build_prompt(skeleton: str, url: str, intent: str, *, mode: Mode = "compile",
                 budget_tokens: int = DEFAULT_CONTEXT_BUDGET_TOKENS) -> PromptBundle:
    """Assemble the single-call prompt; the skeleton is embedded verbatim.

    For heal mode, ``intent`` is the repair instruction describing the
    failed step. Raises PromptTooLarge when the skeleton alone exceeds the
    context budget.
    """
    if not skeleton:
        raise ValueError("skeleton must be non-empty")
    est = estimate_tokens(skeleton, 4)
    if est > budget_tokens:
        raise PromptTooLarge(
            f"skeleton is ~{est} tokens, over the {budget_tokens}-token budget")
    system = _COMPILE_SYSTEM if mode == "compile" else _HEAL_SYSTEM
    goal_label = "Goal" if mode == "compile" else "Repair instruction"
    user = (f"Page URL: {url}\n"
            f"{goal_label}: {intent}\n\n"
            f"Page skeleton:\n{skeleton}")
    return PromptBundle(system_text=system, user_text=user, mode=mode)


# -- transports --------------------------------------------------------


class HttpTransport:
    """Chat-completions-shaped HTTP transport with bearer auth."""

    def send(self, bundle: PromptBundle, cfg: ModelConfig) -> TransportResponse:
        headers = {"Content-Type": "application/json"}
        if cfg.api_key_env_name:
            key = os.environ.get(cfg.api_key_env_name, "")
            if not key:
                raise TransportError(
                    f"api key environment variable {cfg.api_key_env_name!r} is unset")
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": cfg.model_id,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
        }
        try:
            resp = requests.post(cfg.endpoint_url, json=payload, headers=headers,
                                 timeout=cfg.timeout_ms / 1000)
        except requests.Timeout as exc:
            raise TransportTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code != 200:
            raise TransportHTTPError(resp.status_code, resp.text)
        try:
            data = resp.json()
            choice = data["choices"][0]
            text = choice["message"]["content"]
            usage = data.get("usage", {})
            parsed_usage = TokenUsage(int(usage.get("prompt_tokens", 0)),
                                      int(usage.get("completion_tokens", 0)))
            finish = choice.get("finish_reason")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportProtocolError(f"malformed response envelope: {exc}") from exc
        if not isinstance(text, str):
            raise TransportProtocolError("message content is not text")
        return TransportResponse(text, parsed_usage, finish)


class StubTransport:
    """Scripted transport: responses are consumed in order, the last one
    repeats. Simulates latency against the config deadline without
    sleeping."""

    def __init__(self, responses: list[TransportResponse],
                 latency_ms: int = 0):
        if not responses:
            raise ValueError("stub needs at least one response")
        self._responses = list(responses)
        self._served = 0
        self.latency_ms = latency_ms

    @classmethod
    def returning(cls, text: str, usage: TokenUsage = TokenUsage(0, 0),
                  finish_reason: Optional[str] = None) -> "StubTransport":
        return cls([TransportResponse(text, usage, finish_reason)])

    def send(self, bundle: PromptBundle, cfg: ModelConfig) -> TransportResponse:
        if self.latency_ms > cfg.timeout_ms:
            raise TransportTimeout(
                f"stub latency {self.latency_ms}ms exceeds deadline {cfg.timeout_ms}ms")
        idx = min(self._served, len(self._responses) - 1)
        self._served += 1
        return self._responses[idx]


class CountingTransport:
    """Decorator exposing the total number of model invocations."""

    def __init__(self, inner: Transport):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def send(self, bundle: PromptBundle, cfg: ModelConfig) -> TransportResponse:
        with self._lock:
            self.calls += 1
        return self.inner.send(bundle, cfg)


# -- cost accounting ---------------------------------------------------


def account_cost(usage: TokenUsage, cfg: ModelConfig) -> Decimal:
    """Exact spend for one call at the config's asymmetric prices."""
    return (usage.input_tokens * cfg.usd_per_input_token
            + usage.output_tokens * cfg.usd_per_output_token)


def display_usd(value: Decimal) -> Decimal:
    """Display rounding: half-even at 4 decimals."""
    return value.quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN)


DEFAULT_PRICE_TABLE = Path(__file__).parent / "data" / "prices.json"


def load_price_table(path: Union[str, Path] = DEFAULT_PRICE_TABLE) -> dict[str, dict[str, Decimal]]:
    raw = json.loads(Path(path).read_text())
    return {
        model: {
            "usd_per_input_token": Decimal(entry["usd_per_input_token"]),
            "usd_per_output_token": Decimal(entry["usd_per_output_token"]),
        }
        for model, entry in raw["models"].items()
    }


def config_for_model(model_id: str, *, endpoint_url: str = "stub://local",
                     timeout_ms: int = 60_000, api_key_env_name: str = "",
                     price_table_path: Union[str, Path] = DEFAULT_PRICE_TABLE) -> ModelConfig:
    table = load_price_table(price_table_path)
    if model_id not in table:
        raise KeyError(f"model {model_id!r} not in price table "
                       f"(known: {', '.join(sorted(table))})")
    prices = table[model_id]
    return ModelConfig(endpoint_url, model_id, prices["usd_per_input_token"],
                       prices["usd_per_output_token"], timeout_ms, api_key_env_name)


# -- failure classification -------------------------------------------


def _ends_mid_structure(text: str) -> bool:
    """True when the text stops inside an open JSON object/array or string,
    the signature of a token-limit cutoff."""
    depth = 0
    in_string = False
    escaped = False
    for ch in text:
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
    return in_string or depth > 0


def classify_compile_failure(raw_output: str,
                             validation_errors: list[ValidationError],
                             *, finish_reason: Optional[str] = None,
                             runtime_report: str = "") -> FailureClass:
    """Sort a failed compilation into the three observed failure families."""
    if runtime_report:
        return "semantic_misalignment"
    if finish_reason == "length":
        return "reasoning_exhaustion"
    syntax_only = all(e.rule == "syntax" for e in validation_errors) if validation_errors else False
    if syntax_only and _ends_mid_structure(raw_output):
        return "reasoning_exhaustion"
    return "schema_violation"


# -- compile pipeline --------------------------------------------------


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class CompiledBlueprint:
    blueprint: Blueprint
    usage: TokenUsage
    cost_usd: Decimal
    raw_text: str
    model_id: str


@dataclass(frozen=True)
class CompileFailure:
    failure_class: FailureClass
    errors: tuple[ValidationError, ...]
    raw_text: str
    usage: TokenUsage
    cost_usd: Decimal


CompileResult = Union[CompiledBlueprint, CompileFailure]


def compile(skeleton: str, url: str, intent: str, cfg: ModelConfig,
            transport: Transport, *,
            clock: Callable[[], str] = _utc_now_iso,
            budget_tokens: int = DEFAULT_CONTEXT_BUDGET_TOKENS) -> CompileResult:
    """Build the prompt, make the single model call, validate the emitted
    blueprint, stamp provenance meta. Never retries; transport errors
    propagate to the caller."""
    bundle = build_prompt(skeleton, url, intent, mode="compile",
                          budget_tokens=budget_tokens)
    response = transport.send(bundle, cfg)
    cost = account_cost(response.usage, cfg)
    text = response.text.strip()
    try:
        bp = bpm.validate(text)
    except InvalidBlueprint as exc:
        failure = classify_compile_failure(text, exc.errors,
                                           finish_reason=response.finish_reason)
        return CompileFailure(failure, tuple(exc.errors), response.text,
                              response.usage, cost)
    stamped = replace(bp, meta=replace(
        bp.meta, compiled_at=clock(), model_id=cfg.model_id,
        token_usage=response.usage))
    return CompiledBlueprint(stamped, response.usage, cost, response.text,
                             cfg.model_id)
