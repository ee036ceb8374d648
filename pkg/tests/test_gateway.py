"""Compiler gateway: prompt assembly, single-call discipline, failure
classification, cost accounting, HTTP transport wire behavior."""

import http.server
import json
import os
import threading
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from webforge import blueprint as bpm
from webforge import gateway as gw
from webforge.blueprint import TokenUsage, ValidationError

from .support import sample_blueprint

SKELETON = "<html><body><form><input name='q'><button>Go</button></form></body></html>"
URL = "https://directory.example/search"
INTENT = "search for plumbers and extract the result listings"

FIXED_CLOCK = lambda: "2026-01-15T09:30:00Z"


def stub_config(**overrides) -> gw.ModelConfig:
    defaults = dict(endpoint_url="stub://local", model_id="test-model",
                    usd_per_input_token=Decimal("1E-6"),
                    usd_per_output_token=Decimal("5E-6"),
                    timeout_ms=5_000)
    defaults.update(overrides)
    return gw.ModelConfig(**defaults)


def valid_output(usage=TokenUsage(1000, 200)) -> gw.TransportResponse:
    text = bpm.serialize(sample_blueprint()).decode()
    return gw.TransportResponse(text, usage, "stop")


# -- prompt assembly ---------------------------------------------------

class TestBuildPrompt:
    def test_deterministic(self):
        a = gw.build_prompt(SKELETON, URL, INTENT)
        b = gw.build_prompt(SKELETON, URL, INTENT)
        assert a == b

    def test_compile_mode_states_contract(self):
        bundle = gw.build_prompt(SKELETON, URL, INTENT)
        assert bundle.mode == "compile"
        for kind in ("navigate", "click", "extract", "loop"):
            assert kind in bundle.system_text
        assert "positional" in bundle.system_text
        assert SKELETON in bundle.user_text
        assert URL in bundle.user_text
        assert INTENT in bundle.user_text

    def test_heal_mode_demands_strategy_object(self):
        bundle = gw.build_prompt(SKELETON, URL, "step click-1 selector is dead",
                                 mode="heal")
        assert bundle.mode == "heal"
        assert '"strategies"' in bundle.system_text
        assert "navigate" not in bundle.system_text

    def test_over_budget_rejected(self):
        with pytest.raises(gw.PromptTooLarge):
            gw.build_prompt("x" * 4001, URL, INTENT, budget_tokens=1000)

    def test_at_budget_accepted(self):
        gw.build_prompt("x" * 4000, URL, INTENT, budget_tokens=1000)

    def test_empty_skeleton_rejected(self):
        with pytest.raises(ValueError):
            gw.build_prompt("", URL, INTENT)


# -- compile pipeline --------------------------------------------------

class TestCompile:
    def test_success_returns_stamped_blueprint(self):
        usage = TokenUsage(11_628, 1_340)
        transport = gw.StubTransport([valid_output(usage)])
        cfg = stub_config()
        result = gw.compile(SKELETON, URL, INTENT, cfg, transport,
                            clock=FIXED_CLOCK)
        assert isinstance(result, gw.CompiledBlueprint)
        assert result.blueprint.meta.compiled_at == "2026-01-15T09:30:00Z"
        assert result.blueprint.meta.model_id == "test-model"
        assert result.blueprint.meta.token_usage == usage
        assert result.usage == usage
        assert result.cost_usd == (Decimal(11_628) * Decimal("1E-6")
                                   + Decimal(1_340) * Decimal("5E-6"))

    def test_exactly_one_call_on_success(self):
        counter = gw.CountingTransport(gw.StubTransport([valid_output()]))
        gw.compile(SKELETON, URL, INTENT, stub_config(), counter)
        assert counter.calls == 1

    def test_exactly_one_call_on_failure(self):
        counter = gw.CountingTransport(gw.StubTransport.returning("not json"))
        result = gw.compile(SKELETON, URL, INTENT, stub_config(), counter)
        assert isinstance(result, gw.CompileFailure)
        assert counter.calls == 1

    def test_deterministic_modulo_transport(self):
        cfg = stub_config()
        results = []
        for _ in range(2):
            transport = gw.StubTransport([valid_output()])
            r = gw.compile(SKELETON, URL, INTENT, cfg, transport,
                           clock=FIXED_CLOCK)
            results.append(bpm.serialize(r.blueprint))
        assert results[0] == results[1]

    def test_failure_carries_raw_output_and_cost(self):
        raw = '{"version": "zzz", "wrong": true}'
        usage = TokenUsage(500, 40)
        transport = gw.StubTransport([gw.TransportResponse(raw, usage, "stop")])
        result = gw.compile(SKELETON, URL, INTENT, stub_config(), transport)
        assert isinstance(result, gw.CompileFailure)
        assert result.raw_text == raw
        assert result.usage == usage
        assert result.cost_usd == (Decimal(500) * Decimal("1E-6")
                                   + Decimal(40) * Decimal("5E-6"))
        assert result.errors

    def test_truncated_output_classified_as_exhaustion(self):
        text = bpm.serialize(sample_blueprint()).decode()[:200]
        transport = gw.StubTransport.returning(text)
        result = gw.compile(SKELETON, URL, INTENT, stub_config(), transport)
        assert isinstance(result, gw.CompileFailure)
        assert result.failure_class == "reasoning_exhaustion"

    def test_length_finish_reason_classified_as_exhaustion(self):
        transport = gw.StubTransport(
            [gw.TransportResponse('{"version": "1.0"', TokenUsage(9, 9), "length")])
        result = gw.compile(SKELETON, URL, INTENT, stub_config(), transport)
        assert isinstance(result, gw.CompileFailure)
        assert result.failure_class == "reasoning_exhaustion"

    def test_schema_violation_classified(self):
        raw = json.dumps({"version": "1.0", "meta": {"intent": "x",
                          "source_url": "https://a.example/"}, "steps": [
                          {"id": "s0", "kind": "teleport"}]})
        transport = gw.StubTransport.returning(raw)
        result = gw.compile(SKELETON, URL, INTENT, stub_config(), transport)
        assert isinstance(result, gw.CompileFailure)
        assert result.failure_class == "schema_violation"

    def test_transport_errors_propagate(self):
        transport = gw.StubTransport([valid_output()], latency_ms=10_000)
        with pytest.raises(gw.TransportTimeout):
            gw.compile(SKELETON, URL, INTENT, stub_config(timeout_ms=100),
                       transport)

    def test_markdown_fenced_output_is_a_failure_not_a_crash(self):
        text = "```json\n{}\n```"
        transport = gw.StubTransport.returning(text)
        result = gw.compile(SKELETON, URL, INTENT, stub_config(), transport)
        assert isinstance(result, gw.CompileFailure)


# -- failure classification -------------------------------------------

class TestClassify:
    def syntax_err(self):
        return [ValidationError("$", "syntax", "bad")]

    def test_runtime_report_wins(self):
        got = gw.classify_compile_failure("{}", [], runtime_report="clicked wrong node")
        assert got == "semantic_misalignment"

    def test_runtime_report_beats_length(self):
        got = gw.classify_compile_failure("{", self.syntax_err(),
                                          finish_reason="length",
                                          runtime_report="extracted empty dataset")
        assert got == "semantic_misalignment"

    def test_finish_length(self):
        got = gw.classify_compile_failure("{}", [], finish_reason="length")
        assert got == "reasoning_exhaustion"

    def test_mid_object_cutoff(self):
        assert gw.classify_compile_failure(
            '{"version": "1.0", "steps": [{"id": "s', self.syntax_err()) \
            == "reasoning_exhaustion"

    def test_mid_string_cutoff(self):
        assert gw.classify_compile_failure(
            '{"version": "1.0', self.syntax_err()) == "reasoning_exhaustion"

    def test_balanced_prose_is_schema_violation(self):
        assert gw.classify_compile_failure(
            "Sure, here is the plan.", self.syntax_err()) == "schema_violation"

    def test_complete_but_wrong_shape(self):
        errs = [ValidationError("$.steps[0].kind", "enum", "unknown kind")]
        assert gw.classify_compile_failure('{"steps": []}', errs) == "schema_violation"

    def test_escaped_quote_does_not_close_string(self):
        # text ends inside a string containing an escaped quote
        assert gw.classify_compile_failure(
            '{"intent": "say \\"hi', self.syntax_err()) == "reasoning_exhaustion"


# -- cost accounting ---------------------------------------------------

# published single-compile spends per model: (input, output, usd)
PUBLISHED_RUNS = [
    ("claude-opus-4.6", 11_628, 1_340, Decimal("0.0916")),
    ("claude-sonnet-4.5", 11_628, 1_670, Decimal("0.0599")),
    ("gpt-5.2-codex", 9_951, 1_447, Decimal("0.0377")),
    ("qwen3.5-397b", 10_738, 3_000, Decimal("0.0172")),
    ("qwen3-coder-next", 10_536, 550, Decimal("0.0020")),
]


class TestCostAccounting:
    @pytest.mark.parametrize("model_id,tok_in,tok_out,expected",
                             PUBLISHED_RUNS, ids=[r[0] for r in PUBLISHED_RUNS])
    def test_bundled_prices_recover_published_spend(self, model_id, tok_in,
                                                    tok_out, expected):
        cfg = gw.config_for_model(model_id)
        cost = gw.account_cost(TokenUsage(tok_in, tok_out), cfg)
        assert abs(cost - expected) <= Decimal("0.0005")
        assert gw.display_usd(cost) == expected

    def test_price_table_holds_five_models_at_fixed_ratio(self):
        table = gw.load_price_table()
        assert len(table) == 5
        for prices in table.values():
            assert prices["usd_per_output_token"] == 5 * prices["usd_per_input_token"]

    def test_unknown_model_rejected_with_roster(self):
        with pytest.raises(KeyError, match="claude-opus-4.6"):
            gw.config_for_model("no-such-model")

    def test_account_cost_exact_decimal(self):
        cfg = stub_config(usd_per_input_token=Decimal("0.1"),
                          usd_per_output_token=Decimal("0.3"))
        assert gw.account_cost(TokenUsage(3, 7), cfg) == Decimal("2.4")

    @given(a_in=st.integers(0, 10**6), a_out=st.integers(0, 10**6),
           b_in=st.integers(0, 10**6), b_out=st.integers(0, 10**6))
    def test_cost_additive_in_usage(self, a_in, a_out, b_in, b_out):
        cfg = stub_config()
        merged = TokenUsage(a_in + b_in, a_out + b_out)
        assert gw.account_cost(merged, cfg) == (
            gw.account_cost(TokenUsage(a_in, a_out), cfg)
            + gw.account_cost(TokenUsage(b_in, b_out), cfg))

    def test_display_rounding_is_half_even(self):
        assert gw.display_usd(Decimal("0.00005")) == Decimal("0.0000")
        assert gw.display_usd(Decimal("0.00015")) == Decimal("0.0002")
        assert gw.display_usd(Decimal("0.00025")) == Decimal("0.0002")


# -- model config ------------------------------------------------------

class TestModelConfig:
    def test_negative_price_rejected(self):
        with pytest.raises(ValueError):
            stub_config(usd_per_input_token=Decimal("-1"))

    def test_zero_timeout_rejected(self):
        with pytest.raises(ValueError):
            stub_config(timeout_ms=0)


# -- stub transport ----------------------------------------------------

class TestStubTransport:
    def test_responses_consumed_in_order_then_last_repeats(self):
        stub = gw.StubTransport([
            gw.TransportResponse("one", TokenUsage(1, 1)),
            gw.TransportResponse("two", TokenUsage(2, 2)),
        ])
        bundle = gw.build_prompt(SKELETON, URL, INTENT)
        cfg = stub_config()
        assert stub.send(bundle, cfg).text == "one"
        assert stub.send(bundle, cfg).text == "two"
        assert stub.send(bundle, cfg).text == "two"

    def test_empty_script_rejected(self):
        with pytest.raises(ValueError):
            gw.StubTransport([])


# -- http transport ----------------------------------------------------

class _Endpoint(http.server.BaseHTTPRequestHandler):
    scenario = "ok"
    seen: list[dict] = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).seen.append({
            "auth": self.headers.get("Authorization"),
            "body": body,
        })
        if self.scenario == "http_500":
            self.send_response(500)
            self.end_headers()
            self.wfile.write(b"upstream exploded")
            return
        if self.scenario == "bad_json":
            payload = b"<html>gateway timeout</html>"
        elif self.scenario == "missing_keys":
            payload = json.dumps({"id": "resp-1"}).encode()
        else:
            payload = json.dumps({
                "choices": [{"message": {"content": "{\"steps\": []}"},
                             "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 42, "completion_tokens": 7},
            }).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def endpoint():
    server = http.server.HTTPServer(("127.0.0.1", 0), _Endpoint)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Endpoint.scenario = "ok"
    _Endpoint.seen = []
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()
    thread.join(timeout=5)


class TestHttpTransport:
    def send(self, endpoint, **cfg_overrides):
        cfg = stub_config(endpoint_url=endpoint, **cfg_overrides)
        bundle = gw.build_prompt(SKELETON, URL, INTENT)
        return gw.HttpTransport().send(bundle, cfg)

    def test_parses_chat_completion_envelope(self, endpoint):
        resp = self.send(endpoint)
        assert resp.text == '{"steps": []}'
        assert resp.usage == TokenUsage(42, 7)
        assert resp.finish_reason == "stop"

    def test_sends_both_roles_and_model_id(self, endpoint):
        self.send(endpoint)
        body = _Endpoint.seen[0]["body"]
        assert body["model"] == "test-model"
        assert [m["role"] for m in body["messages"]] == ["system", "user"]
        assert SKELETON in body["messages"][1]["content"]

    def test_bearer_header_from_named_env_var(self, endpoint, monkeypatch):
        monkeypatch.setenv("FAKE_GATEWAY_KEY", "sk-test-123")
        self.send(endpoint, api_key_env_name="FAKE_GATEWAY_KEY")
        assert _Endpoint.seen[0]["auth"] == "Bearer sk-test-123"

    def test_unset_key_env_fails_before_any_request(self, endpoint, monkeypatch):
        monkeypatch.delenv("FAKE_GATEWAY_KEY", raising=False)
        with pytest.raises(gw.TransportError):
            self.send(endpoint, api_key_env_name="FAKE_GATEWAY_KEY")
        assert _Endpoint.seen == []

    def test_no_auth_header_when_unconfigured(self, endpoint):
        self.send(endpoint)
        assert _Endpoint.seen[0]["auth"] is None

    def test_http_error_surfaces_status(self, endpoint):
        _Endpoint.scenario = "http_500"
        with pytest.raises(gw.TransportHTTPError) as exc:
            self.send(endpoint)
        assert exc.value.status == 500

    def test_non_json_body_is_protocol_error(self, endpoint):
        _Endpoint.scenario = "bad_json"
        with pytest.raises(gw.TransportProtocolError):
            self.send(endpoint)

    def test_missing_envelope_keys_is_protocol_error(self, endpoint):
        _Endpoint.scenario = "missing_keys"
        with pytest.raises(gw.TransportProtocolError):
            self.send(endpoint)

    def test_connection_refused_is_transport_error(self):
        with pytest.raises(gw.TransportError):
            self.send("http://127.0.0.1:9/v1/chat/completions")
