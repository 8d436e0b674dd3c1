import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from ctafbench.llm_eval import (
    Completion,
    EndpointError,
    ModelEndpoint,
    PromptAssemblyError,
    TransportError,
    VerdictParseError,
    assemble_prompt,
    capture_score,
    complete,
    extract_verdict,
    make_generation_client,
    make_oracle_transport,
    openai_chat_transport,
    run_matrix,
    run_protocol,
    select_exemplars,
    wrong_class,
)
from ctafbench.metrics import confusion, macro_f1, read_records
from ctafbench.prompts import COT_ELICIT_SUFFIX, COT_EXTRACT_MESSAGE

from conftest import gold_map, no_sleep


class TestAssemblePrompt:
    def test_zero_shot_is_two_messages(self, small_dataset):
        target = small_dataset.test_split[0]
        messages = assemble_prompt("binary", "ZS", target, small_dataset.icl_pool)
        assert [m["role"] for m in messages] == ["system", "user"]
        assert "METAR:" in messages[1]["content"]
        assert "CTAF TRANSCRIPT (SRT):" in messages[1]["content"]

    def test_few_shot_three_class_is_fourteen_messages(self, small_dataset):
        target = small_dataset.test_split[0]
        messages = assemble_prompt("three_class", "FS", target, small_dataset.icl_pool)
        assert len(messages) == 14
        roles = [m["role"] for m in messages]
        assert roles == ["system"] + ["user", "assistant"] * 6 + ["user"]

    def test_one_shot_binary_keeps_three_exemplars(self, small_dataset):
        target = small_dataset.test_split[0]
        messages = assemble_prompt("binary", "OS", target, small_dataset.icl_pool)
        assert len(messages) == 8  # system + 3 pairs + target
        labels = [json.loads(m["content"])["label"] for m in messages
                  if m["role"] == "assistant"]
        assert sorted(labels) == ["danger", "danger", "nominal"]

    def test_exemplars_only_from_icl_pool(self, small_dataset):
        for ex in select_exemplars("FS", small_dataset.icl_pool):
            assert ex.split == "icl"

    def test_target_in_exemplars_rejected(self, small_dataset):
        exemplar = small_dataset.icl_pool[0]
        with pytest.raises(PromptAssemblyError):
            assemble_prompt("binary", "FS", exemplar, small_dataset.icl_pool)

    def test_prompt_bytes_deterministic(self, small_dataset):
        target = small_dataset.test_split[3]
        a = assemble_prompt("three_class", "FS", target, small_dataset.icl_pool)
        b = assemble_prompt("three_class", "FS", target, small_dataset.icl_pool)
        assert json.dumps(a) == json.dumps(b)

    def test_attach_image_adds_part(self, small_dataset):
        target = small_dataset.test_split[0]
        messages = assemble_prompt("binary", "ZS", target, small_dataset.icl_pool,
                                   attach_image_b64="aGVsbG8=")
        content = messages[-1]["content"]
        assert isinstance(content, list)
        assert content[1]["type"] == "image_url"


def _flaky_transport(failures: int):
    calls = {"n": 0}

    def transport(endpoint, messages, opts, context):
        calls["n"] += 1
        if calls["n"] <= failures:
            raise TransportError("synthetic outage")
        return Completion(text="ok", latency_s=0.01)

    return transport, calls


class TestCompleteRetry:
    EP = ModelEndpoint(name="t")

    def test_mock_success_verbatim(self):
        transport, _ = _flaky_transport(0)
        out = complete(self.EP, [], transport=transport, sleep=no_sleep)
        assert out.text == "ok"
        assert out.attempts == 1

    def test_two_failures_then_success(self):
        transport, calls = _flaky_transport(2)
        delays = []
        out = complete(self.EP, [], transport=transport, sleep=delays.append,
                       rng=random.Random(0))
        assert out.attempts == 3
        assert calls["n"] == 3
        assert len(delays) == 2
        # Exponential backoff: jittered base 1 s then 2 s.
        assert 1.0 <= delays[0] <= 1.25
        assert 2.0 <= delays[1] <= 2.5

    def test_persistent_failure_capped_at_five(self):
        transport, calls = _flaky_transport(99)
        with pytest.raises(TransportError):
            complete(self.EP, [], transport=transport, sleep=no_sleep)
        assert calls["n"] == 5

    def test_endpoint_error_not_retried(self):
        calls = {"n": 0}

        def transport(endpoint, messages, opts, context):
            calls["n"] += 1
            raise EndpointError("bad request")

        with pytest.raises(EndpointError):
            complete(self.EP, [], transport=transport, sleep=no_sleep)
        assert calls["n"] == 1


class TestExtractVerdict:
    def test_plain_json(self):
        v = extract_verdict('{"label":"danger","confidence":0.92,"reasoning":"x"}',
                            "binary")
        assert v == {"label": "danger", "confidence": 0.92, "reasoning": "x"}

    def test_prose_wrapped_json(self):
        text = ('Sure! Here is my answer: {"label": "nominal", "confidence": 0.8, '
                '"reasoning": "calm pattern"} Hope that helps.')
        assert extract_verdict(text, "binary")["label"] == "nominal"

    def test_label_case_normalized(self):
        v = extract_verdict('{"label":"Danger","confidence":1,"reasoning":"r"}',
                            "binary")
        assert v["label"] == "danger"

    def test_unknown_label(self):
        with pytest.raises(VerdictParseError):
            extract_verdict('{"label":"maybe","confidence":0.5,"reasoning":"r"}',
                            "binary")

    def test_missing_field(self):
        with pytest.raises(VerdictParseError):
            extract_verdict('{"label":"danger","confidence":0.5}', "binary")

    def test_out_of_range_confidence(self):
        with pytest.raises(VerdictParseError):
            extract_verdict('{"label":"danger","confidence":1.4,"reasoning":"r"}',
                            "binary")

    def test_no_object(self):
        with pytest.raises(VerdictParseError):
            extract_verdict("no json here", "binary")

    def test_braces_inside_verdict_strings_ok(self):
        text = 'note: {"label":"hazard","confidence":0.7,"reasoning":"risk {high} now"}'
        v = extract_verdict(text, "three_class")
        assert v["reasoning"] == "risk {high} now"

    def test_first_object_wins_even_if_not_a_verdict(self):
        # The first balanced object is validated; a non-verdict preamble object
        # is a parse failure (handled upstream by the repair reprompt).
        text = ('{"note": "context"} '
                '{"label":"hazard","confidence":0.7,"reasoning":"r"}')
        with pytest.raises(VerdictParseError):
            extract_verdict(text, "three_class")


class TestCaptureScore:
    EP_LP = ModelEndpoint(name="lp", supports_logprobs=True)
    EP_NO = ModelEndpoint(name="conf", supports_logprobs=False)

    def test_fallback_nominal(self):
        score, source = capture_score("nominal", 0.9, Completion("", 0.0),
                                      "binary", self.EP_NO)
        assert score == pytest.approx(0.1)
        assert source == "confidence_fallback"

    def test_fallback_danger(self):
        score, _ = capture_score("danger", 0.9, Completion("", 0.0),
                                 "binary", self.EP_NO)
        assert score == pytest.approx(0.9)

    def test_logprob_mass(self):
        comp = Completion("", 0.0, label_probs={"danger": 0.8, "nominal": 0.2})
        score, source = capture_score("danger", 0.5, comp, "binary", self.EP_LP)
        assert score == pytest.approx(0.8)
        assert source == "logprob"

    def test_logprob_renormalized(self):
        comp = Completion("", 0.0, label_probs={"danger": 0.4, "nominal": 0.1})
        score, _ = capture_score("danger", 0.5, comp, "binary", self.EP_LP)
        assert score == pytest.approx(0.8)

    def test_three_class_danger_side_mass(self):
        comp = Completion("", 0.0, label_probs={"nominal": 0.5, "warning": 0.3,
                                                "hazard": 0.2})
        score, _ = capture_score("nominal", 0.5, comp, "three_class", self.EP_LP)
        assert score == pytest.approx(0.5)

    def test_unsupported_endpoint_never_reports_logprob(self):
        comp = Completion("", 0.0, label_probs={"danger": 0.8, "nominal": 0.2})
        _, source = capture_score("danger", 0.9, comp, "binary", self.EP_NO)
        assert source == "confidence_fallback"


def _scripted_transport(turns):
    """Replays scripted (text, latency) turns in order."""
    state = {"i": 0}

    def transport(endpoint, messages, opts, context):
        text, latency = turns[min(state["i"], len(turns) - 1)]
        state["i"] += 1
        return Completion(text=text, latency_s=latency)

    return transport


class TestRunProtocol:
    EP = ModelEndpoint(name="mock")

    def test_direct_valid_json(self, small_dataset):
        target = small_dataset.test_split[0]
        transport = _scripted_transport(
            [('{"label":"danger","confidence":0.8,"reasoning":"r"}', 0.4)])
        v = run_protocol(self.EP, "binary", "ZS", "direct", target,
                         small_dataset.icl_pool, transport=transport,
                         sleep=no_sleep)
        assert v.label == "danger"
        assert v.latency_s == pytest.approx(0.4)

    def test_cot_latency_sums_both_turns(self, small_dataset):
        target = small_dataset.test_split[0]
        seen = []

        def transport(endpoint, messages, opts, context):
            seen.append([m["content"] for m in messages if m["role"] == "user"])
            if context["turn"] == 1:
                return Completion(text="thinking out loud", latency_s=0.3)
            return Completion(
                text='{"label":"nominal","confidence":0.6,"reasoning":"r"}',
                latency_s=0.5)

        v = run_protocol(self.EP, "binary", "ZS", "cot", target,
                         small_dataset.icl_pool, transport=transport,
                         sleep=no_sleep)
        assert v.latency_s == pytest.approx(0.8)
        assert seen[0][-1].endswith(COT_ELICIT_SUFFIX)
        assert seen[1][-1] == COT_EXTRACT_MESSAGE

    def test_repair_reprompt_recovers(self, small_dataset):
        target = small_dataset.test_split[0]
        transport = _scripted_transport([
            ("not json at all", 0.2),
            ('{"label":"danger","confidence":0.9,"reasoning":"fixed"}', 0.3),
        ])
        v = run_protocol(self.EP, "binary", "ZS", "direct", target,
                         small_dataset.icl_pool, transport=transport,
                         sleep=no_sleep)
        assert v.label == "danger"
        assert not v.parse_failure
        assert v.latency_s == pytest.approx(0.5)

    def test_double_failure_is_parse_failure(self, small_dataset):
        target = small_dataset.test_split[0]
        transport = _scripted_transport([("nope", 0.2), ("still nope", 0.2)])
        v = run_protocol(self.EP, "binary", "ZS", "direct", target,
                         small_dataset.icl_pool, transport=transport,
                         sleep=no_sleep)
        assert v.parse_failure
        assert v.label is None
        assert v.score_danger == 0.5


class TestWrongClass:
    def test_binary_flip(self):
        assert wrong_class("nominal", "binary") == "danger"
        assert wrong_class("danger", "binary") == "nominal"

    def test_three_class(self):
        assert wrong_class("nominal", "three_class") == "hazard"
        assert wrong_class("warning", "three_class") == "nominal"
        assert wrong_class("hazard", "three_class") == "nominal"


class TestGenerationClient:
    def test_generation_sampling_settings(self):
        seen = {}

        def transport(endpoint, messages, opts, context):
            seen.update(opts)
            seen["messages"] = messages
            return Completion(text="1\n00:00:00,000 --> 00:00:04,000\ncall\n",
                              latency_s=0.1)

        client = make_generation_client(ModelEndpoint(name="gen"),
                                        transport=transport, sleep=no_sleep)
        out = client("system text", "user text")
        assert out.startswith("1\n")
        assert seen["temperature"] == 0.7
        assert seen["max_tokens"] == 1200
        assert seen["messages"][0] == {"role": "system", "content": "system text"}
        assert seen["messages"][1] == {"role": "user", "content": "user text"}

    def test_generation_retries_transient_failures(self):
        transport, calls = _flaky_transport(2)
        client = make_generation_client(ModelEndpoint(name="gen"),
                                        transport=transport, sleep=no_sleep)
        assert client("s", "u") == "ok"
        assert calls["n"] == 3


class _FakeChatHandler(BaseHTTPRequestHandler):
    script = []
    requests_seen = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).requests_seen.append(
            {"body": body, "auth": self.headers.get("Authorization")})
        status, payload = self.script.pop(0) if self.script else (200, None)
        if payload is None:
            payload = {"choices": [{"message": {"content":
                '{"label":"danger","confidence":0.9,"reasoning":"r"}'}}]}
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def fake_chat_server():
    server = HTTPServer(("127.0.0.1", 0), _FakeChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _FakeChatHandler.script = []
    _FakeChatHandler.requests_seen = []
    yield f"http://127.0.0.1:{server.server_port}/v1"
    server.shutdown()


class TestOpenAiChatTransport:
    def test_success_parses_content_and_sends_auth(self, fake_chat_server,
                                                   monkeypatch):
        monkeypatch.setenv("TEST_CHAT_KEY", "sekrit")
        ep = ModelEndpoint(name="m", kind="openai-chat",
                           base_url=fake_chat_server, auth_env="TEST_CHAT_KEY",
                           model="test-model", timeout_s=5)
        out = openai_chat_transport(
            ep, [{"role": "user", "content": "hi"}], {"max_tokens": 64}, {})
        assert json.loads(out.text)["label"] == "danger"
        seen = _FakeChatHandler.requests_seen[0]
        assert seen["auth"] == "Bearer sekrit"
        assert seen["body"]["model"] == "test-model"
        assert seen["body"]["max_tokens"] == 64

    def test_server_errors_retry_then_succeed(self, fake_chat_server):
        _FakeChatHandler.script = [(500, {"error": "x"}), (429, {"error": "x"}),
                                   (200, None)]
        ep = ModelEndpoint(name="m", base_url=fake_chat_server, timeout_s=5)
        out = complete(ep, [{"role": "user", "content": "hi"}],
                       {"max_tokens": 8}, sleep=no_sleep)
        assert out.attempts == 3

    def test_client_error_is_permanent(self, fake_chat_server):
        _FakeChatHandler.script = [(400, {"error": "bad"})]
        ep = ModelEndpoint(name="m", base_url=fake_chat_server, timeout_s=5)
        with pytest.raises(EndpointError):
            complete(ep, [{"role": "user", "content": "hi"}], sleep=no_sleep)
        assert len(_FakeChatHandler.requests_seen) == 1

    def test_logprob_extraction(self, fake_chat_server):
        import math
        payload = {"choices": [{
            "message": {"content": '{"label": "danger", "confidence": 0.9, '
                                   '"reasoning": "r"}'},
            "logprobs": {"content": [
                {"token": '{"', "top_logprobs": []},
                {"token": "danger", "logprob": math.log(0.7), "top_logprobs": [
                    {"token": "danger", "logprob": math.log(0.7)},
                    {"token": "nominal", "logprob": math.log(0.3)},
                ]},
            ]},
        }]}
        _FakeChatHandler.script = [(200, payload)]
        ep = ModelEndpoint(name="m", base_url=fake_chat_server,
                           supports_logprobs=True, timeout_s=5)
        out = openai_chat_transport(
            ep, [{"role": "user", "content": "hi"}],
            {"want_logprobs": True, "classes": ("nominal", "danger")}, {})
        assert out.label_probs["danger"] == pytest.approx(0.7)
        assert out.label_probs["nominal"] == pytest.approx(0.3)


class TestRunMatrix:
    def test_full_binary_matrix(self, small_dataset, oracle_endpoint,
                                oracle_transport, tmp_path):
        records = run_matrix(
            small_dataset, [oracle_endpoint], ["binary"],
            results_path=tmp_path / "r.jsonl",
            transports={"oracle": oracle_transport}, sleep=no_sleep)
        n_test = len(small_dataset.test_split)
        assert len(records) == 6 * n_test
        by_cond = {}
        for r in records:
            by_cond.setdefault(r.condition, []).append(r)
        assert len(by_cond) == 6
        for recs in by_cond.values():
            assert macro_f1(confusion(recs)) == 1.0

    def test_score_source_honest(self, small_dataset, tmp_path):
        transport = make_oracle_transport(gold_map(small_dataset))
        no_lp = ModelEndpoint(name="oracle", kind="mock-oracle",
                              supports_logprobs=False, max_parallel=2)
        records = run_matrix(small_dataset, [no_lp], ["binary"], ["ZS"], ["direct"],
                             results_path=tmp_path / "r.jsonl",
                             transports={"oracle": transport}, sleep=no_sleep)
        assert all(r.score_source == "confidence_fallback" for r in records)

    def test_resume_makes_no_duplicate_calls(self, small_dataset, oracle_endpoint,
                                             oracle_transport, tmp_path):
        path = tmp_path / "r.jsonl"
        first = run_matrix(small_dataset, [oracle_endpoint], ["binary"],
                           ["ZS", "OS"], ["direct"], results_path=path,
                           transports={"oracle": oracle_transport}, sleep=no_sleep)
        lines = path.read_text().splitlines()
        keep = 10
        path.write_text("\n".join(lines[:keep]) + "\n")
        calls = {"n": 0}

        def counting(endpoint, messages, opts, context):
            calls["n"] += 1
            return oracle_transport(endpoint, messages, opts, context)

        second = run_matrix(small_dataset, [oracle_endpoint], ["binary"],
                            ["ZS", "OS"], ["direct"], results_path=path,
                            transports={"oracle": counting}, sleep=no_sleep)
        assert [r.to_json() for r in second] == [r.to_json() for r in first]
        assert calls["n"] == len(first) - keep  # direct protocol: 1 call/record
        assert read_records(path) == second

    def test_rerun_after_completion_is_noop(self, small_dataset, oracle_endpoint,
                                            oracle_transport, tmp_path):
        path = tmp_path / "r.jsonl"
        args = dict(results_path=path, transports={"oracle": oracle_transport},
                    sleep=no_sleep)
        first = run_matrix(small_dataset, [oracle_endpoint], ["binary"], ["ZS"],
                           ["direct"], **args)
        before = path.read_bytes()
        calls = {"n": 0}

        def counting(endpoint, messages, opts, context):
            calls["n"] += 1
            return oracle_transport(endpoint, messages, opts, context)

        run_matrix(small_dataset, [oracle_endpoint], ["binary"], ["ZS"],
                   ["direct"], results_path=path,
                   transports={"oracle": counting}, sleep=no_sleep)
        assert calls["n"] == 0
        assert path.read_bytes() == before

    def test_error_records_kept_and_run_continues(self, small_dataset,
                                                  oracle_endpoint, tmp_path):
        def half_broken(endpoint, messages, opts, context):
            if context["scenario_id"].endswith(("1", "3")):
                raise EndpointError("synthetic 400")
            return make_oracle_transport(gold_map(small_dataset))(
                endpoint, messages, opts, context)

        records = run_matrix(small_dataset, [oracle_endpoint], ["binary"], ["ZS"],
                             ["direct"], results_path=tmp_path / "r.jsonl",
                             transports={"oracle": half_broken}, sleep=no_sleep)
        errored = [r for r in records if r.error]
        assert errored
        assert all(r.pred == wrong_class(r.gold, "binary") for r in errored)
        assert len(records) == len(small_dataset.test_split)
