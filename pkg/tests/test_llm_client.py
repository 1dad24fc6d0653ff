import json

import httpx
import numpy as np
import openai
import pytest

from ai.llm_client import (
    LlmClient,
    LlmStatusError,
    LlmTransportError,
    MalformedPromptError,
    MalformedResponseError,
    ResponseTooLargeError,
    complete,
    mock_complete,
)
from conftest import endpoint_config, random_observation
from policy.baselines import greedy_queue_aware_policy
from policy.decision import Observation, SensorObservation, UavObservation, parse_decision
from policy.icl import IclPolicy
from policy.prompt import ExampleBuffer, build_prompt, default_task_description, record_feedback

OBS = Observation(
    step=0, uav_id=1,
    uavs=(UavObservation(uav_id=0, x=0.0, y=0.0, h=30.0, waypoint_idx=0, v_max=20.0, hovering=True),
          UavObservation(uav_id=1, x=40.0, y=40.0, h=30.0, waypoint_idx=1, v_max=15.0, hovering=True)),
    sensors=(SensorObservation(sensor_id=0, queue_len=12, battery_j=50.0, gain_db=118.0),
             SensorObservation(sensor_id=5, queue_len=25, battery_j=50.0, gain_db=112.0)),
    claimed=(0,), queue_cap=40, gain_threshold_db=100.0,
)
PROMPT = build_prompt(default_task_description(40, 100.0, 15.0), ExampleBuffer(0), OBS, ()).text


class FlakyTransport:
    def __init__(self, failures, error=LlmTransportError, reply="DECISIONS\nuav=1 sensor=5 velocity=3.0\nEND"):
        self.failures = failures
        self.error = error
        self.reply = reply
        self.calls = 0

    def __call__(self, prompt):
        self.calls += 1
        if self.calls <= self.failures:
            raise self.error("boom")
        return self.reply


def test_mock_backend_answers_with_greedy_decision():
    decision = parse_decision(mock_complete(PROMPT), OBS)
    assert decision == greedy_queue_aware_policy(OBS)
    assert decision.sensor_id == 5


def test_mock_backend_rejects_prompts_without_observation():
    with pytest.raises(MalformedPromptError):
        mock_complete("hello")


def test_mock_record_uses_configured_latency():
    client = LlmClient(endpoint_config(mock_latency=0.125))
    text, record = client.complete(PROMPT)
    assert record.latency == 0.125 and record.attempt == 1 and record.ok
    assert record.prompt_chars == len(PROMPT) and record.response_chars == len(text)


def test_retries_with_exponential_backoff():
    sleeps = []
    transport = FlakyTransport(failures=2)
    client = LlmClient(endpoint_config(max_retries=2, backoff_base=0.5), transport=transport, sleep=sleeps.append)
    text, record = client.complete(PROMPT)
    assert transport.calls == 3
    assert sleeps == [0.5, 1.0]
    assert record.attempt == 3
    assert [r.ok for r in client.records] == [False, False, True]


def test_gives_up_after_max_retries():
    transport = FlakyTransport(failures=10, error=LlmStatusError)
    client = LlmClient(endpoint_config(max_retries=1), transport=transport, sleep=lambda s: None)
    with pytest.raises(LlmStatusError):
        client.complete(PROMPT)
    assert transport.calls == 2
    assert len(client.records) == 2


def test_malformed_prompt_is_not_retried():
    transport = FlakyTransport(failures=10, error=MalformedPromptError)
    client = LlmClient(endpoint_config(max_retries=3), transport=transport, sleep=lambda s: None)
    with pytest.raises(MalformedPromptError):
        client.complete(PROMPT)
    assert transport.calls == 1


def test_oversized_response_rejected():
    client = LlmClient(endpoint_config(max_response_chars=10), transport=lambda p: "x" * 11)
    with pytest.raises(ResponseTooLargeError):
        client.complete(PROMPT)


def test_empty_prompt_rejected():
    with pytest.raises(ValueError):
        LlmClient(endpoint_config()).complete("")


def test_module_level_complete_uses_mock_backend():
    text, _ = complete(PROMPT, endpoint_config())
    assert text.startswith("DECISIONS")


@pytest.mark.parametrize("kwargs", [
    {"backend": "carrier-pigeon"},
    {"timeout": 0.0},
    {"max_retries": -1},
    {"backoff_base": -0.1},
    {"max_response_chars": 0},
])
def test_endpoint_config_validation(kwargs):
    with pytest.raises(ValueError):
        endpoint_config(**kwargs)


def chat_completion(content):
    return {
        "id": "chatcmpl-1",
        "object": "chat.completion",
        "created": 0,
        "model": "test-model",
        "choices": [{
            "index": 0,
            "finish_reason": "stop",
            "message": {"role": "assistant", "content": content},
        }],
    }


def live_client(handler, monkeypatch, **overrides):
    monkeypatch.setenv("UAVSIM_TEST_KEY", "sk-test")
    cfg = endpoint_config(backend="live", base_url="http://llm.test/v1", model_name="test-model",
                         api_key_env="UAVSIM_TEST_KEY", backoff_base=0.0, **overrides)
    http_client = httpx.Client(transport=httpx.MockTransport(handler))
    return LlmClient(cfg, sleep=lambda s: None, http_client=http_client)


def test_live_backend_returns_message_content(monkeypatch):
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json=chat_completion("DECISIONS\nuav=1 sensor=5 velocity=7.5\nEND"))

    client = live_client(handler, monkeypatch)
    text, record = client.complete(PROMPT)
    assert parse_decision(text, OBS).velocity == 7.5
    assert seen[0]["model"] == "test-model"
    assert seen[0]["messages"][0]["content"] == PROMPT
    assert record.backend == "live" and record.latency >= 0.0


def test_live_backend_maps_server_errors(monkeypatch):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(500, json={"error": {"message": "overloaded"}})

    client = live_client(handler, monkeypatch, max_retries=2)
    with pytest.raises(LlmStatusError):
        client.complete(PROMPT)
    assert len(calls) == 3


def test_live_backend_maps_connection_errors(monkeypatch):
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    client = live_client(handler, monkeypatch, max_retries=0)
    with pytest.raises(LlmTransportError):
        client.complete(PROMPT)


def test_live_backend_without_choices_is_a_malformed_response(monkeypatch):
    def handler(request):
        return httpx.Response(200, json={**chat_completion("unused"), "choices": []})

    client = live_client(handler, monkeypatch, max_retries=2)
    with pytest.raises(MalformedResponseError):
        client.complete(PROMPT)
    assert len(client.records) == 0


def test_live_backend_maps_other_api_errors(monkeypatch):
    client = live_client(lambda request: httpx.Response(200, json=chat_completion("")), monkeypatch, max_retries=0)

    def broken(**kwargs):
        raise openai.APIError("garbled body", httpx.Request("POST", "http://llm.test/v1"), body=None)

    monkeypatch.setattr(client.load_client().chat.completions, "create", broken)
    with pytest.raises(LlmStatusError):
        client.complete(PROMPT)


def test_icl_policy_falls_back_when_live_backend_returns_no_choices(monkeypatch):
    def handler(request):
        return httpx.Response(200, json={**chat_completion("unused"), "choices": []})

    task = default_task_description(40, 100.0, 15.0)
    policy = IclPolicy(live_client(handler, monkeypatch), task, ExampleBuffer(0), use_attention=False)
    outcome = policy.decide(OBS)
    assert outcome.source == "fallback" and outcome.error == "MalformedResponseError"
    assert outcome.decision == greedy_queue_aware_policy(OBS)


def test_prompt_mock_parse_loop_on_random_observations():
    rng = np.random.default_rng(41)
    task = default_task_description(40, 100.0, 20.0)
    buf = ExampleBuffer(8)
    for _ in range(1000):
        obs = random_observation(rng)
        ids = list(obs.sensor_ids)
        pruned = tuple(sorted(rng.choice(ids, size=int(rng.integers(0, len(ids) + 1)), replace=False).tolist()))
        prompt = build_prompt(task, buf, obs, pruned, char_budget=4000)
        shown = obs if prompt.full_observation_fallback else obs.restricted(pruned)

        decision = parse_decision(mock_complete(prompt.text), obs)

        assert decision == greedy_queue_aware_policy(shown)
        assert decision.sensor_id in shown.sensor_ids
        record_feedback(buf, shown, decision, int(rng.integers(0, 20)))
    assert len(buf) == 8


@pytest.mark.live
def test_live_endpoint_round_trip():
    client = LlmClient(endpoint_config(backend="live"))
    text, _ = client.complete(PROMPT)
    assert text
