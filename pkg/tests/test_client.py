import json

import httpx
import pytest

from icl_audit.client import (
    ChatTurn,
    GenerationRequest,
    HTTPProvider,
    ProviderConfig,
    RateLimiter,
    to_messages,
)
from icl_audit.data import LabeledSample
from icl_audit.embedding import HTTPEncoder
from icl_audit.exceptions import (
    AuthError,
    ConfigurationError,
    EmptyResponseError,
    PermanentProviderError,
)
from icl_audit.prompts import TREC, render_prompt

PROMPT = render_prompt(TREC, [LabeledSample("Who is Bob?", "Person")])


def chat_reply(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant",
                                                               "content": content}}]})


def make_provider(handler, monkeypatch, **kw):
    monkeypatch.setenv("AUDIT_API_KEY", "sekrit")
    cfg = ProviderConfig(kind="http", endpoint_url="https://llm.example/v1/", model_name="m",
                         requests_per_minute=1e6, **kw)
    return HTTPProvider(cfg, transport=httpx.MockTransport(handler), sleep=lambda s: None)


def test_wire_shape(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request)
        return chat_reply("Person")

    prov = make_provider(handler, monkeypatch)
    out = prov.generate(prov.request(PROMPT, [ChatTurn("user", "Question: x\nAnswer Type:")]))
    assert out == "Person"
    req = seen[0]
    assert req.method == "POST"
    assert str(req.url) == "https://llm.example/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer sekrit"
    body = json.loads(req.content)
    assert body["model"] == "m"
    assert body["temperature"] == 0.0 and body["max_tokens"] == 64
    assert body["messages"] == [
        {"role": "system", "content": PROMPT.rendered_context},
        {"role": "user", "content": "Question: x\nAnswer Type:"},
    ]


def test_inline_prompt_mode():
    req = GenerationRequest(PROMPT, (ChatTurn("user", "hi"),))
    msgs = to_messages(req, inline_prompt=True)
    assert msgs == [{"role": "user", "content": PROMPT.rendered_context + "\n\nhi"}]
    assert to_messages(GenerationRequest(None, (ChatTurn("user", "hi"),))) == [
        {"role": "user", "content": "hi"}]


def test_retries_transient_then_succeeds(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(429)
        if len(calls) == 2:
            return httpx.Response(503)
        return chat_reply("ok")

    prov = make_provider(handler, monkeypatch)
    assert prov.generate(prov.request(PROMPT, [ChatTurn("user", "q")])) == "ok"
    assert len(calls) == 3


def test_timeout_is_transient(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            raise httpx.ReadTimeout("slow", request=request)
        return chat_reply("ok")

    prov = make_provider(handler, monkeypatch)
    assert prov.generate(prov.request(PROMPT, [ChatTurn("user", "q")])) == "ok"


def test_retries_exhausted(monkeypatch):
    prov = make_provider(lambda r: httpx.Response(500), monkeypatch, max_retries=2)
    with pytest.raises(PermanentProviderError):
        prov.generate(prov.request(PROMPT, [ChatTurn("user", "q")]))


def test_client_error_is_permanent_without_retry(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad")

    prov = make_provider(handler, monkeypatch)
    with pytest.raises(PermanentProviderError):
        prov.generate(prov.request(PROMPT, [ChatTurn("user", "q")]))
    assert len(calls) == 1


def test_empty_completion(monkeypatch):
    prov = make_provider(lambda r: chat_reply(""), monkeypatch)
    with pytest.raises(EmptyResponseError):
        prov.generate(prov.request(PROMPT, [ChatTurn("user", "q")]))


def test_malformed_body(monkeypatch):
    prov = make_provider(lambda r: httpx.Response(200, json={"nope": 1}), monkeypatch)
    with pytest.raises(PermanentProviderError):
        prov.generate(prov.request(PROMPT, [ChatTurn("user", "q")]))


def test_missing_token_names_variable(monkeypatch):
    monkeypatch.delenv("MY_KEY", raising=False)
    cfg = ProviderConfig(kind="http", endpoint_url="https://x", model_name="m",
                         auth_token_env="MY_KEY")
    with pytest.raises(AuthError, match="MY_KEY"):
        HTTPProvider(cfg)


def test_http_config_needs_endpoint():
    with pytest.raises(ConfigurationError):
        ProviderConfig(kind="http")


def test_request_validation():
    with pytest.raises(ValueError):
        GenerationRequest(PROMPT, (ChatTurn("assistant", "x"),))
    with pytest.raises(ValueError):
        ChatTurn("robot", "x")


def test_rate_limiter_spaces_requests():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    lim = RateLimiter(60.0, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        lim.acquire()
    assert now[0] == pytest.approx(2.0)
    assert len(slept) == 2


def test_http_encoder_wire_shape(monkeypatch):
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert str(request.url) == "https://emb.example/v1/embeddings"
        return httpx.Response(200, json={"data": [{"embedding": [0.6, 0.8]}]})

    monkeypatch.setenv("AUDIT_API_KEY", "k")
    enc = HTTPEncoder("https://emb.example/v1", "e", transport=httpx.MockTransport(handler))
    v = enc.embed("hello")
    assert list(v.values) == [0.6, 0.8]
    assert seen == [{"model": "e", "input": "hello"}]
