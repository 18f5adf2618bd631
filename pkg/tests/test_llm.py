import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from refinery.llm import (
    REPAIR_NOTE,
    BackendError,
    CachingBackend,
    ChatRequest,
    OpenAICompatibleBackend,
    ParseError,
    ScriptedBackend,
    ScriptExhausted,
    call_with_repair,
    extract_json_object,
)
from refinery.stubserver import StubServer


def req(tag="planner#1", scope="", user="u"):
    return ChatRequest("sys", user, tag, scope=scope)


def test_scripted_echo():
    b = ScriptedBackend({"planner#1": ['{"aspect": 1}']})
    assert b.complete(req()).text == '{"aspect": 1}'


def test_scripted_exhausted():
    b = ScriptedBackend({"planner#1": []})
    with pytest.raises(ScriptExhausted, match="script exhausted"):
        b.complete(req())


def test_scripted_lookup_order():
    b = ScriptedBackend({
        "s/planner#1": ["scoped"],
        "planner#1": ["plain"],
        "s/planner#*": "scoped-default",
        "planner#*": "default",
    })
    assert b.complete(req(scope="s")).text == "scoped"
    assert b.complete(req(scope="s")).text == "plain"
    assert b.complete(req(scope="s")).text == "scoped-default"
    assert b.complete(req(scope="other")).text == "default"
    assert len(b.calls_for("planner#1")) == 4


@given(st.lists(st.text(max_size=10), max_size=8))
def test_scripted_referentially_transparent(responses):
    script = {"refiner#1": responses}
    out = []
    for _ in range(2):
        b = ScriptedBackend(script)
        out.append([b.complete(req("refiner#1")).text for _ in responses])
    assert out[0] == out[1] == responses


@pytest.mark.parametrize("text,field,expected", [
    ('Sure! {"aspect": 2}', "aspect", 2),
    ('{"explanation": "great food"}', "explanation", "great food"),
    ('```json\n{"a": {"b": 1}, "aspect": 3}\n```', "aspect", 3),
    ('{bad} then {"aspect": 1}', "aspect", 1),
])
def test_extract_json_object(text, field, expected):
    assert extract_json_object(text, field) == expected


def test_extract_json_object_errors():
    with pytest.raises(ParseError):
        extract_json_object("no json here", "aspect")
    with pytest.raises(ParseError):
        extract_json_object('{"other": 1}', "aspect")
    with pytest.raises(ParseError):
        extract_json_object('{"aspect": true}', "aspect", int)


def test_repair_second_attempt():
    b = ScriptedBackend({"planner#1": ["garbage", '{"aspect": 0}']})
    assert call_with_repair(b, req(), "aspect", max_attempts=2) == 0
    first, second = b.calls
    assert first.user_prompt == "u"
    assert second.user_prompt.endswith(REPAIR_NOTE)


def test_repair_exhausted():
    b = ScriptedBackend({"planner#1": ["garbage"]})
    with pytest.raises(ParseError):
        call_with_repair(b, req(), "aspect", max_attempts=1)


def test_no_repair_needed():
    b = ScriptedBackend({"planner#1": ['{"aspect": 1}']})
    call_with_repair(b, req(), "aspect")
    assert len(b.calls) == 1


def test_caching_backend():
    b = ScriptedBackend({"planner#1": ["a", "b"]})
    c = CachingBackend(b)
    assert c.complete(req()).text == c.complete(req()).text == "a"
    assert len(b.calls) == 1


def _live(server, **kw):
    kw.setdefault("sleep", lambda s: None)
    return OpenAICompatibleBackend(server.base_url, "stub-model", api_key="k", **kw)


def test_live_retries_transient_then_succeeds():
    with StubServer(statuses=[500, 500]) as server:
        resp = _live(server, max_attempts=3).complete(req(user="x"))
    assert len(server.requests) == 3
    assert resp.text == "{}"
    assert server.headers[0]["Authorization"] == "Bearer k"
    body = server.requests[0]
    assert body["model"] == "stub-model"
    assert [m["role"] for m in body["messages"]] == ["system", "user"]


def test_live_gives_up_after_max_attempts():
    sleeps = []
    with StubServer(statuses=[503] * 5) as server:
        with pytest.raises(BackendError, match="giving up"):
            _live(server, max_attempts=3, backoff_base=0.5, sleep=sleeps.append).complete(req())
    assert len(server.requests) == 3
    assert sleeps == [0.5, 1.0]


@pytest.mark.parametrize("status", [400, 401, 403, 404, 422])
def test_live_never_retries_client_errors(status):
    with StubServer(statuses=[status]) as server:
        with pytest.raises(BackendError, match=str(status)):
            _live(server).complete(req())
    assert len(server.requests) == 1


def test_live_retries_429():
    with StubServer(statuses=[429]) as server:
        _live(server).complete(req())
    assert len(server.requests) == 2


def test_live_malformed_payload():
    def handler(request):
        return httpx.Response(200, json={"choices": []})
    client = httpx.Client(transport=httpx.MockTransport(handler))
    b = OpenAICompatibleBackend("http://x/v1", "m", api_key="k", client=client)
    with pytest.raises(BackendError, match="malformed"):
        b.complete(req())


def test_live_transport_error_is_retried():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) == 1:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})
    client = httpx.Client(transport=httpx.MockTransport(handler))
    b = OpenAICompatibleBackend("http://x/v1", "m", api_key="k", client=client, sleep=lambda s: None)
    assert b.complete(req()).text == "ok"
    assert str(calls[0].url) == "http://x/v1/chat/completions"
