"""Gateway tests: determinism, cache, retry/backoff, limits, and HTTP wiring."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from prosemill.errors import (
    BackendUnavailable,
    BudgetExceeded,
    InvalidRequest,
    TransientBackendError,
)
from prosemill.gateway import (
    Backend,
    ChatRequest,
    Gateway,
    GatewayLimits,
    MockBackend,
    OpenAICompatibleBackend,
    backend_from_config,
    complete,
    gateway_from_config,
    mock_backend,
)


class FakeClock:
    """Manual monotonic clock; sleep() advances it and records the waits."""

    def __init__(self):
        self.now = 0.0
        self.sleeps: list[float] = []

    def __call__(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.now += seconds


class FlakyBackend(Backend):
    name = "flaky"

    def __init__(self, failures: int):
        self.failures = failures
        self.attempts = 0

    def complete_raw(self, req: ChatRequest):
        self.attempts += 1
        if self.attempts <= self.failures:
            raise TransientBackendError(f"attempt {self.attempts} failed")
        return "finally", 5, 2


def req(text: str = "say something", **kwargs) -> ChatRequest:
    return ChatRequest.build("test-model", text, **kwargs)


# --- request validation -------------------------------------------------------

def test_request_rejects_empty_messages():
    with pytest.raises(InvalidRequest):
        ChatRequest(model="m", messages=())


def test_request_rejects_unknown_role():
    with pytest.raises(InvalidRequest):
        ChatRequest(model="m", messages=(("narrator", "hi"), ("user", "x")))


def test_request_requires_trailing_user_message():
    with pytest.raises(InvalidRequest):
        ChatRequest(model="m", messages=(("user", "hi"), ("assistant", "yo")))


def test_request_rejects_bad_numbers():
    with pytest.raises(InvalidRequest):
        req(temperature=-0.1)
    with pytest.raises(InvalidRequest):
        req(max_tokens=0)


def test_build_prepends_system_message():
    r = ChatRequest.build("m", "question", system="be brief")
    assert r.messages == (("system", "be brief"), ("user", "question"))


# --- cache key composition ------------------------------------------------------

def test_cache_key_sensitivity():
    base = req(seed=1, template_id="t")
    assert base.cache_key() == req(seed=1, template_id="t").cache_key()
    assert base.cache_key() != req(seed=2, template_id="t").cache_key()
    assert base.cache_key() != req(seed=1, template_id="u").cache_key()
    assert base.cache_key() != req(seed=1, template_id="t",
                                   temperature=0.5).cache_key()
    other_model = ChatRequest.build("other", "say something", seed=1,
                                    template_id="t")
    assert base.cache_key() != other_model.cache_key()
    # max_tokens is intentionally outside the key: a retry with a bigger
    # completion window should still hit the cached answer.
    assert base.cache_key() == req(seed=1, template_id="t",
                                   max_tokens=9).cache_key()


# --- mock backend ----------------------------------------------------------------

def test_mock_is_deterministic():
    a = complete(req("tell me a tale"), mock_backend(seed=5))
    b = complete(req("tell me a tale"), mock_backend(seed=5))
    c = complete(req("tell me a tale"), mock_backend(seed=6))
    assert a.content == b.content
    assert a.content != c.content


def test_mock_echo_directive():
    resp = complete(req("please [[echo:exact text 'X']] thanks"), mock_backend())
    assert resp.content == "exact text 'X'"


def test_mock_script_overrides_by_template():
    backend = mock_backend(script={"greet": "canned", "shout": lambda r: "HI!"})
    assert complete(req(template_id="greet"), backend).content == "canned"
    assert complete(req(template_id="shout"), backend).content == "HI!"
    generic = complete(req(template_id="other"), backend)
    assert generic.content.startswith("mock-response ")


def test_mock_records_calls():
    backend = mock_backend()
    complete(req("first"), backend)
    complete(req("second"), backend)
    assert [r.joined_content() for r in backend.calls] == ["first", "second"]


def test_token_accounting_formula():
    backend = mock_backend()
    resp = complete(req("x" * 10), backend)
    assert resp.prompt_tokens == 3  # ceil(10 / 4)
    assert resp.completion_tokens >= 1


# --- disk cache -------------------------------------------------------------------

def test_cache_hit_returns_identical_bytes(tmp_path):
    gw = Gateway(mock_backend(seed=1), cache_dir=tmp_path, cache_enabled=True)
    first = gw.complete(req("stable request", seed=3))
    second = gw.complete(req("stable request", seed=3))
    assert first.cached is False
    assert second.cached is True
    assert second.content == first.content
    assert gw.stats.requests == 1
    assert gw.stats.cache_hits == 1


def test_cache_survives_gateway_restart(tmp_path):
    Gateway(mock_backend(), cache_dir=tmp_path, cache_enabled=True).complete(
        req("persist me"))
    fresh = Gateway(mock_backend(), cache_dir=tmp_path, cache_enabled=True)
    resp = fresh.complete(req("persist me"))
    assert resp.cached is True
    assert fresh.stats.requests == 0


def test_cache_disabled_by_default(tmp_path):
    gw = Gateway(mock_backend())
    gw.complete(req("hello"))
    assert gw.complete(req("hello")).cached is False
    assert gw.stats.requests == 2


# --- retry and backoff ----------------------------------------------------------------

def test_retry_recovers_with_exponential_backoff():
    clock = FakeClock()
    gw = Gateway(FlakyBackend(failures=2),
                 limits=GatewayLimits(backoff_base=0.5, backoff_multiplier=2.0),
                 clock=clock, sleep=clock.sleep)
    resp = gw.complete(req())
    assert resp.content == "finally"
    assert clock.sleeps == [0.5, 1.0]
    assert gw.stats.retries == 2


def test_retry_budget_exhaustion_raises():
    clock = FakeClock()
    backend = FlakyBackend(failures=99)
    gw = Gateway(backend, limits=GatewayLimits(max_retries=3),
                 clock=clock, sleep=clock.sleep)
    with pytest.raises(BackendUnavailable):
        gw.complete(req())
    assert backend.attempts == 4  # initial try + 3 retries
    assert clock.sleeps == [0.5, 1.0, 2.0]


# --- rate limiting and budget ------------------------------------------------------------

def test_rpm_window_blocks_then_releases():
    clock = FakeClock()
    gw = Gateway(mock_backend(), limits=GatewayLimits(rpm=2),
                 clock=clock, sleep=clock.sleep)
    gw.complete(req("one"))
    clock.now = 10.0
    gw.complete(req("two"))
    clock.now = 20.0
    gw.complete(req("three"))
    # Third call had to wait until the first timestamp (t=0) left the
    # 60 s window: one sleep of 60 - (20 - 0) = 40 s.
    assert clock.sleeps == [40.0]
    assert gw.stats.requests == 3


def test_rpm_zero_means_unlimited():
    clock = FakeClock()
    gw = Gateway(mock_backend(), limits=GatewayLimits(rpm=0),
                 clock=clock, sleep=clock.sleep)
    for i in range(5):
        gw.complete(req(f"n{i}"))
    assert clock.sleeps == []


def test_token_budget_exceeded():
    gw = Gateway(mock_backend(), limits=GatewayLimits(max_total_tokens=1))
    gw.complete(req("first is allowed"))
    with pytest.raises(BudgetExceeded):
        gw.complete(req("second is not"))


def test_in_flight_peak_respects_limit():
    import time as _time

    class SlowBackend(Backend):
        name = "slow"

        def complete_raw(self, r):
            _time.sleep(0.01)
            return "ok", 1, 1

    gw = Gateway(SlowBackend(), limits=GatewayLimits(max_in_flight=3))
    results: list[str] = []
    errors: list[Exception] = []

    def worker(i: int) -> None:
        try:
            results.append(gw.complete(req(f"job {i}")).content)
        except Exception as exc:  # pragma: no cover - failure path
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(results) == 16
    assert 1 <= gw.stats.in_flight_peak <= 3


# --- HTTP backend wire format ------------------------------------------------------

class _Server:
    """Tiny OpenAI-shaped endpoint capturing each request for assertions."""

    def __init__(self, fail_first: int = 0):
        self.seen: list[dict] = []
        remaining = {"fails": fail_first}
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(
                    int(self.headers["Content-Length"])))
                outer.seen.append({
                    "path": self.path,
                    "auth": self.headers.get("Authorization"),
                    "body": body,
                })
                if remaining["fails"] > 0:
                    remaining["fails"] -= 1
                    self.send_response(503)
                    self.end_headers()
                    return
                payload = {
                    "choices": [{"message": {"content": "hello from server"}}],
                    "usage": {"prompt_tokens": 7, "completion_tokens": 3},
                }
                raw = json.dumps(payload).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_port}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture()
def server():
    srv = _Server()
    yield srv
    srv.close()


def test_http_backend_wire_format(server, monkeypatch):
    monkeypatch.setenv("TEST_GW_KEY", "test-key-123")
    backend = OpenAICompatibleBackend(server.url + "/", model="srv-model",
                                      api_key_env="TEST_GW_KEY")
    resp = complete(
        ChatRequest.build("", "ping", system="sys", seed=9, temperature=0.25),
        backend,
    )
    assert resp.content == "hello from server"
    assert resp.prompt_tokens == 7 and resp.completion_tokens == 3
    sent = server.seen[0]
    assert sent["path"] == "/v1/chat/completions"
    assert sent["auth"] == "Bearer test-key-123"
    assert sent["body"]["model"] == "srv-model"  # backend default fills in
    assert sent["body"]["messages"] == [
        {"role": "system", "content": "sys"},
        {"role": "user", "content": "ping"},
    ]
    assert sent["body"]["temperature"] == 0.25
    assert sent["body"]["seed"] == 9


def test_http_backend_missing_credential(server, monkeypatch):
    monkeypatch.delenv("ABSENT_KEY", raising=False)
    backend = OpenAICompatibleBackend(server.url, model="m",
                                      api_key_env="ABSENT_KEY")
    with pytest.raises(BackendUnavailable) as err:
        backend.complete_raw(req())
    assert "ABSENT_KEY" in str(err.value)


def test_http_backend_retries_transient_status(monkeypatch):
    srv = _Server(fail_first=2)
    try:
        monkeypatch.setenv("TEST_GW_KEY", "k")
        clock = FakeClock()
        gw = Gateway(
            OpenAICompatibleBackend(srv.url, model="m", api_key_env="TEST_GW_KEY"),
            limits=GatewayLimits(max_retries=3),
            clock=clock, sleep=clock.sleep,
        )
        resp = gw.complete(req())
        assert resp.content == "hello from server"
        assert len(srv.seen) == 3
        assert gw.stats.retries == 2
    finally:
        srv.close()


def test_http_backend_rejects_unreachable_host(monkeypatch):
    monkeypatch.setenv("TEST_GW_KEY", "k")
    backend = OpenAICompatibleBackend("http://127.0.0.1:1", model="m",
                                      api_key_env="TEST_GW_KEY")
    with pytest.raises(TransientBackendError):
        backend.complete_raw(req())


# --- config builders ------------------------------------------------------------------

def test_backend_from_config_variants():
    mock = backend_from_config({"kind": "mock", "seed": 4})
    assert isinstance(mock, MockBackend) and mock.seed == 4
    with pytest.raises(InvalidRequest):
        backend_from_config({"kind": "openai_compatible"})
    with pytest.raises(InvalidRequest):
        backend_from_config({"kind": "carrier-pigeon"})


def test_gateway_from_config_wires_limits(tmp_path):
    gw = gateway_from_config({
        "backend": {"kind": "mock"},
        "limits": {"rpm": 5, "max_in_flight": 2, "max_retries": 1,
                   "max_total_tokens": 1000},
        "cache": {"dir": str(tmp_path), "enabled": True},
    })
    assert gw.limits.rpm == 5
    assert gw.limits.max_in_flight == 2
    assert gw.cache is not None
    assert gw.complete(req("cached?")).cached is False
    assert gw.complete(req("cached?")).cached is True
