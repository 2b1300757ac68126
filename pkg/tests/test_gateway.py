import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from dlrepro.errors import ProviderFailure, ReplayMissError
from dlrepro.gateway import (
    HttpGateway,
    MockGateway,
    ProviderConfig,
    RecordingGateway,
    ReplayGateway,
    complete_digest,
    cross_digest,
    embed_digest,
)

MSGS = [{"role": "user", "content": "say hi"}]


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.server.seen.append((self.path, body))
        status, payload = self.server.script(self.path, body, len(self.server.seen))
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    server.seen = []
    server.script = lambda path, body, n: (200, {"text": "CONSTANT", "embedding": [1.0, 0.0], "score": 0.5})
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    thread.join(timeout=2)


def url_of(server):
    return f"http://127.0.0.1:{server.server_address[1]}"


def test_mock_embed_deterministic_unit_norm():
    gw = MockGateway(ProviderConfig(embed_dim=32))
    a = gw.embed("some text")
    b = gw.embed("some text")
    c = gw.embed("other text")
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-9)
    assert a.shape == (32,)


def test_mock_cross_score_identity_and_disjoint():
    gw = MockGateway(ProviderConfig())
    assert gw.cross_score("model fit loss", "model fit loss") == 1.0
    assert gw.cross_score("alpha beta", "gamma delta") == 0.0


def test_mock_complete_without_responder_fails():
    gw = MockGateway(ProviderConfig())
    with pytest.raises(ProviderFailure):
        gw.complete(MSGS)


def test_digest_determinism_and_sensitivity():
    d1 = complete_digest(MSGS, "model-a", 0.0, 1.0, 0)
    d2 = complete_digest(MSGS, "model-a", 0.0, 1.0, 0)
    d3 = complete_digest(MSGS, "model-b", 0.0, 1.0, 0)
    assert d1 == d2
    assert d1 != d3
    assert embed_digest("t", 8) != embed_digest("t", 9)
    assert cross_digest("a", "b") != cross_digest("b", "a")


def test_record_mode_against_stub_and_log_growth(stub_server, tmp_path):
    log = tmp_path / "exchanges.jsonl"
    config = ProviderConfig(endpoint=url_of(stub_server), retry_backoff_s=0.01)
    gw = RecordingGateway(HttpGateway(config), log)

    assert gw.complete(MSGS) == "CONSTANT"
    lines = log.read_text().splitlines()
    assert len(lines) == 1
    row = json.loads(lines[0])
    assert row["kind"] == "complete"
    assert row["response"] == "CONSTANT"
    assert row["digest"]

    gw.embed("text")
    gw.cross_score("a", "b")
    kinds = [json.loads(l)["kind"] for l in log.read_text().splitlines()]
    assert kinds == ["complete", "embed", "cross"]


def test_replay_returns_recorded_bytes(stub_server, tmp_path):
    log = tmp_path / "exchanges.jsonl"
    config = ProviderConfig(endpoint=url_of(stub_server), retry_backoff_s=0.01)
    rec = RecordingGateway(HttpGateway(config), log)
    live = rec.complete(MSGS)
    vec = rec.embed("payload")
    score = rec.cross_score("q", "d")

    replay = ReplayGateway(log, config=config)
    assert replay.complete(MSGS) == live
    assert np.array_equal(replay.embed("payload"), vec)
    assert replay.cross_score("q", "d") == score


def test_strict_replay_miss_is_error_not_live_call(stub_server, tmp_path):
    log = tmp_path / "exchanges.jsonl"
    log.write_text("")
    config = ProviderConfig(endpoint=url_of(stub_server))
    replay = ReplayGateway(log, config=config)
    with pytest.raises(ReplayMissError):
        replay.complete(MSGS)
    assert stub_server.seen == []  # nothing reached the network


def test_http_retries_then_succeeds(stub_server):
    def flaky(path, body, n):
        if n <= 2:
            return 500, {"error": "busy"}
        return 200, {"text": "OK"}

    stub_server.script = flaky
    config = ProviderConfig(endpoint=url_of(stub_server), max_retries=3, retry_backoff_s=0.01)
    gw = HttpGateway(config)
    assert gw.complete(MSGS) == "OK"
    assert len(stub_server.seen) == 3


def test_http_exhausted_retries_raises_with_digest(stub_server):
    stub_server.script = lambda path, body, n: (500, {"error": "down"})
    config = ProviderConfig(endpoint=url_of(stub_server), max_retries=1, retry_backoff_s=0.01)
    gw = HttpGateway(config)
    with pytest.raises(ProviderFailure) as exc:
        gw.complete(MSGS)
    assert exc.value.digest
    assert len(stub_server.seen) == 2  # initial try plus one retry


def test_role_model_map_selects_model(stub_server):
    config = ProviderConfig(
        endpoint=url_of(stub_server),
        model="fallback",
        role_models={"text": "general-7b", "code": "coder-7b"},
        retry_backoff_s=0.01,
    )
    gw = HttpGateway(config)
    gw.complete(MSGS, role="code")
    gw.complete(MSGS, role="text")
    gw.complete(MSGS, role="unmapped")
    models = [body["model"] for _, body in stub_server.seen]
    assert models == ["coder-7b", "general-7b", "fallback"]


def test_rate_ceiling_spaces_requests(stub_server):
    import time

    config = ProviderConfig(endpoint=url_of(stub_server), requests_per_second=25, retry_backoff_s=0.01)
    gw = HttpGateway(config)
    start = time.monotonic()
    gw.complete(MSGS)
    gw.complete(MSGS)
    assert time.monotonic() - start >= 0.04
