import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from needforge.trec_io import DL, R04, GradeScale, Qrels


class FakeLlmServer:
    """Local OpenAI-compatible endpoint with a scriptable handler.

    The script receives the parsed request body and returns either
    (status_code, text_response) or just a text response. Concurrency and
    request counts are tracked for the gateway tests.
    """

    def __init__(self, script=None):
        self.script = script or (lambda body: "ok")
        self.request_count = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                with server._lock:
                    server.request_count += 1
                    server.in_flight += 1
                    server.max_in_flight = max(server.max_in_flight, server.in_flight)
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length) or b"{}")
                    result = server.script(body)
                    if isinstance(result, tuple):
                        status, payload = result
                    else:
                        status, payload = 200, result
                    if self.path == "/embed-tokens":
                        out = payload if isinstance(payload, (dict, str)) else {}
                        data = (out if isinstance(out, str)
                                else json.dumps(out)).encode("utf-8")
                    else:
                        data = json.dumps({
                            "choices": [{"message": {"content": payload}}]
                        }).encode("utf-8")
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    with server._lock:
                        server.in_flight -= 1

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def fake_server():
    servers = []

    def make(script=None):
        server = FakeLlmServer(script)
        servers.append(server)
        return server

    yield make
    for s in servers:
        s.close()


def scripted_responder(body):
    """Deterministic stand-in for an LLM: synthesis prompts get a JSON topic,
    judge prompts get an integer grade, both derived from the prompt hash."""
    prompt = body["messages"][-1]["content"]
    digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
    if "search quality rater" in prompt:
        max_grade = 3 if "perfectly relevant" in prompt else 2
        return f"Considering the topic, the grade is {int(digest[:8], 16) % (max_grade + 1)}"
    words = [digest[i:i + 4] for i in range(0, 24, 4)]
    return json.dumps({
        "title": f"topic {words[0]}",
        "description": f"information about {words[1]} and {words[2]}",
        "narrative": f"documents mentioning {words[3]} or {words[4]} are relevant, "
                     f"{words[5]} is not",
    })


class StubGateway:
    """In-process gateway double; `reply` maps a prompt to a raw response."""

    def __init__(self, reply):
        self.reply = reply
        self.calls = []

    def complete(self, req):
        self.calls.append(req)
        return self.reply(req.user_prompt)


@pytest.fixture
def r04() -> GradeScale:
    return R04


@pytest.fixture
def dl() -> GradeScale:
    return DL


@pytest.fixture
def toy_qrels(r04) -> Qrels:
    return Qrels({
        ("1", "d1"): 2, ("1", "d2"): 1, ("1", "d3"): 0, ("1", "d4"): 0,
        ("2", "d1"): 0, ("2", "d5"): 2, ("2", "d6"): 1, ("2", "d7"): 0,
    }, r04)
