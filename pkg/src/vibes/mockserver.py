"""In-process mock of a chat-completions vision endpoint.

Serves canned incident bodies round-robin with configurable latency and
deterministic failure injection, so the dispatch path (retries, backoff,
asynchrony) is testable without any external model.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Sequence, Union

DEFAULT_RESPONSE = json.dumps(
    {
        "incident_type": "dangerous driving",
        "secondary_type": "sudden stop",
        "entities": [{"vehicle_type": "car", "role": "anomalous vehicle"}],
        "narrative": "A distant vehicle decelerated sharply against the traffic flow.",
    }
)


class MockReasonerServer:
    def __init__(
        self,
        port: int = 0,
        responses: Optional[Sequence[str]] = None,
        latency_s: float = 0.0,
        fail_rate: float = 0.0,
        fail_script: Optional[Sequence[bool]] = None,
    ):
        self.responses = list(responses) if responses else [DEFAULT_RESPONSE]
        self.latency_s = latency_s
        self.fail_rate = fail_rate
        self.fail_script = list(fail_script) if fail_script else []
        self.request_count = 0
        self._fail_acc = 0.0
        self._lock = threading.Lock()

        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                self.rfile.read(length)
                if outer.latency_s > 0:
                    time.sleep(outer.latency_s)
                with outer._lock:
                    index = outer.request_count
                    outer.request_count += 1
                    if index < len(outer.fail_script):
                        fail = outer.fail_script[index]
                    else:
                        outer._fail_acc += outer.fail_rate
                        fail = outer._fail_acc >= 1.0 - 1e-12
                        if fail:
                            outer._fail_acc -= 1.0
                if fail:
                    self.send_response(500)
                    self.end_headers()
                    self.wfile.write(b"injected failure")
                    return
                content = outer.responses[index % len(outer.responses)]
                body = json.dumps(
                    {
                        "id": f"mock-{index}",
                        "object": "chat.completion",
                        "choices": [
                            {
                                "index": 0,
                                "message": {"role": "assistant", "content": content},
                                "finish_reason": "stop",
                            }
                        ],
                    }
                ).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):  # silence request logging
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def start(self) -> "MockReasonerServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "MockReasonerServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def load_responses(path: Union[str, Path]) -> list[str]:
    """Responses file: JSON list of strings or objects (objects are dumped)."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(obj, dict):
        obj = obj.get("responses", [])
    out = []
    for item in obj:
        out.append(item if isinstance(item, str) else json.dumps(item))
    return out
