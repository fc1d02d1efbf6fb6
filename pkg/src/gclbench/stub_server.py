"""In-process stub of an embeddings endpoint for tests and offline runs.

Returns deterministic unit vectors derived from a hash of each input text,
so reruns and cache comparisons are exact. A drift schedule can force the
response dimension to change after N requests, for exercising client checks.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np


def deterministic_embedding(text: str, dim: int) -> list[float]:
    digest = hashlib.sha256(text.encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return [float(x) for x in v.astype(np.float32)]


class StubEmbeddingServer:
    """Context manager: serves POST /embeddings on an ephemeral port."""

    def __init__(self, dim: int = 8, drift_dim: int | None = None, drift_after: int = 1,
                 fail_first: int = 0):
        self.dim = dim
        self.drift_dim = drift_dim
        self.drift_after = drift_after
        self.fail_first = fail_first
        self.request_count = 0
        self.last_auth_header: str | None = None
        self._lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        assert self._httpd is not None
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubEmbeddingServer":
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                if not self.path.endswith("/embeddings"):
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length))
                with outer._lock:
                    outer.request_count += 1
                    count = outer.request_count
                    outer.last_auth_header = self.headers.get("Authorization")
                if count <= outer.fail_first:
                    self.send_error(503, "transient failure")
                    return
                dim = outer.dim
                if outer.drift_dim is not None and count > outer.drift_after:
                    dim = outer.drift_dim
                data = [
                    {"index": i, "embedding": deterministic_embedding(t, dim)}
                    for i, t in enumerate(body.get("input", []))
                ]
                payload = json.dumps({"data": data}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        return False
