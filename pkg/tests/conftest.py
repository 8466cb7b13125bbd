from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from fgiscan.catalog import default_catalog


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


class RegistryStub:
    """In-process HTTP server returning canned JSON documents.

    routes maps a request path to (status, payload); payload may be a dict
    (serialized as JSON) or raw bytes. Every request path is recorded in
    hits so tests can assert on cache behavior.
    """

    def __init__(self):
        self.routes: dict[str, tuple[int, object]] = {}
        self.hits: list[str] = []

        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 (http.server naming)
                stub.hits.append(self.path)
                status, payload = stub.routes.get(self.path, (404, {}))
                body = payload if isinstance(payload, bytes) \
                    else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(
            target=self.server.serve_forever, daemon=True
        )
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def registry_stub():
    stub = RegistryStub()
    yield stub
    stub.close()
