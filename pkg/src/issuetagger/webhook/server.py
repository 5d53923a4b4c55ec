from __future__ import annotations

import logging
import signal
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .service import WebhookService

log = logging.getLogger(__name__)

MAX_BODY = 25 * 1024 * 1024


class _Handler(BaseHTTPRequestHandler):
    service: WebhookService
    server_version = "issuetagger"

    def _dispatch(self, method: str) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            self.send_error(413)
            return
        body = self.rfile.read(length) if length else b""
        response = self.service.handle_request(method, self.path, dict(self.headers.items()), body)
        payload = response.encode()
        self.send_response(response.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self) -> None:  # noqa: N802
        self._dispatch("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._dispatch("POST")

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        log.debug("%s %s", self.address_string(), format % args)


class WebhookServer(ThreadingHTTPServer):
    # non-daemon handler threads: server_close() waits for in-flight deliveries
    daemon_threads = False
    block_on_close = True


def make_server(service: WebhookService, host: str = "127.0.0.1", port: int = 0) -> WebhookServer:
    handler = type("Handler", (_Handler,), {"service": service})
    return WebhookServer((host, port), handler)


def serve(service: WebhookService, host: str, port: int, retry_interval: float = 30.0) -> None:
    """Run until SIGINT/SIGTERM, then finish in-flight deliveries and return."""
    server = make_server(service, host, port)
    stop = threading.Event()

    def retry_loop() -> None:
        while not stop.wait(retry_interval):
            service.retry_due()

    retrier = threading.Thread(target=retry_loop, name="label-retries", daemon=True)
    retrier.start()

    def on_term(signum, frame):  # noqa: ARG001
        raise KeyboardInterrupt

    previous = signal.signal(signal.SIGTERM, on_term)
    log.info("listening on %s:%d, model %s", *server.server_address[:2], service.model_fingerprint[:12])
    try:
        server.serve_forever(poll_interval=0.2)
    except KeyboardInterrupt:
        log.info("shutting down")
    finally:
        stop.set()
        server.server_close()
        signal.signal(signal.SIGTERM, previous)
