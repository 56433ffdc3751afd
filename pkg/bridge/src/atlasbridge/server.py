"""HTTP service exposing the reference generators over the edit protocol.

GET /v1/health answers "ok"; POST /v1/edit takes a framed request and
answers a framed response. Malformed messages produce structured error
responses (HTTP 200, status "error") and never kill the connection or the
server. Requests are stateless, so the threading server handles them
concurrently.

A real diffusion backend mounts here: implement `handle_edit(message)`
returning an (H, W, 3) float image, honoring message.t0 by noising/denoising
in its own latent space, and register it in GENERATORS.
"""

from __future__ import annotations

import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .protocol import (MAX_BODY_BYTES, EditMessage, ProtocolError,
                       build_error_response, build_ok_response,
                       parse_edit_request)
from .reference import (ReferenceError, generate_passthrough,
                        generate_recolor, procedural_init)

log = logging.getLogger("atlasbridge")


def handle_edit(message: EditMessage, generator: str) -> np.ndarray:
    """Dispatch one parsed edit to the configured reference generator."""
    if message.init is not None:
        if not message.validity.any():
            raise ReferenceError("empty init: validity mask is all zero")
        init = message.init.astype(np.float64)
        validity = message.validity
    elif message.mode == "first" and message.condition is not None:
        init = procedural_init(message.condition)
        validity = np.ones((message.height, message.width), dtype=bool)
    else:
        raise ReferenceError(
            "request carries no init and no condition to synthesize one from")

    if generator == "passthrough":
        return generate_passthrough(init, validity)
    if generator == "recolor":
        return generate_recolor(init, validity, message.prompt)
    raise ReferenceError(f"server misconfigured: unknown generator {generator!r}")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, code: int, body: bytes, content_type="application/octet-stream"):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send(200, b"ok", content_type="text/plain")
        else:
            self._send(404, b"not found", content_type="text/plain")

    def do_POST(self):
        if self.path != "/v1/edit":
            self._send(404, b"not found", content_type="text/plain")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if length < 0 or length > MAX_BODY_BYTES:
            # drain nothing; the framed error keeps the client side sane but
            # the connection cannot be reused with an unread body
            self.close_connection = True
            self._send(200, build_error_response(
                f"refusing body of {length} bytes (limit {MAX_BODY_BYTES})"))
            return
        body = self.rfile.read(length)
        try:
            message = parse_edit_request(body)
            pixels = handle_edit(message, self.server.generator_name)
            response = build_ok_response(pixels)
        except (ProtocolError, ReferenceError) as e:
            response = build_error_response(str(e))
        except Exception as e:  # noqa: BLE001 - the server must stay up
            log.exception("unexpected failure handling /v1/edit")
            response = build_error_response(f"internal error: {e}")
        self._send(200, response)


class BridgeServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], generator: str):
        if generator not in ("passthrough", "recolor"):
            raise ValueError(f"unknown generator {generator!r}")
        super().__init__(address, _Handler)
        self.generator_name = generator

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def serve(bind: str, generator: str) -> None:
    """Run the service until interrupted. bind is HOST:PORT."""
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"--bind expects HOST:PORT, got {bind!r}")
    server = BridgeServer((host, int(port_text)), generator)
    log.info("serving %s generator on %s", generator, server.url)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
