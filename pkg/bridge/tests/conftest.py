import threading

import pytest

from atlasbridge.server import BridgeServer


@pytest.fixture
def passthrough_server():
    with _running_server("passthrough") as server:
        yield server


@pytest.fixture
def recolor_server():
    with _running_server("recolor") as server:
        yield server


class _running_server:
    def __init__(self, generator: str):
        self.generator = generator

    def __enter__(self) -> BridgeServer:
        self.server = BridgeServer(("127.0.0.1", 0), self.generator)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        return self.server

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)
        return False
