"""Reference remote-generator service for the atlasforge edit protocol."""

from .protocol import (EditMessage, ProtocolError, build_error_response,
                       build_ok_response, parse_edit_request)
from .server import BridgeServer, handle_edit, serve

__version__ = "0.1.0"
