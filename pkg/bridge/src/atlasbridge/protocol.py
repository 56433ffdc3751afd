"""Framed edit protocol.

Request body: 4-byte little-endian header length, UTF-8 JSON header, then raw
payloads in declared order: init (W*H*3 float32 LE) + validity (W*H bytes,
0/1) when has_init, condition (W*H bytes, 0/255) when has_condition.
Response: 4-byte header length, JSON {"status": "ok"} or
{"status": "error", "message": ...}, then on ok W*H*3 float32 LE pixels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

MAX_BODY_BYTES = 64 * 1024 * 1024

HEADER_KEYS = ("width", "height", "t0", "prompt", "seed", "mode",
               "has_init", "has_condition")


class ProtocolError(Exception):
    """Malformed message; the server reports it as a structured error."""


@dataclass
class EditMessage:
    width: int
    height: int
    t0: float
    prompt: str
    seed: int
    mode: str
    init: Optional[np.ndarray]       # (H, W, 3) float32
    validity: Optional[np.ndarray]   # (H, W) bool
    condition: Optional[np.ndarray]  # (H, W) bool


def parse_edit_request(body: bytes) -> EditMessage:
    if len(body) > MAX_BODY_BYTES:
        raise ProtocolError(f"body of {len(body)} bytes exceeds the 64 MiB limit")
    if len(body) < 4:
        raise ProtocolError("body shorter than its 4-byte length prefix")
    (header_len,) = struct.unpack("<I", body[:4])
    if 4 + header_len > len(body):
        raise ProtocolError(
            f"header length {header_len} exceeds body ({len(body) - 4} bytes after prefix)")
    try:
        header = json.loads(body[4:4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"malformed JSON header: {e}") from e
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ProtocolError(f"header missing keys: {', '.join(missing)}")
    try:
        width = int(header["width"])
        height = int(header["height"])
        t0 = float(header["t0"])
        seed = int(header["seed"])
    except (TypeError, ValueError) as e:
        raise ProtocolError(f"malformed header field: {e}") from e
    if width < 1 or height < 1:
        raise ProtocolError(f"illegal dimensions {width}x{height}")
    mode = header["mode"]
    if mode not in ("first", "propagate"):
        raise ProtocolError(f"unknown mode {mode!r}")

    offset = 4 + header_len
    count = width * height
    init = validity = condition = None
    if header["has_init"]:
        need = count * 3 * 4 + count
        if len(body) - offset < need:
            raise ProtocolError(
                f"init payload truncated: need {need} bytes, have {len(body) - offset}")
        init = np.frombuffer(body, dtype="<f4", count=count * 3,
                             offset=offset).reshape(height, width, 3)
        offset += count * 3 * 4
        validity = np.frombuffer(body, dtype=np.uint8, count=count,
                                 offset=offset).reshape(height, width) != 0
        offset += count
    if header["has_condition"]:
        if len(body) - offset < count:
            raise ProtocolError(
                f"condition payload truncated: need {count} bytes, have {len(body) - offset}")
        condition = np.frombuffer(body, dtype=np.uint8, count=count,
                                  offset=offset).reshape(height, width) != 0
        offset += count
    if offset != len(body):
        raise ProtocolError(f"{len(body) - offset} unexpected trailing bytes")
    return EditMessage(width=width, height=height, t0=t0,
                       prompt=str(header["prompt"]), seed=seed, mode=mode,
                       init=init, validity=validity, condition=condition)


def build_ok_response(pixels: np.ndarray) -> bytes:
    header = json.dumps({"status": "ok"}, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(pixels, dtype="<f4").tobytes()
    return struct.pack("<I", len(header)) + header + payload


def build_error_response(message: str) -> bytes:
    header = json.dumps({"message": message, "status": "error"},
                        sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(header)) + header
