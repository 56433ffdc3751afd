"""Pluggable edit-content sources.

Built-ins are deterministic pure functions used for testing the propagation
machinery: `passthrough` copies the valid init region and fills holes from
the nearest valid pixel; `recolor` additionally rotates hue by a stable hash
of the prompt while leaving the value channel untouched; `noisy-passthrough`
is passthrough that declares itself stochastic, which makes the engine apply
the noise-schedule perturbation to its init. `remote` forwards the request
to a generator service over the wire protocol.
"""

from __future__ import annotations

import json
import struct
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .guidance import EdgeMap
from .scene import Frame

REMOTE_TIMEOUT = 120.0
MAX_BODY_BYTES = 64 * 1024 * 1024

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class GeneratorError(Exception):
    pass


class UnknownGeneratorError(GeneratorError):
    pass


class RemoteGeneratorError(GeneratorError):
    pass


@dataclass
class GenInput:
    """One generation request.

    init, when present, is the appearance to stay consistent with (partial
    frames carry a validity mask). condition is the structure-guidance edge
    map. mode tells remote backends whether this is the first key frame or a
    propagated one.
    """

    init: Optional[Frame] = None
    condition: Optional[EdgeMap] = None
    prompt: str = ""
    t0: float = 0.0
    seed: int = 0
    mode: str = "first"  # "first" | "propagate"

    def validate(self) -> None:
        if self.init is not None and self.condition is not None:
            if (self.init.height, self.init.width) != (self.condition.height, self.condition.width):
                raise ValueError(
                    f"init is {self.init.width}x{self.init.height} but condition is "
                    f"{self.condition.width}x{self.condition.height}")


def prompt_hash(prompt: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 prompt."""
    h = _FNV_OFFSET
    for byte in prompt.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hue_angle(prompt: str) -> float:
    """Hue rotation in integer degrees, [0, 360)."""
    return float(prompt_hash(prompt) % 360)


# ---------------------------------------------------------------------------
# Nearest-valid hole filling
# ---------------------------------------------------------------------------

def _offsets_at_sq_distance(d2: int) -> list[tuple[int, int]]:
    """Integer (dy, dx) with dy^2 + dx^2 == d2, ascending by (dy, dx)."""
    out = []
    r = int(np.floor(np.sqrt(d2))) + 1
    for dy in range(-r, r + 1):
        rem = d2 - dy * dy
        if rem < 0:
            continue
        dx = int(round(np.sqrt(rem)))
        if dx * dx != rem:
            continue
        if dx == 0:
            out.append((dy, 0))
        else:
            out.append((dy, -dx))
            out.append((dy, dx))
    out.sort()
    return out


def nearest_valid_fill(pixels: np.ndarray, validity: np.ndarray) -> np.ndarray:
    """Fill invalid pixels from the nearest valid one (Euclidean distance,
    ties broken by smaller source row, then smaller source column)."""
    if validity.all():
        return pixels.copy()
    if not validity.any():
        raise GeneratorError("cannot fill: init has no valid pixels")
    h, w = validity.shape
    dist = ndimage.distance_transform_edt(~validity)
    out = pixels.copy()
    rows, cols = np.nonzero(~validity)
    d2 = np.rint(dist[rows, cols] ** 2).astype(np.int64)
    for val in np.unique(d2):
        group = d2 == val
        gr, gc = rows[group], cols[group]
        unresolved = np.ones(gr.size, dtype=bool)
        for dy, dx in _offsets_at_sq_distance(int(val)):
            if not unresolved.any():
                break
            sr = gr + dy
            sc = gc + dx
            hit = (unresolved & (sr >= 0) & (sr < h) & (sc >= 0) & (sc < w))
            hit[hit] = validity[sr[hit], sc[hit]]
            out[gr[hit], gc[hit]] = pixels[sr[hit], sc[hit]]
            unresolved &= ~hit
        if unresolved.any():  # EDT said this distance exists; a source must too
            raise AssertionError("nearest-valid search missed a source pixel")
    return out


# ---------------------------------------------------------------------------
# Color space for the recolor edit
# ---------------------------------------------------------------------------

def rgb_to_hsv(rgb: np.ndarray):
    """Vectorized RGB -> (hue degrees, saturation, value)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0.0, c / np.where(v > 0.0, v, 1.0), 0.0)
    h = np.zeros_like(v)
    nz = c > 0.0
    safe_c = np.where(nz, c, 1.0)
    rmax = nz & (v == r)
    gmax = nz & (v == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    h = np.where(rmax, (60.0 * (g - b) / safe_c) % 360.0, h)
    h = np.where(gmax, 60.0 * (b - r) / safe_c + 120.0, h)
    h = np.where(bmax, 60.0 * (r - g) / safe_c + 240.0, h)
    return h % 360.0, s, v


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB. The max output channel is v exactly."""
    hp = (h % 360.0) / 60.0
    c = v * s
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    m = v - c
    sector = np.floor(hp).astype(np.int64) % 6
    mx = m + x
    r = np.choose(sector, [v, mx, m, m, mx, v])
    g = np.choose(sector, [mx, v, v, mx, m, m])
    b = np.choose(sector, [m, m, mx, v, v, mx])
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

class Generator:
    """Base interface. Subclasses set name/fidelity/stochastic and generate()."""

    name = "base"
    fidelity = "exact"
    stochastic = False

    def generate(self, request: GenInput) -> Frame:
        raise NotImplementedError


def _filled_init(request: GenInput) -> np.ndarray:
    if request.init is None:
        raise GeneratorError("generator requires an init frame")
    request.validate()
    return nearest_valid_fill(request.init.pixels, request.init.valid_mask())


class PassthroughGenerator(Generator):
    """Identity on the valid init region; holes filled from nearest valid pixel."""

    name = "passthrough"
    fidelity = "exact"

    def generate(self, request: GenInput) -> Frame:
        return Frame(_filled_init(request))


class RecolorGenerator(Generator):
    """Hue rotation keyed by the prompt; value channel (and thus edges) kept."""

    name = "recolor"
    fidelity = "color-transformed"

    def generate(self, request: GenInput) -> Frame:
        filled = _filled_init(request)
        h, s, v = rgb_to_hsv(filled)
        return Frame(hsv_to_rgb(h + hue_angle(request.prompt), s, v))


class NoisyPassthroughGenerator(Generator):
    """Passthrough that declares itself stochastic: the engine perturbs its
    init with the noise schedule before the call. Output clipped to [0,1]."""

    name = "noisy-passthrough"
    fidelity = "best-effort"
    stochastic = True

    def generate(self, request: GenInput) -> Frame:
        return Frame(np.clip(_filled_init(request), 0.0, 1.0))


class RemoteGenerator(Generator):
    """Client for a generator service speaking the framed edit protocol."""

    name = "remote"
    fidelity = "best-effort"
    stochastic = True

    def __init__(self, url: str, timeout: float = REMOTE_TIMEOUT):
        if not url:
            raise ValueError("remote generator requires an endpoint URL")
        self.url = url.rstrip("/")
        self.timeout = timeout

    def generate(self, request: GenInput) -> Frame:
        return remote_generate(self.url, request, timeout=self.timeout)


_BUILTINS = {
    gen.name: gen for gen in (PassthroughGenerator(), RecolorGenerator(),
                              NoisyPassthroughGenerator())
}

GENERATOR_IDS = tuple(sorted(_BUILTINS)) + ("remote",)


def get_generator(gen_id: str, remote_url: Optional[str] = None,
                  timeout: float = REMOTE_TIMEOUT) -> Generator:
    if gen_id == "remote":
        if not remote_url:
            raise UnknownGeneratorError("generator 'remote' requires a remote URL")
        return RemoteGenerator(remote_url, timeout=timeout)
    try:
        return _BUILTINS[gen_id]
    except KeyError:
        raise UnknownGeneratorError(
            f"unknown generator {gen_id!r}; available: {', '.join(GENERATOR_IDS)}") from None


def generate(gen_id: str, request: GenInput, remote_url: Optional[str] = None) -> Frame:
    return get_generator(gen_id, remote_url=remote_url).generate(request)


def builtin_passthrough(request: GenInput) -> Frame:
    return _BUILTINS["passthrough"].generate(request)


def builtin_recolor(request: GenInput) -> Frame:
    return _BUILTINS["recolor"].generate(request)


# ---------------------------------------------------------------------------
# Wire protocol client
# ---------------------------------------------------------------------------

def encode_edit_request(request: GenInput) -> bytes:
    """Frame a GenInput: 4-byte LE header length, JSON header, raw payloads."""
    if request.init is not None:
        w, h = request.init.width, request.init.height
    elif request.condition is not None:
        w, h = request.condition.width, request.condition.height
    else:
        raise ValueError("request needs an init or a condition to define dimensions")
    request.validate()
    header = {
        "width": w,
        "height": h,
        "t0": float(request.t0),
        "prompt": request.prompt,
        "seed": int(request.seed),
        "mode": request.mode,
        "has_init": request.init is not None,
        "has_condition": request.condition is not None,
    }
    parts = [json.dumps(header, sort_keys=True).encode("utf-8")]
    body = bytearray(struct.pack("<I", len(parts[0])))
    body += parts[0]
    if request.init is not None:
        body += np.ascontiguousarray(request.init.pixels, dtype="<f4").tobytes()
        body += np.ascontiguousarray(request.init.valid_mask(), dtype=np.uint8).tobytes()
    if request.condition is not None:
        body += np.where(request.condition.edges, 255, 0).astype(np.uint8).tobytes()
    return bytes(body)


def decode_edit_response(body: bytes, width: int, height: int) -> np.ndarray:
    """Parse a framed response into an (H, W, 3) float64 image in [0,1]."""
    if len(body) < 4:
        raise RemoteGeneratorError("response shorter than its length prefix")
    (hlen,) = struct.unpack("<I", body[:4])
    if 4 + hlen > len(body):
        raise RemoteGeneratorError(
            f"response header length {hlen} exceeds body ({len(body) - 4} bytes)")
    try:
        header = json.loads(body[4:4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise RemoteGeneratorError(f"malformed response header: {e}") from e
    status = header.get("status")
    if status == "error":
        raise RemoteGeneratorError(f"server error: {header.get('message', '(no message)')}")
    if status != "ok":
        raise RemoteGeneratorError(f"unexpected response status {status!r}")
    payload = body[4 + hlen:]
    expected = width * height * 3 * 4
    if len(payload) != expected:
        raise RemoteGeneratorError(
            f"response image is {len(payload)} bytes, expected {expected}")
    img = np.frombuffer(payload, dtype="<f4").reshape(height, width, 3)
    return np.clip(img.astype(np.float64), 0.0, 1.0)


def remote_generate(endpoint: str, request: GenInput,
                    timeout: float = REMOTE_TIMEOUT) -> Frame:
    """Send one edit to a remote generator service and decode the result."""
    if request.init is not None:
        w, h = request.init.width, request.init.height
    elif request.condition is not None:
        w, h = request.condition.width, request.condition.height
    else:
        raise ValueError("request needs an init or a condition to define dimensions")
    body = encode_edit_request(request)
    if len(body) > MAX_BODY_BYTES:
        raise RemoteGeneratorError(f"request body {len(body)} bytes exceeds 64 MiB limit")
    url = endpoint.rstrip("/") + "/v1/edit"
    req = urllib.request.Request(url, data=body, method="POST",
                                 headers={"Content-Type": "application/octet-stream"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as e:
        raise RemoteGeneratorError(f"HTTP {e.code} from {url}: {e.reason}") from e
    except urllib.error.URLError as e:
        raise RemoteGeneratorError(f"cannot reach {url}: {e.reason}") from e
    except TimeoutError as e:
        raise RemoteGeneratorError(f"timed out after {timeout}s talking to {url}") from e
    return Frame(decode_edit_response(raw, w, h))
