"""Fuses per-key-frame partial atlases into one edited atlas.

The model is a two-convolution network (3x3 kernels, ReLU between, zero
padding) over a stacked input of RGB+coverage channels per key frame, with a
skip connection that adds the coverage-weighted mean atlas. A zero-weight
net therefore reproduces the mean atlas exactly, and training only has to
learn a correction. The loss is the opacity-weighted L1 distance between
each edited key frame and the atlas resampled through that frame's UV map;
gradients flow through the (linear) bilinear sampling, the skip sum, the
ReLU, and both convolutions. Optimization is full-batch gradient descent
with classical momentum.

Convolutions run as nine shifted GEMMs over padded flat buffers; the conv1
patch matrix is cached across epochs because the input stack never changes.
Training defaults to float32 for speed; all public entry points follow the
dtype of the network they are given (the gradient-check suite runs float64).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .mapping import COVERAGE_EPS, inverse_splat, sample_grid, splat_grid, uv_positions
from .scene import AlphaMap, Atlas, Frame, Scene, UVMap

HIDDEN_CHANNELS = 16


class AggregationError(Exception):
    pass


@dataclass(eq=False)
class AggregationNet:
    conv1_w: np.ndarray  # (hidden, 4K, 3, 3)
    conv1_b: np.ndarray  # (hidden,)
    conv2_w: np.ndarray  # (3, hidden, 3, 3)
    conv2_b: np.ndarray  # (3,)

    @property
    def in_channels(self) -> int:
        return self.conv1_w.shape[1]

    @property
    def hidden(self) -> int:
        return self.conv1_w.shape[0]

    @property
    def dtype(self):
        return self.conv1_w.dtype

    def params(self) -> list[tuple[str, np.ndarray]]:
        return [("conv1_w", self.conv1_w), ("conv1_b", self.conv1_b),
                ("conv2_w", self.conv2_w), ("conv2_b", self.conv2_b)]

    def copy(self) -> "AggregationNet":
        return AggregationNet(self.conv1_w.copy(), self.conv1_b.copy(),
                              self.conv2_w.copy(), self.conv2_b.copy())


@dataclass(eq=False)
class NetGradients:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray

    def params(self) -> list[tuple[str, np.ndarray]]:
        return [("conv1_w", self.conv1_w), ("conv1_b", self.conv1_b),
                ("conv2_w", self.conv2_w), ("conv2_b", self.conv2_b)]


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 0.003
    momentum: float = 0.9
    seed: int = 0
    atlas_size: Optional[tuple[int, int]] = None  # None: use the layer's atlas dims
    dtype: type = np.float32

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr < 0.0:
            raise ValueError(f"learning rate must be nonnegative, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


@dataclass
class TrainData:
    """Everything one edit's training needs, at a fixed atlas resolution."""

    input_stack: np.ndarray        # (Ha, Wa, 4K)
    baseline: np.ndarray           # (Ha, Wa, 3)
    keyframes: list[Frame]
    uvs: list[UVMap]
    alphas: list[AlphaMap]


def init_net(num_keyframes: int, hidden: int = HIDDEN_CHANNELS, seed: int = 0,
             dtype=np.float32) -> AggregationNet:
    """Seeded init: every parameter uniform in +-sqrt(1/fan_in), fan_in = Cin*9."""
    rng = np.random.default_rng(seed)
    cin = 4 * num_keyframes
    lim1 = np.sqrt(1.0 / (cin * 9))
    lim2 = np.sqrt(1.0 / (hidden * 9))
    return AggregationNet(
        conv1_w=rng.uniform(-lim1, lim1, size=(hidden, cin, 3, 3)).astype(dtype),
        conv1_b=rng.uniform(-lim1, lim1, size=hidden).astype(dtype),
        conv2_w=rng.uniform(-lim2, lim2, size=(3, hidden, 3, 3)).astype(dtype),
        conv2_b=rng.uniform(-lim2, lim2, size=3).astype(dtype),
    )


# ---------------------------------------------------------------------------
# 3x3 convolution via shifted GEMMs on padded flat buffers
# ---------------------------------------------------------------------------

def _pad_flat(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    xp = np.zeros((h + 2, w + 2, c), dtype=x.dtype)
    xp[1:h + 1, 1:w + 1] = x
    return xp.reshape(-1, c)


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shape-preserving 3x3 convolution with zero padding."""
    h, wd, _ = x.shape
    cout = w.shape[0]
    wp = wd + 2
    xf = _pad_flat(x)
    of = np.zeros(((h + 2) * wp, cout), dtype=x.dtype)
    n = of.shape[0]
    for dy in range(3):
        for dx in range(3):
            d = (dy - 1) * wp + (dx - 1)
            lo, hi = max(0, -d), min(n, n - d)
            of[lo:hi] += xf[lo + d:hi + d] @ w[:, :, dy, dx].T
    return of.reshape(h + 2, wp, cout)[1:h + 1, 1:wd + 1] + b.astype(x.dtype)


def _conv3x3_grads(x_flat: np.ndarray, x_shape, gout: np.ndarray, w: np.ndarray,
                   need_gx: bool):
    """Parameter (and optionally input) gradients of conv3x3.

    x_flat is the padded flat input (as produced by _pad_flat).
    """
    h, wd, cin = x_shape
    cout = gout.shape[-1]
    wp = wd + 2
    gp = np.zeros((h + 2, wp, cout), dtype=gout.dtype)
    gp[1:h + 1, 1:wd + 1] = gout
    gf = gp.reshape(-1, cout)
    n = gf.shape[0]
    gw = np.empty((cout, cin, 3, 3), dtype=gout.dtype)
    gxf = np.zeros_like(x_flat) if need_gx else None
    for dy in range(3):
        for dx in range(3):
            d = (dy - 1) * wp + (dx - 1)
            lo, hi = max(0, -d), min(n, n - d)
            gw[:, :, dy, dx] = gf[lo:hi].T @ x_flat[lo + d:hi + d]
            if need_gx:
                gxf[lo + d:hi + d] += gf[lo:hi] @ w[:, :, dy, dx]
    gb = gout.reshape(-1, cout).sum(axis=0)
    gx = gxf.reshape(h + 2, wp, cin)[1:h + 1, 1:wd + 1] if need_gx else None
    return gw, gb, gx


# ---------------------------------------------------------------------------
# Forward / loss / gradients
# ---------------------------------------------------------------------------

def net_forward(net: AggregationNet, input_stack: np.ndarray,
                baseline: np.ndarray) -> np.ndarray:
    """conv2(ReLU(conv1(input))) + baseline, unclamped."""
    if input_stack.shape[-1] != net.in_channels:
        raise ValueError(f"input has {input_stack.shape[-1]} channels, "
                         f"net expects {net.in_channels}")
    x = input_stack.astype(net.dtype, copy=False)
    z1 = conv3x3(x, net.conv1_w, net.conv1_b)
    a1 = np.maximum(z1, 0)
    return conv3x3(a1, net.conv2_w, net.conv2_b) + baseline.astype(net.dtype, copy=False)


class _Workspace:
    """Per-edit caches for the training loop.

    The input stack never changes, so its 3x3 patch matrix (im2col) is built
    once; conv1's forward and weight-gradient become single large GEMMs.
    conv2 sees a fresh activation every epoch and stays on the shifted-GEMM
    path.
    """

    def __init__(self, data: TrainData, dtype):
        self.x = data.input_stack.astype(dtype, copy=False)
        h, w, cin = self.x.shape
        xp = np.zeros((h + 2, w + 2, cin), dtype=self.x.dtype)
        xp[1:h + 1, 1:w + 1] = self.x
        win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(0, 1))
        self.col1 = np.ascontiguousarray(win.reshape(h * w, cin * 9))
        self.baseline = data.baseline.astype(dtype, copy=False)
        ha, wa = data.baseline.shape[:2]
        self.atlas_dims = (wa, ha)
        self.targets = []
        for frame, uv, alpha in zip(data.keyframes, data.uvs, data.alphas):
            px, py, mapped = uv_positions(uv, wa, ha)
            weights = alpha.values.astype(np.float64) * mapped
            wsum = float(weights.sum())
            self.targets.append((frame.pixels, px, py, weights, wsum))

    def forward(self, net: AggregationNet):
        h, w, _ = self.x.shape
        hidden = net.hidden
        wm1 = net.conv1_w.transpose(1, 2, 3, 0).reshape(-1, hidden)
        z1 = (self.col1 @ wm1 + net.conv1_b).reshape(h, w, hidden)
        a1 = np.maximum(z1, 0)
        out = conv3x3(a1, net.conv2_w, net.conv2_b) + self.baseline
        return out, z1, a1

    def loss_grad_atlas(self, out: np.ndarray):
        """Opacity-weighted L1 loss over all key frames + its atlas gradient."""
        wa, ha = self.atlas_dims
        out64 = out.astype(np.float64, copy=False)
        loss = 0.0
        gatlas = np.zeros((ha, wa, 3))
        for pixels, px, py, weights, wsum in self.targets:
            if wsum == 0.0:
                continue
            sampled = sample_grid(out64, px, py)
            resid = sampled - pixels
            loss += float((weights[..., None] * np.abs(resid)).sum()) / (3.0 * wsum)
            gframe = weights[..., None] * np.sign(resid) / (3.0 * wsum)
            acc, _ = splat_grid(gframe.reshape(-1, 3), np.ones(px.size),
                                px.ravel(), py.ravel(), wa, ha)
            gatlas += acc
        return loss, gatlas

    def backward(self, net: AggregationNet, z1, a1, gatlas: np.ndarray) -> NetGradients:
        g = gatlas.astype(net.dtype)
        gw2, gb2, ga1 = _conv3x3_grads(_pad_flat(a1), a1.shape, g, net.conv2_w, True)
        gz1 = (ga1 * (z1 > 0)).reshape(-1, net.hidden)
        cin = net.in_channels
        gw1 = np.ascontiguousarray(
            (self.col1.T @ gz1).reshape(cin, 3, 3, net.hidden).transpose(3, 0, 1, 2))
        gb1 = gz1.sum(axis=0)
        return NetGradients(gw1, gb1, gw2, gb2)


def build_inputs(keyframes: Sequence[Frame], uvs: Sequence[UVMap],
                 alphas: Sequence[AlphaMap], atlas_dims: tuple[int, int]):
    """Splat each edited key frame to a partial atlas and stack the channels.

    Returns (input_stack (Ha, Wa, 4K) with [RGB_k, coverage_k] blocks, and the
    coverage-weighted mean baseline (Ha, Wa, 3), zero where nothing covers).
    """
    if not keyframes:
        raise ValueError("need at least one key frame")
    wa, ha = atlas_dims
    blocks = []
    acc_total = np.zeros((ha, wa, 3))
    cov_total = np.zeros((ha, wa))
    for frame, uv, alpha in zip(keyframes, uvs, alphas):
        partial = inverse_splat(frame, uv, alpha, atlas_dims)
        blocks.append(np.concatenate(
            [partial.colors, partial.coverage[..., None]], axis=-1))
        acc_total += partial.colors * partial.coverage[..., None]
        cov_total += partial.coverage
    baseline = np.zeros((ha, wa, 3))
    covered = cov_total >= COVERAGE_EPS
    baseline[covered] = acc_total[covered] / cov_total[covered, None]
    return np.concatenate(blocks, axis=-1), baseline


def loss_and_grad(net: AggregationNet, input_stack: np.ndarray, baseline: np.ndarray,
                  keyframes: Sequence[Frame], uvs: Sequence[UVMap],
                  alphas: Sequence[AlphaMap]):
    """Reconstruction loss and its gradients w.r.t. every net parameter."""
    data = TrainData(input_stack, baseline, list(keyframes), list(uvs), list(alphas))
    ws = _Workspace(data, net.dtype)
    out, z1, a1 = ws.forward(net)
    loss, gatlas = ws.loss_grad_atlas(out)
    grads = ws.backward(net, z1, a1, gatlas)
    return loss, grads


def train(net: AggregationNet, config: TrainConfig, data: TrainData):
    """Full-batch momentum descent. Returns (trained copy, loss history)."""
    config.validate()
    net = net.copy()
    ws = _Workspace(data, net.dtype)
    params = [net.conv1_w, net.conv1_b, net.conv2_w, net.conv2_b]
    velocity = [np.zeros_like(p) for p in params]
    history: list[float] = []
    for epoch in range(config.epochs):
        out, z1, a1 = ws.forward(net)
        loss, gatlas = ws.loss_grad_atlas(out)
        if not np.isfinite(loss):
            raise AggregationError(f"non-finite loss at epoch {epoch}")
        history.append(loss)
        grads = ws.backward(net, z1, a1, gatlas)
        for p, v, (_, g) in zip(params, velocity, grads.params()):
            v *= config.momentum
            v -= config.lr * g
            p += v
    return net, history


@dataclass
class AggregationResult:
    atlas: Atlas
    loss_history: list[float]
    net: AggregationNet


def aggregate(scene: Scene, layer: int, edited_keyframes: Sequence[Frame],
              keyframe_indices: Sequence[int], config: TrainConfig) -> AggregationResult:
    """build_inputs -> train -> net_forward -> clamp, for one foreground layer."""
    config.validate()
    fg = scene.foregrounds[layer]
    assert fg.alpha is not None
    if config.atlas_size is not None:
        atlas_dims = config.atlas_size
    else:
        atlas_dims = (fg.atlas.width, fg.atlas.height)
    uvs = [fg.uv[i] for i in keyframe_indices]
    alphas = [fg.alpha[i] for i in keyframe_indices]
    input_stack, baseline = build_inputs(edited_keyframes, uvs, alphas, atlas_dims)
    if config.epochs == 0:
        # no training requested: the skip path alone, i.e. the mean atlas
        return AggregationResult(Atlas(np.clip(baseline, 0.0, 1.0)), [],
                                 init_net(len(edited_keyframes), seed=config.seed,
                                          dtype=config.dtype))
    net = init_net(len(edited_keyframes), seed=config.seed, dtype=config.dtype)
    data = TrainData(input_stack, baseline, list(edited_keyframes), uvs, alphas)
    net, history = train(net, config, data)
    out = net_forward(net, input_stack, baseline).astype(np.float64)
    return AggregationResult(Atlas(np.clip(out, 0.0, 1.0)), history, net)
