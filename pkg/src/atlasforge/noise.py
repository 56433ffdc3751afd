"""Variance-preserving noise schedule used by inter-frame propagation.

alpha(t) = exp(-t^2 (beta_max - beta_min)/4 - t beta_min/2) and
sigma(t) = sqrt(1 - alpha(t)^2), so alpha^2 + sigma^2 == 1 for all t.

Gaussian sampling is pinned for cross-implementation reproducibility:
element i of a perturbation draws two 64-bit words from SplitMix64 at
counters (2i+1, 2i+2) offset by the seed, converts them to 53-bit uniforms,
and applies the Box-Muller transform (cosine branch). Each element depends
only on (seed, flat index), so generation order is irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, sqrt

import numpy as np

from .scene import Frame

_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class ScheduleParams:
    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.beta_min <= self.beta_max:
            raise ValueError(f"need 0 < beta_min <= beta_max, got "
                             f"({self.beta_min}, {self.beta_max})")


DEFAULT_SCHEDULE = ScheduleParams()


def alpha_sigma(t: float, params: ScheduleParams = DEFAULT_SCHEDULE) -> tuple[float, float]:
    """Signal and noise scales at time t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    a = exp(-0.25 * t * t * (params.beta_max - params.beta_min) - 0.5 * t * params.beta_min)
    s = sqrt(max(0.0, 1.0 - a * a))
    return a, s


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def standard_normals(seed: int, count: int) -> np.ndarray:
    """Deterministic N(0,1) samples; element i is a pure function of (seed, i)."""
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    idx = np.arange(count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        c1 = s + (np.uint64(2) * idx + np.uint64(1)) * _SPLITMIX_GAMMA
        c2 = s + (np.uint64(2) * idx + np.uint64(2)) * _SPLITMIX_GAMMA
        r1 = _splitmix64(c1)
        r2 = _splitmix64(c2)
    u1 = ((r1 >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53  # (0, 1]
    u2 = (r2 >> np.uint64(11)).astype(np.float64) * 2.0 ** -53          # [0, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def perturb(x, t0: float, seed: int, params: ScheduleParams = DEFAULT_SCHEDULE):
    """alpha(t0)*x + sigma(t0)*z with seeded element-wise Gaussian noise.

    Accepts a Frame (validity preserved) or a plain array; t0 == 0 returns x
    bit-exactly.
    """
    if isinstance(x, Frame):
        return Frame(perturb(x.pixels, t0, seed, params), validity=x.validity)
    arr = np.asarray(x, dtype=np.float64)
    if t0 == 0.0:
        return arr.copy()
    a, s = alpha_sigma(t0, params)
    z = standard_normals(seed, arr.size).reshape(arr.shape)
    return a * arr + s * z
