"""SplitMix64 generator: scalar stream plus vectorized counter-mode draws."""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Hash a seed and integer keys into an independent 64-bit seed."""
    s = seed & MASK64
    for k in keys:
        s = mix64((s + (k & MASK64) * GOLDEN_GAMMA + GOLDEN_GAMMA) & MASK64)
    return s


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_range(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def u64_stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs offset..offset+count-1 of SplitMix64(seed), computed in counter mode.

    Identical to calling ``next_u64`` repeatedly on a fresh generator.
    """
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(seed & MASK64) + idx * np.uint64(GOLDEN_GAMMA)
        return _mix64_array(state)


def uniform_stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    return (u64_stream(seed, count, offset) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def normal_stream(seed: int, count: int) -> np.ndarray:
    """Standard normal draws by Box-Muller over SplitMix64 uniforms."""
    pairs = (count + 1) // 2
    u = uniform_stream(seed, 2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]
