"""Radiance reconstruction from an exposure bracket by weighted log-domain averaging."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bracket import GAMMA, ExposureBracket
from .imageio import LdrImage, RadianceMap

LOG_FLOOR = 1e-12

# (k/255)**2.2 for every 8-bit code; indexing is exact and cheaper than pow.
_EXPAND_LUT = (np.arange(256, dtype=np.float64) / 255.0) ** GAMMA


@dataclass(frozen=True)
class MergeConfig:
    tau_black: float = 0.05
    tau_white: float = 0.95
    eps: float = 1e-8
    gamma: float = GAMMA
    channelwise: bool = False

    def __post_init__(self):
        if not 0.0 < self.tau_black < 0.5:
            raise ValueError(f"tau_black must lie in (0, 0.5), got {self.tau_black}")
        if not 0.5 < self.tau_white < 1.0:
            raise ValueError(f"tau_white must lie in (0.5, 1), got {self.tau_white}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def gamma_expand(img: LdrImage, gamma: float = GAMMA) -> np.ndarray:
    """(x/255)**gamma per channel, as float64 of shape (H, W, 3)."""
    if gamma == GAMMA:
        return _EXPAND_LUT[img.data]
    return (img.data / 255.0) ** gamma


def triangular_weight(v, cfg: MergeConfig = MergeConfig()):
    """Hat function on [tau_black, tau_white] with peak 1 at the midpoint, 0 outside."""
    v = np.asarray(v, dtype=np.float64)
    lo, hi = cfg.tau_black, cfg.tau_white
    hat = np.maximum(0.0, np.minimum(v - lo, hi - v)) / ((hi - lo) / 2.0)
    out = np.where((v < lo) | (v > hi), 0.0, hat)
    return out if out.ndim else float(out)


def valid_mask(rgb_lin, cfg: MergeConfig = MergeConfig()):
    """True where every channel lies inside the reliable range."""
    rgb_lin = np.asarray(rgb_lin, dtype=np.float64)
    return np.all((rgb_lin >= cfg.tau_black) & (rgb_lin <= cfg.tau_white), axis=-1)


def pixel_weight(rgb_lin, cfg: MergeConfig = MergeConfig()):
    """Per-pixel weight: min channel hat value, forced to 0 if any channel is unreliable."""
    rgb_lin = np.asarray(rgb_lin, dtype=np.float64)
    w = np.where(valid_mask(rgb_lin, cfg), np.min(triangular_weight(rgb_lin, cfg), axis=-1), 0.0)
    return w if np.ndim(w) else float(w)


def exposure_weights(rgb_lin: np.ndarray, cfg: MergeConfig) -> np.ndarray:
    """Weights broadcastable against (..., 3): per pixel, or per channel when configured."""
    if cfg.channelwise:
        return np.where(valid_mask(rgb_lin, cfg)[..., None], triangular_weight(rgb_lin, cfg), 0.0)
    return pixel_weight(rgb_lin, cfg)[..., None]


def _merge_rows(lins, evs, cfg: MergeConfig) -> np.ndarray:
    # Weighted log-mean anchored at the highest-weight exposure:
    #   log R = ref + sum w_i (log r_i - ref) / (sum w_i + eps)
    # equals the plain weighted mean up to the eps term, keeps eps from biasing
    # toward R = 1 (so scaling radiance by 2^k scales R by exactly 2^k), and
    # collapses to the lowest-EV estimate where every weight is zero.
    logs = []
    weights = []
    for lin, ev in zip(lins, evs):
        logs.append(np.log(np.maximum(lin / 2.0 ** ev, LOG_FLOOR)))
        weights.append(np.broadcast_to(exposure_weights(lin, cfg), lin.shape))
    logs = np.stack(logs)
    weights = np.stack(weights)
    best = np.argmax(weights, axis=0)
    ref = np.take_along_axis(logs, best[None], axis=0)[0]
    num = np.zeros_like(ref)
    den = np.zeros_like(ref)
    for i in range(len(evs)):
        num += weights[i] * (logs[i] - ref)
        den += weights[i]
    return np.exp(ref + num / (den + cfg.eps))


def merge_bracket(bracket: ExposureBracket, cfg: MergeConfig = MergeConfig(),
                  threads: int = 1) -> RadianceMap:
    """Reconstruct linear radiance from a bracket.

    Rows are independent, so ``threads`` only splits work; output is identical
    for every thread count.
    """
    if len(bracket) == 0:
        raise ValueError("empty bracket")
    lins = [gamma_expand(img, cfg.gamma) for img in bracket.images]
    shape = lins[0].shape
    if any(lin.shape != shape for lin in lins):
        raise ValueError("bracket images differ in size")
    evs = bracket.evs
    height = shape[0]
    if threads <= 1 or height < 2:
        return RadianceMap(_merge_rows(lins, evs, cfg))
    bounds = np.linspace(0, height, min(threads, height) + 1).astype(int)
    chunks = list(zip(bounds[:-1], bounds[1:]))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ab: _merge_rows([l[ab[0]:ab[1]] for l in lins], evs, cfg), chunks))
    return RadianceMap(np.concatenate(parts, axis=0))


def smoothstep(edge0: float, edge1: float, x):
    t = np.clip((np.asarray(x, dtype=np.float64) - edge0) / (edge1 - edge0), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def blend_mask(ldr_input: LdrImage, cfg: MergeConfig = MergeConfig()) -> np.ndarray:
    """Trust in the predicted HDR per pixel, from the input's max-channel linear value.

    0 through the mid-tones; rises to 1 over [tau_white - tau_black, tau_white]
    toward saturation and over [2*tau_black, tau_black] toward black.
    """
    vmax = gamma_expand(ldr_input, cfg.gamma).max(axis=-1)
    high = smoothstep(cfg.tau_white - cfg.tau_black, cfg.tau_white, vmax)
    low = 1.0 - smoothstep(cfg.tau_black, 2.0 * cfg.tau_black, vmax)
    return np.maximum(high, low)


def blend_with_input(hdr_pred: RadianceMap, ldr_input: LdrImage,
                     cfg: MergeConfig = MergeConfig()) -> RadianceMap:
    """Keep the input's mid-tones and take clipped regions from the prediction."""
    if hdr_pred.data.shape != ldr_input.data.shape:
        raise ValueError(f"shape mismatch: {hdr_pred.data.shape} vs {ldr_input.data.shape}")
    m = blend_mask(ldr_input, cfg)[..., None]
    out = m * hdr_pred.data + (1.0 - m) * gamma_expand(ldr_input, cfg.gamma)
    return RadianceMap(out)
