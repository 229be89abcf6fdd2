"""Seeded procedural HDR scenes: log-space value noise plus Gaussian light blobs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .imageio import RadianceMap
from .rng import SplitMix64, derive_seed, uniform_stream

OCTAVES = 3
BASE_CELLS = 3          # lattice cells across the image at the coarsest octave
TINT_STOPS = 0.15       # per-channel colour variation, in stops


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 64
    seed: int = 0
    num_lights: int = 3
    dr_target: float = 10.0
    base_level: float = 0.05

    def validate(self) -> None:
        if self.width < 8 or self.height < 8:
            raise ValueError(f"scene must be at least 8x8, got {self.width}x{self.height}")
        if not 1.0 <= self.dr_target <= 20.0:
            raise ValueError(f"dr_target must lie in [1, 20], got {self.dr_target}")
        if self.num_lights < 0:
            raise ValueError("num_lights must be >= 0")
        if not self.base_level > 0 or not np.isfinite(self.base_level):
            raise ValueError("base_level must be positive and finite")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _lattice_noise(seed: int, height: int, width: int, cells: int) -> np.ndarray:
    """Bilinear interpolation of a (cells+1)^2 lattice of uniform values in [-1, 1]."""
    lattice = 2.0 * uniform_stream(seed, (cells + 1) ** 2) - 1.0
    lattice = lattice.reshape(cells + 1, cells + 1)
    ys = (np.arange(height) + 0.5) / height * cells
    xs = (np.arange(width) + 0.5) / width * cells
    y0 = np.minimum(ys.astype(np.int64), cells - 1)
    x0 = np.minimum(xs.astype(np.int64), cells - 1)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    v00 = lattice[y0[:, None], x0[None, :]]
    v01 = lattice[y0[:, None], x0[None, :] + 1]
    v10 = lattice[y0[:, None] + 1, x0[None, :]]
    v11 = lattice[y0[:, None] + 1, x0[None, :] + 1]
    top = v00 + (v01 - v00) * tx
    bottom = v10 + (v11 - v10) * tx
    return top + (bottom - top) * ty


def noise_amplitude(spec: SceneSpec) -> float:
    """Half-span, in stops, of the normalized base noise field."""
    return min(1.0, spec.dr_target / 2.0)


def _log_noise(spec: SceneSpec) -> np.ndarray:
    field = np.zeros((spec.height, spec.width))
    for octave in range(OCTAVES):
        cells = BASE_CELLS * 2 ** octave
        field += 0.5 ** octave * _lattice_noise(derive_seed(spec.seed, 1, octave),
                                                spec.height, spec.width, cells)
    lo, hi = field.min(), field.max()
    amp = noise_amplitude(spec)
    if hi > lo:
        return amp * (2.0 * (field - lo) / (hi - lo) - 1.0)
    return np.zeros_like(field)


def _tint(spec: SceneSpec) -> np.ndarray:
    chans = [_lattice_noise(derive_seed(spec.seed, 2, c), spec.height, spec.width, BASE_CELLS)
             for c in range(3)]
    return TINT_STOPS * np.stack(chans, axis=-1)


def _light_mask(spec: SceneSpec) -> np.ndarray:
    """Union of Gaussian blobs, each peaking at exactly 1 on its centre pixel."""
    rng = SplitMix64(derive_seed(spec.seed, 3))
    yy, xx = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    short = min(spec.width, spec.height)
    mask = np.zeros((spec.height, spec.width))
    for _ in range(spec.num_lights):
        cy = min(int(rng.uniform() * spec.height), spec.height - 1)
        cx = min(int(rng.uniform() * spec.width), spec.width - 1)
        sigma = rng.uniform_range(0.04, 0.10) * short
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
        mask = np.maximum(mask, blob)
    return mask


def base_field(spec: SceneSpec) -> RadianceMap:
    """The scene without lights: exponentiated noise with per-channel tint."""
    spec.validate()
    return generate_scene(replace(spec, num_lights=0))


def generate_scene(spec: SceneSpec) -> RadianceMap:
    """Deterministic radiance map whose log2 span is close to ``spec.dr_target``.

    Log-radiance relative to ``base_level`` is the noise field n in [-a, a],
    pulled toward ``dr_target - 1`` stops inside each light blob, plus a small
    per-channel tint. The result is clamped below at
    ``base_level * 2**(-dr_target/2)``.
    """
    spec.validate()
    log_field = _log_noise(spec)
    if spec.num_lights:
        g = _light_mask(spec)
        peak = max(spec.dr_target - 1.0, noise_amplitude(spec))
        log_field = log_field * (1.0 - g) + peak * g
    stops = log_field[..., None] + _tint(spec)
    radiance = spec.base_level * np.exp2(stops)
    floor = spec.base_level * 2.0 ** (-spec.dr_target / 2.0)
    return RadianceMap(np.maximum(radiance, floor))


def corpus_specs(count: int, base_seed: int, template: SceneSpec) -> list[SceneSpec]:
    if count < 1:
        raise ValueError("count must be >= 1")
    return [replace(template, seed=(base_seed + i) % 2**64) for i in range(1, count + 1)]


def generate_corpus(count: int, base_seed: int, template: SceneSpec | None = None) -> list[RadianceMap]:
    """Scenes for seeds base_seed+1 .. base_seed+count."""
    template = template or SceneSpec()
    return [generate_scene(s) for s in corpus_specs(count, base_seed, template)]
