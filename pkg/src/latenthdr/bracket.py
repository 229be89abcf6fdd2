"""LDR exposure-stack synthesis and per-EV clipping statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imageio import LdrImage, RadianceMap

GAMMA = 2.2


def expose(hdr: RadianceMap, ev: float) -> LdrImage:
    """floor(255 * clip(v * 2**ev, 0, 1) ** (1/2.2)) per channel."""
    if not math.isfinite(ev):
        raise ValueError(f"exposure value must be finite, got {ev}")
    scaled = np.clip(hdr.data * 2.0 ** ev, 0.0, 1.0)
    encoded = np.floor(255.0 * scaled ** (1.0 / GAMMA))
    return LdrImage(encoded.astype(np.uint8))


def ev_range(lo: float, hi: float, step: float) -> list[float]:
    """lo, lo+step, ... up to hi; hi is included when it lies on the grid (1e-9 slack)."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if lo > hi:
        raise ValueError(f"lo ({lo}) must not exceed hi ({hi})")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [lo + i * step for i in range(n + 1)]


def parse_ev_range(text: str) -> list[float]:
    """Parse ``lo:hi:step``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"EV range must be lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    return ev_range(lo, hi, step)


@dataclass
class ExposureBracket:
    """Exposures of one scene, sorted by strictly increasing EV."""

    evs: list[float]
    images: list[LdrImage]

    def __post_init__(self):
        if len(self.evs) != len(self.images):
            raise ValueError("evs and images differ in length")
        if not self.evs:
            raise ValueError("bracket is empty")
        if any(b <= a for a, b in zip(self.evs, self.evs[1:])):
            raise ValueError("bracket EVs must be strictly increasing (no duplicates)")
        shape = self.images[0].data.shape
        if any(im.data.shape != shape for im in self.images):
            raise ValueError("bracket images differ in size")

    def __len__(self):
        return len(self.evs)

    def __iter__(self):
        return iter(zip(self.evs, self.images))

    @classmethod
    def from_entries(cls, entries) -> "ExposureBracket":
        """Build from (ev, image) pairs in any order."""
        entries = sorted(entries, key=lambda p: p[0])
        return cls([float(e) for e, _ in entries], [im for _, im in entries])

    def image_at(self, ev: float) -> LdrImage:
        for e, im in self:
            if abs(e - ev) < 1e-9:
                return im
        raise KeyError(f"no exposure at EV {ev}")


def generate_bracket(hdr: RadianceMap, evs) -> ExposureBracket:
    evs = [float(e) for e in evs]
    if not evs:
        raise ValueError("evs must be non-empty")
    if any(b <= a for a, b in zip(evs, evs[1:])):
        raise ValueError("evs must be strictly increasing (no duplicates)")
    return ExposureBracket(evs, [expose(hdr, e) for e in evs])


@dataclass(frozen=True)
class ClipRecord:
    ev: float
    dark_pct: float
    highlight_pct: float


def clipping_stats(bracket: ExposureBracket) -> list[ClipRecord]:
    """Percent of pixels with all channels at 0 (dark) or all at 255 (highlight)."""
    records = []
    for ev, img in bracket:
        d = img.data
        n = d.shape[0] * d.shape[1]
        dark = np.count_nonzero(np.all(d == 0, axis=-1))
        bright = np.count_nonzero(np.all(d == 255, axis=-1))
        records.append(ClipRecord(ev, 100.0 * dark / n, 100.0 * bright / n))
    return records


def format_ev(ev: float) -> str:
    """File-name tag such as ``ev+1.0`` or ``ev-0.5``."""
    return f"ev{ev:+.1f}"
