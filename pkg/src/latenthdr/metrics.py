"""Dynamic range in stops, latent exposure trajectories, and l2h evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bracket import ExposureBracket
from .imageio import LdrImage, RadianceMap
from .latent import decode, encode
from .merge import MergeConfig, blend_with_input, merge_bracket

REC709 = np.array([0.2126, 0.7152, 0.0722])
MAX_STOPS = 20.0


def luminance(rgb):
    """Rec.709 luma of linear RGB; accepts (..., 3)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    y = rgb[..., 0] * REC709[0] + rgb[..., 1] * REC709[1] + rgb[..., 2] * REC709[2]
    return float(y) if y.ndim == 0 else y


def nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    n = sorted_values.size
    rank = math.ceil(pct / 100.0 * n - 1e-9)
    return float(sorted_values[min(max(rank, 1), n) - 1])


@dataclass(frozen=True)
class StopsReport:
    p_low: float
    p_high: float
    stops: float
    clamped: bool


def dynamic_range_stops(hdr: RadianceMap, pct_lo: float = 0.1, pct_hi: float = 99.9) -> StopsReport:
    """log2 ratio of the upper to lower luminance percentile (nearest rank).

    The lower percentile is clamped to at least 2**-20 of the upper one.
    """
    if not 0.0 <= pct_lo < pct_hi <= 100.0:
        raise ValueError(f"need 0 <= pct_lo < pct_hi <= 100, got {pct_lo}, {pct_hi}")
    lum = np.sort(luminance(hdr.data).reshape(-1))
    if lum.size == 0:
        raise ValueError("empty image")
    p_low = nearest_rank(lum, pct_lo)
    p_high = nearest_rank(lum, pct_hi)
    if p_high <= 0:
        raise ValueError("upper percentile luminance is zero")
    floor = p_high * 2.0 ** -MAX_STOPS
    clamped = p_low < floor
    p_eff = floor if clamped else p_low
    return StopsReport(p_low, p_high, math.log2(p_high / p_eff), clamped)


# -- trajectories -------------------------------------------------------------

def _norm_to_max(d: np.ndarray) -> np.ndarray:
    m = d.max()
    return d / m if m > 0 else d


def monotone_fraction(evs, d) -> float:
    """Share of adjacent |e| steps, per sign branch, where the distance does not drop."""
    evs = np.asarray(evs, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    good = total = 0
    for branch in (evs >= 0, evs <= 0):
        idx = np.flatnonzero(branch)
        idx = idx[np.argsort(np.abs(evs[idx]), kind="stable")]
        for a, b in zip(idx, idx[1:]):
            total += 1
            good += d[b] >= d[a]
    return good / total if total else 1.0


@dataclass
class TrajectoryReport:
    evs: list
    d_pred: np.ndarray
    d_gt: np.ndarray | None
    monotone_fraction: float
    gt_monotone_fraction: float | None = None

    def lines(self) -> list[str]:
        out = ["ev\td_gt\td_pred"]
        for i, e in enumerate(self.evs):
            gt = "nan" if self.d_gt is None else f"{self.d_gt[i]:.6f}"
            out.append(f"{e:+.2f}\t{gt}\t{self.d_pred[i]:.6f}")
        out.append(f"# monotone_fraction\t{self.monotone_fraction:.4f}")
        return out


def latent_trajectory(z_base: np.ndarray, model, evs, gt_latents=None) -> TrajectoryReport:
    """Distances ||z_e - z_base|| over ``evs``, each normalized by its maximum.

    ``model`` is an ExposureHead (or any object with ``predict_stack``).
    ``gt_latents`` are posterior means of the true bracket, aligned with ``evs``.
    """
    evs = [float(e) for e in evs]
    if not any(abs(e) < 1e-9 for e in evs):
        raise ValueError("trajectory EVs must include 0")
    preds = model.predict_stack(z_base, evs)
    d_pred = _norm_to_max(np.array([np.linalg.norm(p - z_base) for p in preds]))
    d_gt = gt_frac = None
    if gt_latents is not None:
        gt_latents = list(gt_latents)
        base = gt_latents[[i for i, e in enumerate(evs) if abs(e) < 1e-9][0]]
        d_gt = _norm_to_max(np.array([np.linalg.norm(g - base) for g in gt_latents]))
        gt_frac = monotone_fraction(evs, d_gt)
    return TrajectoryReport(evs, d_pred, d_gt, monotone_fraction(evs, d_pred), gt_frac)


# -- l2h pipeline -------------------------------------------------------------

def predict_bracket(ldr: LdrImage, model, evs, factor: int = 4) -> ExposureBracket:
    """Encode the input, run the head over ``evs``, and decode each exposure."""
    z_base = encode(ldr, factor, 0.0).mu
    latents = model.predict_stack(z_base, evs)
    return ExposureBracket([float(e) for e in evs], [decode(z, factor) for z in latents])


def l2h(ldr: LdrImage, model, evs, merge_cfg: MergeConfig = MergeConfig(),
        blend: bool = False, factor: int = 4, threads: int = 1) -> RadianceMap:
    """Single LDR image to HDR: encode, predict the bracket, decode, merge, optional blend."""
    hdr = merge_bracket(predict_bracket(ldr, model, evs, factor), merge_cfg, threads)
    if blend:
        hdr = blend_with_input(hdr, ldr, merge_cfg)
    return hdr


def relative_errors(pred: RadianceMap, truth: RadianceMap) -> np.ndarray:
    """Per-sample |s*pred - truth| / truth after aligning scale by the median ratio."""
    if pred.data.shape != truth.data.shape:
        raise ValueError(f"shape mismatch {pred.data.shape} vs {truth.data.shape}")
    ratio = truth.data / pred.data
    s = float(np.median(ratio))
    return np.abs(s * pred.data - truth.data) / truth.data


@dataclass(frozen=True)
class EvalRow:
    index: int
    stops: float
    p_low: float
    p_high: float
    median_rel_err: float
    p99_rel_err: float


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {}
        for key in ("stops", "p_low", "p_high", "median_rel_err", "p99_rel_err"):
            vals = np.array([getattr(r, key) for r in self.rows])
            out[key] = (float(vals.mean()), float(vals.std()))
        return out

    def lines(self) -> list[str]:
        out = ["scene\tstops\tp_low\tp_high\tmedian_rel_err\tp99_rel_err"]
        for r in self.rows:
            out.append(f"{r.index}\t{r.stops:.4f}\t{r.p_low:.6g}\t{r.p_high:.6g}\t"
                       f"{r.median_rel_err:.6f}\t{r.p99_rel_err:.6f}")
        for key, (m, s) in self.summary().items():
            out.append(f"# {key}\t{m:.6g}\t{s:.6g}")
        return out


def eval_l2h(corpus, model, merge_cfg: MergeConfig = MergeConfig(), evs=None,
             blend: bool = False, factor: int = 4, pct=(0.1, 99.9)) -> EvalReport:
    """Run l2h on (input LDR, ground-truth radiance) pairs and score each scene."""
    if evs is None:
        evs = list(model.cfg.ev_grid) if getattr(model, "cfg", None) and model.cfg.ev_grid else None
        if evs is None:
            raise ValueError("evs must be given for a FiLM head")
    report = EvalReport()
    for i, (ldr, truth) in enumerate(corpus):
        if (ldr.height, ldr.width) != (truth.height, truth.width):
            raise ValueError(f"scene {i}: input {ldr.width}x{ldr.height} vs truth {truth.width}x{truth.height}")
        hdr = l2h(ldr, model, evs, merge_cfg, blend, factor)
        st = dynamic_range_stops(hdr, *pct)
        rel = relative_errors(hdr, truth)
        report.rows.append(EvalRow(i, st.stops, st.p_low, st.p_high,
                                   float(np.median(rel)), float(np.percentile(rel, 99))))
    return report
