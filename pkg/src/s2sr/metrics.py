"""Reconstruction quality metrics: RMSE, SRE, SAM and UIQ.

RMSE is reported in DN units, SRE in decibels against the reference band's
mean intensity, SAM in degrees over the joint spectral vector, and UIQ as the
mean sliding-window quality index (window 8, stride 1). All computation is in
float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllPixelsDegenerate,
    ShapeMismatch,
    WindowTooLarge,
    ZeroReference,
)
from .raster_io import BandGroup

SRE_CAP_DB = 200.0
SRE_ERROR_FLOOR = 1e-12
SAM_NORM_FLOOR = 1e-9
UIQ_WINDOW = 8


def _as_f64(x, y, name: str) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"{name}: shapes differ, {x.shape} vs {y.shape}")
    return x, y


def rmse(x, y) -> float:
    """Root mean squared error over all elements."""
    x, y = _as_f64(x, y, "rmse")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def sre_db(x, y) -> float:
    """Reconstruction error relative to the reference mean intensity, in dB.

    ``x`` is the reference. Errors below 1e-12 return the 200 dB cap so that
    identity comparisons stay finite.
    """
    x, y = _as_f64(x, y, "sre")
    mean_sq = np.mean(x) ** 2
    if mean_sq == 0.0:
        raise ZeroReference("sre: reference mean is zero")
    err = np.mean((x - y) ** 2)
    if err < SRE_ERROR_FLOOR:
        return SRE_CAP_DB
    return float(10.0 * np.log10(mean_sq / err))


def sam_deg(x, y) -> float:
    """Mean spectral angle between per-pixel band vectors, in degrees.

    Inputs are ``[bands, rows, cols]`` with at least 2 bands; pixels where
    either spectrum has norm below 1e-9 are skipped.
    """
    x, y = _as_f64(x, y, "sam")
    if x.ndim != 3 or x.shape[0] < 2:
        raise ShapeMismatch(f"sam: expected [bands>=2, h, w], got {x.shape}")
    nx = np.sqrt(np.sum(x * x, axis=0))
    ny = np.sqrt(np.sum(y * y, axis=0))
    valid = (nx >= SAM_NORM_FLOOR) & (ny >= SAM_NORM_FLOOR)
    if not valid.any():
        raise AllPixelsDegenerate("sam: every pixel has a (near-)zero spectrum")
    dot = np.sum(x * y, axis=0)
    cos = np.clip(dot[valid] / (nx[valid] * ny[valid]), -1.0, 1.0)
    return float(np.degrees(np.mean(np.arccos(cos))))


def _window_sums(img: np.ndarray, w: int) -> np.ndarray:
    """Sums over every w x w window (stride 1, valid positions) via integral image."""
    s = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=s[1:, 1:])
    return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]


def uiq(x, y, window: int = UIQ_WINDOW) -> float:
    """Universal image quality index, mean over all stride-1 windows.

    Per window: ``q = 4 * cov * mx * my / ((vx + vy) * (mx^2 + my^2))`` with
    population moments; zero-denominator windows are skipped.
    """
    x, y = _as_f64(x, y, "uiq")
    if x.ndim != 2:
        raise ShapeMismatch(f"uiq: expected a single band [h, w], got {x.shape}")
    if window > min(x.shape):
        raise WindowTooLarge(f"uiq: window {window} exceeds image extent {x.shape}")
    n = float(window * window)
    sx = _window_sums(x, window)
    sy = _window_sums(y, window)
    sxx = _window_sums(x * x, window)
    syy = _window_sums(y * y, window)
    sxy = _window_sums(x * y, window)
    mx, my = sx / n, sy / n
    vx = sxx / n - mx * mx
    vy = syy / n - my * my
    cov = sxy / n - mx * my
    denom = (vx + vy) * (mx * mx + my * my)
    valid = denom != 0.0
    if not valid.any():
        raise AllPixelsDegenerate("uiq: every window has a zero denominator")
    q = 4.0 * cov[valid] * mx[valid] * my[valid] / denom[valid]
    return float(np.mean(q))


# ---------------------------------------------------------------------------
# report assembly


@dataclass
class MetricsReport:
    """Per-band and aggregate metric values for one method on one band set."""

    per_band: dict[str, dict[str, float]]
    aggregate: dict[str, float]
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"per_band": self.per_band, "aggregate": self.aggregate, "meta": self.meta},
            sort_keys=True, indent=1,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        obj = json.loads(text)
        return cls(obj["per_band"], obj["aggregate"], obj.get("meta", {}))

    def render_table(self) -> str:
        """Per-band RMSE columns plus the aggregate row, aligned plain text."""
        bands = list(self.per_band)
        name = self.meta.get("method_name", "method")
        head = f"{'Method':<14}" + "".join(f"{b:>9}" for b in bands) + f"{'Avg.':>9}"
        row = f"{name:<14}" + "".join(
            f"{self.per_band[b]['rmse']:>9.2f}" for b in bands
        ) + f"{self.aggregate['rmse']:>9.2f}"
        return head + "\n" + row


def evaluate(
    sr: BandGroup,
    gt: BandGroup,
    window: int = UIQ_WINDOW,
    pooled_rmse: bool = False,
    **meta,
) -> MetricsReport:
    """Score ``sr`` against ``gt``: per-band rmse/sre/uiq, joint sam, band means.

    The aggregate RMSE is the mean of per-band values (``pooled_rmse=True``
    pools squared errors over all pixels of all bands instead).
    """
    if sr.bands != gt.bands:
        raise ShapeMismatch(f"band lists differ: {sr.bands} vs {gt.bands}")
    if sr.shape != gt.shape:
        raise ShapeMismatch(f"shapes differ: {sr.shape} vs {gt.shape}")
    per_band: dict[str, dict[str, float]] = {}
    for i, band in enumerate(gt.bands):
        g, s = gt.pixels[i], sr.pixels[i]
        per_band[band] = {
            "rmse": rmse(g, s),
            "sre_db": sre_db(g, s),
            "uiq": uiq(g, s, window),
        }
    aggregate = {
        "rmse": float(np.mean([v["rmse"] for v in per_band.values()])),
        "sre_db": float(np.mean([v["sre_db"] for v in per_band.values()])),
        "uiq": float(np.mean([v["uiq"] for v in per_band.values()])),
        "sam_deg": sam_deg(gt.pixels, sr.pixels),
    }
    if pooled_rmse:
        aggregate["rmse"] = rmse(gt.pixels, sr.pixels)
    return MetricsReport(per_band=per_band, aggregate=aggregate, meta=dict(meta))


def render_comparison(reports: list[MetricsReport]) -> str:
    """One row per method, RMSE / SRE / SAM / UIQ columns, sorted by RMSE."""
    head = f"{'Method':<18}{'RMSE':>9}{'SRE':>8}{'SAM':>8}{'UIQ':>8}"
    rows = []
    for r in sorted(reports, key=lambda r: r.aggregate["rmse"]):
        a = r.aggregate
        rows.append(
            f"{r.meta.get('method_name', 'method'):<18}"
            f"{a['rmse']:>9.2f}{a['sre_db']:>8.2f}{a['sam_deg']:>8.3f}{a['uiq']:>8.4f}"
        )
    return "\n".join([head] + rows)
