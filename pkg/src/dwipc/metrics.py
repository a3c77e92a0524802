"""Quantitative metrics and report emission.

Mean absolute error per volume, signed mean error per axial slice within a
mask, signed error maps, binary PGM/PPM slice renders, and deterministic CSV
output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import ensure_same_dims
from .errors import InvalidDataError
from .volume import DwiSeries, Mask, Volume3

# fixed 6-stop lookup for the spectrum palette, positions evenly spaced on [0, 1]
SPECTRUM_STOPS = (
    (0.0, 0.0, 0.0),  # black
    (0.0, 0.0, 1.0),  # blue
    (0.0, 1.0, 1.0),  # cyan
    (0.0, 1.0, 0.0),  # green
    (1.0, 1.0, 0.0),  # yellow
    (1.0, 0.0, 0.0),  # red
)


@dataclass(frozen=True)
class MetricSeries:
    """A labelled sequence of (index, value) points.

    Index is the volume number (per-volume metrics) or the slice number
    (per-slice metrics); indices increase strictly.
    """

    label: str
    values: tuple

    def __post_init__(self):
        pts = tuple((int(i), float(v)) for i, v in self.values)
        indices = [i for i, _ in pts]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise InvalidDataError("metric indices must increase strictly")
        if not all(np.isfinite(v) for _, v in pts):
            raise InvalidDataError("metric values must be finite")
        object.__setattr__(self, "values", pts)

    def mean(self) -> float:
        return float(np.mean([v for _, v in self.values])) if self.values else float("nan")

    def mean_abs(self) -> float:
        return float(np.mean([abs(v) for _, v in self.values])) if self.values else float("nan")


def mae_per_volume(
    est: DwiSeries, gt: DwiSeries, label: str = "series", mask: Mask | None = None
) -> MetricSeries:
    """Voxel-wise absolute error averaged across each volume.

    The default averages over the whole volume, background included; pass a
    mask to restrict the average.
    """
    if est.is_complex or gt.is_complex:
        raise InvalidDataError("mae_per_volume expects magnitude series")
    if len(est) != len(gt):
        raise InvalidDataError(f"series lengths differ: {len(est)} vs {len(gt)}")
    ensure_same_dims(est.dims, gt.dims, "series")
    if mask is not None:
        ensure_same_dims(est.dims, mask.dims, "series and mask")
        if not mask.data.any():
            raise InvalidDataError("mask selects no voxels")
    points = []
    for i, (e, g) in enumerate(zip(est.volumes, gt.volumes)):
        diff = np.abs(e.data - g.data)
        value = float(diff[mask.data].mean()) if mask is not None else float(diff.mean())
        points.append((i, value))
    return MetricSeries(label, tuple(points))


def me_per_slice(fa_est: Volume3, fa_gt: Volume3, wm: Mask, label: str = "fa") -> MetricSeries:
    """Signed mean error (est - gt) over white-matter voxels, per axial
    slice; slices without any masked voxel are omitted."""
    ensure_same_dims(fa_est.dims, fa_gt.dims, "FA maps")
    ensure_same_dims(fa_est.dims, wm.dims, "FA map and mask")
    diff = fa_est.data - fa_gt.data
    points = []
    for z in range(fa_est.dims[2]):
        sel = wm.data[:, :, z]
        if not sel.any():
            continue
        points.append((z, float(diff[:, :, z][sel].mean())))
    return MetricSeries(label, tuple(points))


def error_map(fa_est: Volume3, fa_gt: Volume3) -> Volume3:
    """Signed voxel-wise difference est - gt."""
    ensure_same_dims(fa_est.dims, fa_gt.dims, "FA maps")
    return fa_est.with_data(fa_est.data - fa_gt.data)


def _spectrum_rgb(t: np.ndarray) -> np.ndarray:
    """Linear interpolation through the 6 palette stops; t in [0, 1]."""
    stops = np.asarray(SPECTRUM_STOPS)
    pos = np.linspace(0.0, 1.0, len(stops))
    channels = [np.interp(t, pos, stops[:, c]) for c in range(3)]
    return np.stack(channels, axis=-1)


def render_slice(vol: Volume3, z: int, window: tuple, palette: str, path) -> None:
    """Write one axial slice as a portable graymap (P5) or pixmap (P6).

    Values map affinely from [lo, hi] to 0..255 and clamp; rows run along y
    (top row y = 0), columns along x.
    """
    if not 0 <= z < vol.dims[2]:
        raise InvalidDataError(f"slice index {z} outside volume with nz={vol.dims[2]}")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise InvalidDataError(f"window must satisfy lo < hi, got {window!r}")
    if palette not in ("gray", "spectrum"):
        raise InvalidDataError(f"unknown palette {palette!r}")
    image = vol.data[:, :, z].T  # (ny, nx): rows y, cols x
    t = np.clip((image - lo) / (hi - lo), 0.0, 1.0)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    height, width = image.shape
    if palette == "gray":
        pixels = np.round(t * 255.0).astype(np.uint8)
        header = f"P5\n{width} {height}\n255\n".encode("ascii")
        p.write_bytes(header + pixels.tobytes())
    else:
        rgb = np.round(_spectrum_rgb(t) * 255.0).astype(np.uint8)
        header = f"P6\n{width} {height}\n255\n".encode("ascii")
        p.write_bytes(header + rgb.tobytes())


def write_metrics_csv(series, path) -> None:
    """CSV with header ``label,index,value``; values printed with 9
    significant digits; byte-identical on identical input."""
    series = list(series)
    if not series:
        raise InvalidDataError("no metric series to write")
    lines = ["label,index,value"]
    for s in series:
        for index, value in s.values:
            lines.append(f"{s.label},{index},{value:.9g}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + "\n")
