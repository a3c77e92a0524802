"""Background-phase smoothing filters.

Three filters produce the noise-free estimate that drives phase correction:

* total-variation denoising (Rudin-Osher-Fatemi model, solved per axial
  slice with Chambolle's dual projection),
* Gaussian curvature filtering (minimum tangent-projection updates, per
  axial slice),
* Marchenko-Pastur PCA denoising (random-matrix eigenvalue thresholding of
  local Casorati blocks, jointly across volumes).

``filter_series`` applies a configured filter independently to the real and
the imaginary part of every volume in a complex series.  All filters are
deterministic: identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_at_least, check_positive
from .errors import InvalidDataError
from .volume import ComplexVolume3, DwiSeries, SigmaMap, Volume3

_TV_STEP = 0.248  # dual ascent step, stable below 1/4


# ---------------------------------------------------------------------------
# configuration

_FILTER_KINDS = ("tv", "cf", "mppca")


@dataclass(frozen=True)
class FilterConfig:
    """Tagged filter selection with per-kind parameters.

    kind 'tv' uses ``weight``/``iterations``; 'cf' uses ``iterations``;
    'mppca' uses ``block``/``stride``.
    """

    kind: str = "tv"
    weight: float = 2.0
    iterations: int = 10
    block: tuple = (5, 5, 5)
    stride: int = 1

    def __post_init__(self):
        if self.kind not in _FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}; expected one of {_FILTER_KINDS}")
        check_positive(self.weight, "weight")
        check_at_least(self.iterations, 1, "iterations")
        block = tuple(int(b) for b in self.block)
        if len(block) != 3 or any(b < 3 or b % 2 == 0 for b in block):
            raise ValueError(f"block dims must be odd and >= 3, got {self.block!r}")
        check_at_least(self.stride, 1, "stride")
        object.__setattr__(self, "block", block)

    @property
    def label(self) -> str:
        """Directory/metric label: TV, CF, or MPPCA."""
        return self.kind.upper()

    @classmethod
    def tv(cls, weight=2.0, iterations=10) -> "FilterConfig":
        return cls(kind="tv", weight=weight, iterations=iterations)

    @classmethod
    def cf(cls, iterations=10) -> "FilterConfig":
        return cls(kind="cf", iterations=iterations)

    @classmethod
    def mppca(cls, block=(5, 5, 5), stride=1) -> "FilterConfig":
        return cls(kind="mppca", block=block, stride=stride)

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        kind = str(d.get("kind", "")).lower()
        if kind == "tv":
            return cls.tv(float(d.get("weight", 2.0)), int(d.get("iterations", 10)))
        if kind == "cf":
            return cls.cf(int(d.get("iterations", 10)))
        if kind == "mppca":
            return cls.mppca(tuple(d.get("block", (5, 5, 5))), int(d.get("stride", 1)))
        raise ValueError(f"unknown filter kind {d.get('kind')!r}; expected one of {_FILTER_KINDS}")

    def to_dict(self) -> dict:
        if self.kind == "tv":
            return {"kind": "tv", "weight": self.weight, "iterations": self.iterations}
        if self.kind == "cf":
            return {"kind": "cf", "iterations": self.iterations}
        return {"kind": "mppca", "block": list(self.block), "stride": self.stride}


# ---------------------------------------------------------------------------
# total variation (ROF) via Chambolle's dual projection


def _tv_gradient(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1, :] = u[1:, :] - u[:-1, :]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _tv_divergence(p1, p2):
    div = p1.copy()
    div[1:, :] -= p1[:-1, :]
    div += p2
    div[:, 1:] -= p2[:, :-1]
    return div


def rof_objective(u, f, weight) -> float:
    """(1/2)||u - f||^2 + weight * isotropic TV(u), forward differences."""
    gx, gy = _tv_gradient(u)
    return float(0.5 * np.sum((u - f) ** 2) + weight * np.sum(np.hypot(gx, gy)))


def _chambolle_slice(f, weight, iterations, objective_trace=None):
    """Dual projection iterations for min_u (1/2)||u-f||^2 + weight*TV(u).

    The primal iterate is u = f - weight * div(p).  The optional trace list
    receives the ROF objective after every dual step.
    """
    p1 = np.zeros_like(f)
    p2 = np.zeros_like(f)
    div = np.zeros_like(f)
    for _ in range(iterations):
        gx, gy = _tv_gradient(div - f / weight)
        denom = 1.0 + _TV_STEP * np.hypot(gx, gy)
        p1 = (p1 + _TV_STEP * gx) / denom
        p2 = (p2 + _TV_STEP * gy) / denom
        div = _tv_divergence(p1, p2)
        if objective_trace is not None:
            objective_trace.append(rof_objective(f - weight * div, f, weight))
    return f - weight * div


def tv_denoise(vol: Volume3, weight: float = 2.0, iterations: int = 10) -> Volume3:
    """ROF denoising of every axial (z) slice of a volume."""
    check_positive(weight, "weight")
    check_at_least(iterations, 1, "iterations")
    out = np.empty_like(vol.data)
    for z in range(vol.dims[2]):
        out[:, :, z] = _chambolle_slice(vol.data[:, :, z], weight, iterations)
    return vol.with_data(out)


# ---------------------------------------------------------------------------
# Gaussian curvature filter

_CF_SUBSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _cf_distances(u):
    """The eight tangent-projection distances of every pixel.

    Axial half-neighbor averages (d1, d2), diagonal averages (d3, d4), and
    the four corner projections (d5..d8).  Borders replicate.
    """
    p = np.pad(u, 1, mode="edge")
    c = p[1:-1, 1:-1]
    xm, xp = p[:-2, 1:-1], p[2:, 1:-1]
    ym, yp = p[1:-1, :-2], p[1:-1, 2:]
    mm, mp = p[:-2, :-2], p[:-2, 2:]
    pm, pp = p[2:, :-2], p[2:, 2:]
    return np.stack(
        [
            0.5 * (xm + xp) - c,
            0.5 * (ym + yp) - c,
            0.5 * (mm + pp) - c,
            0.5 * (mp + pm) - c,
            xm + ym - mm - c,
            xm + yp - mp - c,
            xp + ym - pm - c,
            xp + yp - pp - c,
        ]
    )


def _cf_slice(f, iterations):
    u = f.copy()
    for _ in range(iterations):
        # four-subset checkerboard: each subset sees the updates of the
        # previous ones within the same sweep
        for oi, oj in _CF_SUBSETS:
            d = _cf_distances(u)
            # np.argmin returns the first minimum, i.e. lowest-index tie-break
            idx = np.argmin(np.abs(d), axis=0)
            step = np.take_along_axis(d, idx[None, :, :], axis=0)[0]
            u[oi::2, oj::2] += step[oi::2, oj::2]
    return u


def cf_denoise(vol: Volume3, iterations: int = 10) -> Volume3:
    """Gaussian curvature filtering of every axial slice.

    Each sweep moves a pixel by its minimum-magnitude projection distance,
    which preserves constants and planes exactly.
    """
    check_at_least(iterations, 1, "iterations")
    out = np.empty_like(vol.data)
    for z in range(vol.dims[2]):
        out[:, :, z] = _cf_slice(vol.data[:, :, z], iterations)
    return vol.with_data(out)


# ---------------------------------------------------------------------------
# Marchenko-Pastur PCA


def _axis_positions(n, b, stride):
    """Window corner positions covering [0, n): strided, tail clamped."""
    if b > n:
        raise ValueError(f"block extent {b} exceeds volume extent {n}")
    positions = list(range(0, n - b + 1, stride))
    if positions[-1] != n - b:
        positions.append(n - b)
    return positions


def _mp_select_rank(evals_desc, m):
    """Smallest retained rank p with the eigenvalue tail under the
    Marchenko-Pastur spread bound; returns (p, sigma^2).

    ``evals_desc``: (B, N) eigenvalues of X^T X / m, descending.
    Keeping p components leaves the tail lambda_{p+1}..lambda_N, whose mean
    estimates sigma^2; the tail is pure noise once its spread
    lambda_{p+1} - lambda_N drops below 4*sigma^2*sqrt((N-p)/m).
    """
    b, n = evals_desc.shape
    tail_sum = np.cumsum(evals_desc[:, ::-1], axis=1)[:, ::-1]  # sum_{i >= p}
    n_tail = n - np.arange(n)
    sigma2_p = tail_sum / n_tail  # (B, N): tail mean for each candidate p
    spread = evals_desc - evals_desc[:, -1:]
    ok = spread < 4.0 * sigma2_p * np.sqrt(n_tail / m)
    any_ok = ok.any(axis=1)
    first = np.argmax(ok, axis=1)
    p = np.where(any_ok, first, n)
    sigma2 = np.where(any_ok, sigma2_p[np.arange(b), np.minimum(first, n - 1)], 0.0)
    return p, sigma2


def _denoise_blocks(blocks, m, force_rank=None):
    """Eigen-threshold a batch of Casorati blocks.

    blocks: (B, M, N).  Returns (reconstructed, sigma, rank).
    """
    n = blocks.shape[2]
    cov = np.einsum("bmi,bmj->bij", blocks, blocks) / m
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    evals, evecs = np.linalg.eigh(cov)  # ascending
    evals_desc = evals[:, ::-1]
    if force_rank is None:
        p, sigma2 = _mp_select_rank(np.maximum(evals_desc, 0.0), m)
    else:
        p = np.full(blocks.shape[0], int(force_rank))
        sigma2 = np.zeros(blocks.shape[0])
    # keep the top-p eigenvectors: ascending index >= n - p
    keep = np.arange(n)[None, :] >= (n - p)[:, None]
    proj = np.einsum("bij,bj,bkj->bik", evecs, keep.astype(np.float64), evecs)
    rec = np.einsum("bmi,bij->bmj", blocks, proj)
    return rec, np.sqrt(np.maximum(sigma2, 0.0)), p


def mppca_denoise(
    series: DwiSeries, block=(5, 5, 5), stride: int = 1
) -> tuple[DwiSeries, SigmaMap]:
    """Denoise a magnitude series by local Marchenko-Pastur PCA.

    Every block position yields an (M, N) Casorati matrix (M block voxels,
    N volumes) that is reconstructed from its signal-carrying principal
    components only.  Overlapping reconstructions are averaged per voxel,
    and the per-block noise estimate is averaged into the returned SigmaMap.
    """
    if series.is_complex:
        raise InvalidDataError("mppca_denoise expects a magnitude series; see filter_series")
    if len(series) < 2:
        raise InvalidDataError("mppca_denoise needs at least 2 volumes")
    cfg = FilterConfig.mppca(block, stride)
    data = series.stack()  # (nx, ny, nz, N)
    denoised, sigma = _mppca_array(data, cfg.block, cfg.stride)
    vols = tuple(
        series.volumes[0].with_data(denoised[:, :, :, i]) for i in range(len(series))
    )
    out = DwiSeries(vols, series.gradients)
    return out, SigmaMap(series.volumes[0].with_data(sigma))


def _mppca_array(data, block, stride, force_rank=None, chunk=1024):
    nx, ny, nz, n = data.shape
    bx, by, bz = block
    if bx > nx or by > ny or bz > nz:
        raise ValueError(f"block {block} does not fit inside volume dims {(nx, ny, nz)}")
    m = bx * by * bz
    positions = [
        (ix, iy, iz)
        for ix in _axis_positions(nx, bx, stride)
        for iy in _axis_positions(ny, by, stride)
        for iz in _axis_positions(nz, bz, stride)
    ]
    acc = np.zeros_like(data)
    sigma_acc = np.zeros(data.shape[:3])
    count = np.zeros(data.shape[:3])
    for start in range(0, len(positions), chunk):
        batch = positions[start : start + chunk]
        blocks = np.empty((len(batch), m, n))
        for k, (ix, iy, iz) in enumerate(batch):
            blocks[k] = data[ix : ix + bx, iy : iy + by, iz : iz + bz, :].reshape(m, n)
        rec, sig, _ = _denoise_blocks(blocks, m, force_rank)
        for k, (ix, iy, iz) in enumerate(batch):
            sl = (slice(ix, ix + bx), slice(iy, iy + by), slice(iz, iz + bz))
            acc[sl] += rec[k].reshape(bx, by, bz, n)
            sigma_acc[sl] += sig[k]
            count[sl] += 1.0
    return acc / count[..., None], sigma_acc / count


# ---------------------------------------------------------------------------
# complex series filtering


def _series_from_parts(series, parts):
    vols = tuple(
        ComplexVolume3(v.re.with_data(re), v.im.with_data(im))
        for v, (re, im) in zip(series.volumes, parts)
    )
    return DwiSeries(vols, series.gradients)


def filter_series(series: DwiSeries, config: FilterConfig, jobs: int = 1) -> DwiSeries:
    """Apply the configured filter to the real and the imaginary part of
    every volume independently; the result serves as the noise-free
    estimate for background-phase computation.

    TV and CF run per volume; MPPCA runs jointly across volumes per part.
    ``jobs`` caps the worker threads over independent work items; results
    are merged in index order, so the output does not depend on it.
    """
    if not series.is_complex:
        raise InvalidDataError("filter_series expects a complex series")
    jobs = max(1, int(jobs))
    if config.kind == "mppca":
        def run_part(attr):
            mag = DwiSeries(
                tuple(getattr(v, attr) for v in series.volumes), series.gradients
            )
            filtered, _ = mppca_denoise(mag, config.block, config.stride)
            return [v.data for v in filtered.volumes]

        parts = _map_ordered(run_part, ("re", "im"), jobs)
        return _series_from_parts(series, list(zip(*parts)))

    if config.kind == "tv":
        def run(v):
            return (
                tv_denoise(v.re, config.weight, config.iterations).data,
                tv_denoise(v.im, config.weight, config.iterations).data,
            )
    else:
        def run(v):
            return (
                cf_denoise(v.re, config.iterations).data,
                cf_denoise(v.im, config.iterations).data,
            )
    parts = _map_ordered(run, series.volumes, jobs)
    return _series_from_parts(series, parts)


def _map_ordered(fn, items, jobs):
    """Map with an optional thread pool; results keep the input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def make_filter(config: FilterConfig) -> BaseEstimator:
    """Estimator for a filter configuration."""
    if config.kind == "tv":
        return TotalVariationDenoiser(weight=config.weight, iterations=config.iterations)
    if config.kind == "cf":
        return CurvatureFilter(iterations=config.iterations)
    return MarchenkoPasturDenoiser(block=config.block, stride=config.stride)


# ---------------------------------------------------------------------------
# estimator layer


class _StatelessFilter(TransformerMixin, BaseEstimator):
    """Shared fit/transform plumbing for the stateless slice filters."""

    def fit(self, X, y=None):
        self._config()  # validates parameters
        return self

    def transform(self, X):
        config = self._config()
        if isinstance(X, Volume3):
            return self._run(X, config)
        if isinstance(X, DwiSeries):
            if X.is_complex:
                return filter_series(X, config)
            vols = tuple(self._run(v, config) for v in X.volumes)
            return DwiSeries(vols, X.gradients)
        raise TypeError(f"expected Volume3 or DwiSeries, got {type(X).__name__}")


class TotalVariationDenoiser(_StatelessFilter):
    """Slice-wise ROF denoiser with a fixed regularization weight.

    Parameters
    ----------
    weight : float
        Total-variation weight; larger values flatten more.
    iterations : int
        Number of dual projection iterations per slice.
    """

    def __init__(self, weight=2.0, iterations=10):
        self.weight = weight
        self.iterations = iterations

    def _config(self):
        return FilterConfig.tv(self.weight, self.iterations)

    def _run(self, vol, config):
        return tv_denoise(vol, config.weight, config.iterations)


class CurvatureFilter(_StatelessFilter):
    """Slice-wise Gaussian curvature filter."""

    def __init__(self, iterations=10):
        self.iterations = iterations

    def _config(self):
        return FilterConfig.cf(self.iterations)

    def _run(self, vol, config):
        return cf_denoise(vol, config.iterations)


class MarchenkoPasturDenoiser(TransformerMixin, BaseEstimator):
    """Random-matrix PCA denoiser over a diffusion series.

    After ``transform`` the per-voxel noise estimate is available as
    ``sigma_map_`` (for complex input: the mean of the real-part and
    imaginary-part estimates).
    """

    def __init__(self, block=(5, 5, 5), stride=1):
        self.block = block
        self.stride = stride

    def fit(self, X, y=None):
        FilterConfig.mppca(self.block, self.stride)
        return self

    def transform(self, X):
        config = FilterConfig.mppca(self.block, self.stride)
        if not isinstance(X, DwiSeries):
            raise TypeError(f"expected DwiSeries, got {type(X).__name__}")
        if X.is_complex:
            sigmas = []
            parts = []
            for attr in ("re", "im"):
                mag = DwiSeries(tuple(getattr(v, attr) for v in X.volumes), X.gradients)
                filtered, sigma = mppca_denoise(mag, config.block, config.stride)
                parts.append([v.data for v in filtered.volumes])
                sigmas.append(sigma.sigma.data)
            self.sigma_map_ = SigmaMap(
                X.volumes[0].re.with_data(0.5 * (sigmas[0] + sigmas[1]))
            )
            return _series_from_parts(X, list(zip(*parts)))
        out, sigma = mppca_denoise(X, config.block, config.stride)
        self.sigma_map_ = sigma
        return out
