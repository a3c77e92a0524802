"""Phase correction with quadrant-based noise-floor calibration.

The pipeline per complex volume:

1. estimate a noise-free complex volume by filtering the real and the
   imaginary part (``filters.filter_series``),
2. background phase = full-quadrant angle of the filtered parts,
3. rotation angle = measured phase minus background phase,
4. optionally calibrate the rotation, then rotate: the real part of the
   rotated signal is the corrected magnitude surrogate, the imaginary part
   is discarded noise.

Calibration distinguishes genuine noise-floor voxels from sign-flipped
signal: a voxel whose rotation lands in the left half-plane would come out
negative, which is correct only when the raw sample sits in the quadrant
diagonally opposite its noise-free estimate (both sign-symbols inverted).
Such voxels keep their negative value so that averaging cancels the noise;
all other left-half-plane voxels are rectified to positive, avoiding
arbitrary signal loss (dark holes).  Negative outputs are never clamped.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ensure_same_dims
from .errors import ConfigError
from .filters import FilterConfig, filter_series
from .volume import (
    ComplexVolume3,
    DwiSeries,
    Mask,
    PhaseField,
    Volume3,
    wrap_angle,
)


@dataclass(frozen=True, eq=False)
class CorrectionResult:
    """Per-volume outputs of a complex rotation.

    ``corrected_real`` may be negative; ``noise_floor_mask`` marks voxels the
    calibration judged to be genuine noise-floor (all False for uncalibrated
    rotations).
    """

    corrected_real: Volume3
    discarded_imag: Volume3
    rotation: PhaseField
    noise_floor_mask: Mask

    def __post_init__(self):
        dims = self.corrected_real.dims
        ensure_same_dims(dims, self.discarded_imag.dims, "correction outputs")
        ensure_same_dims(dims, self.rotation.dims, "correction outputs")
        ensure_same_dims(dims, self.noise_floor_mask.dims, "correction outputs")

    @property
    def dims(self):
        return self.corrected_real.dims


@dataclass(frozen=True, eq=False)
class CorrectionDiagnostics:
    """Per-volume diagnostics of a corrected series."""

    rotations: tuple
    noise_floor_masks: tuple
    discarded_imag: tuple
    max_magnitude_rel_err: float
    volume_seconds: tuple = ()

    def noise_floor_fraction(self) -> float:
        total = sum(m.data.size for m in self.noise_floor_masks)
        hits = sum(m.count() for m in self.noise_floor_masks)
        return hits / total


def measured_phase(vol: ComplexVolume3) -> PhaseField:
    """Per-voxel angle of (re, im) in (-pi, pi]; (0, 0) maps to 0."""
    ang = np.arctan2(vol.im.data, vol.re.data)
    ang = np.where(ang == -np.pi, np.pi, ang)
    return PhaseField(vol.re.with_data(ang))


def background_phase(filtered: ComplexVolume3) -> PhaseField:
    """Full-quadrant angle of the filtered real/imaginary parts.

    The two-argument arctangent keeps the individual signs of the filtered
    parts; a plain ratio would alias opposite quadrants and destroy exactly
    the information the calibration needs.
    """
    return measured_phase(filtered)


def rotation_angle(phi: PhaseField, phi_bg: PhaseField) -> PhaseField:
    """Rotation to apply: wrap(measured - background)."""
    ensure_same_dims(phi.dims, phi_bg.dims, "phase fields")
    return PhaseField(phi.angles.with_data(wrap_angle(phi.values - phi_bg.values)))


def rotate(vol: ComplexVolume3, delta: PhaseField) -> CorrectionResult:
    """Rotate each voxel by its angle: real part M*cos, imaginary M*sin.

    The squared outputs sum back to the squared magnitude (modulus is
    preserved to rounding).
    """
    ensure_same_dims(vol.dims, delta.dims, "volume and rotation field")
    mag = np.hypot(vol.re.data, vol.im.data)
    corrected = mag * np.cos(delta.values)
    discarded = mag * np.sin(delta.values)
    return CorrectionResult(
        corrected_real=vol.re.with_data(corrected),
        discarded_imag=vol.re.with_data(discarded),
        rotation=delta,
        noise_floor_mask=Mask(np.zeros(vol.dims, dtype=bool), vol.re.voxel_size),
    )


def flip_to_right(delta):
    """Reflect an angle into the right half-plane, keeping its sine.

    Left-half-plane angles (cosine < 0) map to pi - delta (upper) or
    -pi - delta (lower); right-half-plane angles pass through unchanged.
    Accepts scalars or arrays in (-pi, pi].
    """
    arr = np.asarray(delta, dtype=np.float64)
    left = np.cos(arr) < 0
    flipped = np.where(arr >= 0, np.pi - arr, -np.pi - arr)
    out = np.where(left, flipped, arr)
    if arr.ndim == 0:
        return float(out)
    return out


def is_noise_floor(raw, filtered):
    """True where raw and filtered estimates sit in diagonally opposite
    quadrants, i.e. both the real and the imaginary sign-symbol of the
    noise-free estimate are inverted in the raw sample.

    ``raw`` and ``filtered`` are (re, im) pairs of scalars or arrays.  Zero
    components count as nonnegative.
    """
    raw_re, raw_im = np.asarray(raw[0]), np.asarray(raw[1])
    fil_re, fil_im = np.asarray(filtered[0]), np.asarray(filtered[1])
    out = ((raw_re < 0) != (fil_re < 0)) & ((raw_im < 0) != (fil_im < 0))
    if out.ndim == 0:
        return bool(out)
    return out


def calibrate_rotation(
    delta: PhaseField, raw: ComplexVolume3, filtered: ComplexVolume3
) -> tuple[PhaseField, Mask]:
    """Calibrate a rotation field against the raw/filtered sign evidence.

    Per voxel: a left-half-plane rotation is flipped into the right
    half-plane unless the voxel is a genuine noise-floor sample (raw in the
    quadrant diagonally opposite the filtered estimate), in which case the
    original rotation is kept so its negative contribution can cancel under
    averaging.  Right-half-plane rotations are returned unchanged.  The
    returned mask marks the noise-floor voxels.
    """
    ensure_same_dims(delta.dims, raw.dims, "rotation field and raw volume")
    ensure_same_dims(delta.dims, filtered.dims, "rotation field and filtered volume")
    nf = is_noise_floor(
        (raw.re.data, raw.im.data), (filtered.re.data, filtered.im.data)
    )
    d = delta.values
    left = np.cos(d) < 0
    flipped = np.where(d >= 0, np.pi - d, -np.pi - d)
    out = np.where(left & ~nf, flipped, d)
    return (
        PhaseField(delta.angles.with_data(out)),
        Mask(nf, raw.re.voxel_size),
    )


def _correct_volume(raw: ComplexVolume3, filtered: ComplexVolume3, calibrated: bool):
    phi = measured_phase(raw)
    phi_bg = background_phase(filtered)
    delta = rotation_angle(phi, phi_bg)
    mag = np.hypot(raw.re.data, raw.im.data)
    cos_d = np.cos(delta.values)
    corrected = mag * cos_d
    discarded = mag * np.sin(delta.values)
    if calibrated:
        rotation, nf_mask = calibrate_rotation(delta, raw, filtered)
        # sign rectification on the product keeps corrected_real exactly
        # equal to |M cos(delta)| at rectified voxels (flipping the angle
        # first and re-evaluating the cosine would differ in the last ulp)
        rectify = (cos_d < 0) & ~nf_mask.data
        corrected = np.where(rectify, -corrected, corrected)
    else:
        rotation = delta
        nf_mask = Mask(np.zeros(raw.dims, dtype=bool), raw.re.voxel_size)
    mag_sq = mag * mag
    err = np.abs(corrected * corrected + discarded * discarded - mag_sq)
    rel = np.divide(err, mag_sq, out=np.zeros_like(err), where=mag_sq > 0)
    return (
        raw.re.with_data(corrected),
        raw.re.with_data(discarded),
        rotation,
        nf_mask,
        float(rel.max()),
    )


def phase_correct(
    series: DwiSeries,
    config: FilterConfig | None = None,
    calibrated: bool = True,
    *,
    filtered: DwiSeries | None = None,
) -> tuple[DwiSeries, CorrectionDiagnostics]:
    """Phase-correct a complex series.

    Exactly one of ``config`` (filter the series internally) or ``filtered``
    (a precomputed noise-free estimate series, e.g. shared between the
    calibrated and uncalibrated variants) must be given.  Returns the series
    of corrected real parts plus per-volume diagnostics.
    """
    if not series.is_complex:
        raise ConfigError("phase_correct expects a complex series")
    if (config is None) == (filtered is None):
        raise ConfigError("pass exactly one of config or filtered")
    if filtered is None:
        filtered = filter_series(series, config)
    elif not filtered.is_complex:
        raise ConfigError("the filtered estimate must be a complex series")
    if len(filtered) != len(series):
        raise ConfigError("filtered series must match the raw series volume count")
    ensure_same_dims(series.dims, filtered.dims, "raw and filtered series")

    corrected_vols, rotations, masks, discards, seconds = [], [], [], [], []
    max_rel = 0.0
    for raw_vol, fil_vol in zip(series.volumes, filtered.volumes):
        started = time.perf_counter()
        corr, disc, rot, nf, rel = _correct_volume(raw_vol, fil_vol, calibrated)
        seconds.append(time.perf_counter() - started)
        corrected_vols.append(corr)
        discards.append(disc)
        rotations.append(rot)
        masks.append(nf)
        max_rel = max(max_rel, rel)
    out = DwiSeries(tuple(corrected_vols), series.gradients)
    diag = CorrectionDiagnostics(
        rotations=tuple(rotations),
        noise_floor_masks=tuple(masks),
        discarded_imag=tuple(discards),
        max_magnitude_rel_err=max_rel,
        volume_seconds=tuple(seconds),
    )
    return out, diag


class PhaseCorrector(TransformerMixin, BaseEstimator):
    """Estimator wrapper around ``phase_correct``.

    Parameters
    ----------
    filter_config : FilterConfig
        Background-phase filter to apply to both parts of the series.
    calibrated : bool
        Apply the quadrant calibration before rotating.

    After ``transform`` the per-volume diagnostics are available as
    ``diagnostics_``.
    """

    def __init__(self, filter_config=None, calibrated=True):
        self.filter_config = filter_config
        self.calibrated = calibrated

    def _resolved_config(self):
        return self.filter_config if self.filter_config is not None else FilterConfig.tv()

    def fit(self, X, y=None):
        self._resolved_config()
        return self

    def transform(self, X):
        if not isinstance(X, DwiSeries):
            raise TypeError(f"expected DwiSeries, got {type(X).__name__}")
        out, diag = phase_correct(X, self._resolved_config(), self.calibrated)
        self.diagnostics_ = diag
        return out
