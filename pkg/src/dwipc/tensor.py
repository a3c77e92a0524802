"""Diffusion tensor estimation and fractional anisotropy.

Log-linear ordinary least squares over ln S = ln S0 - b g^T D g, a
closed-form eigenvalue solver for symmetric 3x3 tensors, and FA maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ensure_finite, ensure_same_dims
from .errors import ConfigError, InvalidDataError
from .volume import DwiSeries, Mask, Volume3

COMPONENT_NAMES = ("dxx", "dyy", "dzz", "dxy", "dxz", "dyz")


@dataclass(frozen=True, eq=False)
class TensorField:
    """Per-voxel symmetric diffusion tensor plus baseline signal.

    ``components`` holds (Dxx, Dyy, Dzz, Dxy, Dxz, Dyz) in mm^2/s along the
    last axis.  The baseline is stored as linear S0 (not its logarithm) so
    zero-signal background voxels stay finite.
    """

    components: np.ndarray
    s0: np.ndarray
    voxel_size: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        comp = np.array(self.components, dtype=np.float64, copy=True)
        s0 = np.array(self.s0, dtype=np.float64, copy=True)
        if comp.ndim != 4 or comp.shape[3] != 6:
            raise InvalidDataError(f"tensor components must be (nx, ny, nz, 6), got {comp.shape}")
        if s0.shape != comp.shape[:3]:
            raise InvalidDataError("s0 grid must match tensor grid")
        ensure_finite(comp, "tensor components")
        ensure_finite(s0, "s0")
        comp.setflags(write=False)
        s0.setflags(write=False)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "voxel_size", tuple(float(v) for v in self.voxel_size))

    @property
    def dims(self):
        return self.s0.shape

    def matrices(self) -> np.ndarray:
        """Tensors as (..., 3, 3) symmetric matrices."""
        dxx, dyy, dzz, dxy, dxz, dyz = np.moveaxis(self.components, -1, 0)
        row0 = np.stack([dxx, dxy, dxz], axis=-1)
        row1 = np.stack([dxy, dyy, dyz], axis=-1)
        row2 = np.stack([dxz, dyz, dzz], axis=-1)
        return np.stack([row0, row1, row2], axis=-2)


def design_matrix(gradients) -> np.ndarray:
    """OLS design: columns [1, -b gx^2, -b gy^2, -b gz^2, -2b gx gy,
    -2b gx gz, -2b gy gz] so that design @ [ln S0, D...] = ln S."""
    b = gradients.bvals
    g = gradients.bvecs
    return np.column_stack(
        [
            np.ones_like(b),
            -b * g[:, 0] ** 2,
            -b * g[:, 1] ** 2,
            -b * g[:, 2] ** 2,
            -2.0 * b * g[:, 0] * g[:, 1],
            -2.0 * b * g[:, 0] * g[:, 2],
            -2.0 * b * g[:, 1] * g[:, 2],
        ]
    )


def fit_tensor(series: DwiSeries, mask: Mask | None = None) -> TensorField:
    """Voxel-wise log-linear least-squares tensor fit.

    Signals are floored at 1e-6 of the largest baseline value before the
    logarithm, because phase-corrected real parts can be nonpositive.
    Voxels outside ``mask`` come back as zeros.
    """
    model = DiffusionTensorModel()
    model.fit(series, mask=mask)
    return model.tensors_


def eig3_sym(components) -> np.ndarray:
    """Eigenvalues of symmetric 3x3 matrices, descending.

    ``components``: array whose last axis holds (Dxx, Dyy, Dzz, Dxy, Dxz,
    Dyz).  Uses the closed-form trigonometric solution; near-isotropic
    matrices fall back to the triple (trace/3).
    """
    comp = np.asarray(components, dtype=np.float64)
    if comp.shape[-1] != 6:
        raise ValueError(f"expected 6 components along last axis, got {comp.shape}")
    dxx, dyy, dzz, dxy, dxz, dyz = np.moveaxis(comp, -1, 0)
    q = (dxx + dyy + dzz) / 3.0
    p1 = dxy**2 + dxz**2 + dyz**2
    p2 = (dxx - q) ** 2 + (dyy - q) ** 2 + (dzz - q) ** 2 + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)

    safe_p = np.where(p > 0, p, 1.0)
    bxx, byy, bzz = (dxx - q) / safe_p, (dyy - q) / safe_p, (dzz - q) / safe_p
    bxy, bxz, byz = dxy / safe_p, dxz / safe_p, dyz / safe_p
    det_b = (
        bxx * (byy * bzz - byz**2)
        - bxy * (bxy * bzz - byz * bxz)
        + bxz * (bxy * byz - byy * bxz)
    )
    r = np.clip(det_b / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    l1 = q + 2.0 * p * np.cos(phi)
    l3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    l2 = 3.0 * q - l1 - l3

    iso = p == 0
    l1 = np.where(iso, q, l1)
    l2 = np.where(iso, q, l2)
    l3 = np.where(iso, q, l3)
    return np.stack([l1, l2, l3], axis=-1)


def fa(l1, l2, l3):
    """Fractional anisotropy of an eigenvalue triple, clamped to [0, 1].

    All-zero triples give 0; negative eigenvalues (noise) participate as-is
    before the clamp.
    """
    l1, l2, l3 = (np.asarray(x, dtype=np.float64) for x in (l1, l2, l3))
    mean = (l1 + l2 + l3) / 3.0
    num = np.sqrt((l1 - mean) ** 2 + (l2 - mean) ** 2 + (l3 - mean) ** 2)
    den = np.sqrt(l1**2 + l2**2 + l3**2)
    out = np.sqrt(1.5) * np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    out = np.clip(out, 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def fa_map(tensors: TensorField, mask: Mask | None = None) -> Volume3:
    """Per-voxel FA inside the mask, zero outside."""
    evals = eig3_sym(tensors.components)
    values = fa(evals[..., 0], evals[..., 1], evals[..., 2])
    if mask is not None:
        ensure_same_dims(tensors.dims, mask.dims, "tensor field and mask")
        values = np.where(mask.data, values, 0.0)
    return Volume3(values, tensors.voxel_size)


class DiffusionTensorModel(BaseEstimator):
    """OLS diffusion tensor model.

    Parameters
    ----------
    signal_floor_scale : float
        Signals are clamped to ``signal_floor_scale * max(baseline)`` before
        the log transform.

    Attributes (after ``fit``)
    --------------------------
    tensors_ : TensorField
    qc_mask_ : Mask
        Voxels where more than half the samples were clamped.
    """

    def __init__(self, signal_floor_scale=1e-6):
        self.signal_floor_scale = signal_floor_scale

    def fit(self, X, y=None, mask: Mask | None = None):
        if not isinstance(X, DwiSeries):
            raise TypeError(f"expected DwiSeries, got {type(X).__name__}")
        if X.is_complex:
            raise ConfigError("tensor fitting needs a magnitude series; correct or take magnitudes first")
        grads = X.gradients
        n = len(X)
        if n < 7:
            raise ConfigError(f"tensor fit needs at least 7 volumes, got {n}")
        if grads.n_b0 < 1:
            raise ConfigError("tensor fit needs at least one b=0 volume")
        if n - grads.n_b0 < 6:
            raise ConfigError("tensor fit needs at least 6 diffusion-weighted volumes")
        design = design_matrix(grads)
        if np.linalg.matrix_rank(design) < 7:
            raise ConfigError("degenerate gradient scheme: design matrix is rank-deficient")

        data = X.stack()  # (nx, ny, nz, n)
        dims = X.dims
        if mask is not None:
            ensure_same_dims(dims, mask.dims, "series and mask")
            sel = mask.data.reshape(-1)
        else:
            sel = np.ones(int(np.prod(dims)), dtype=bool)
        signals = data.reshape(-1, n)[sel]

        b0_max = float(data[..., grads.b0_mask].max()) if signals.size else 0.0
        floor = self.signal_floor_scale * max(b0_max, np.finfo(np.float64).tiny)
        clamped = signals < floor
        log_s = np.log(np.maximum(signals, floor))

        pinv = np.linalg.pinv(design)
        theta = log_s @ pinv.T  # (n_voxels, 7)

        comp = np.zeros((sel.size, 6))
        s0 = np.zeros(sel.size)
        comp[sel] = theta[:, 1:]
        s0[sel] = np.exp(theta[:, 0])
        qc = np.zeros(sel.size, dtype=bool)
        qc[sel] = clamped.sum(axis=1) > n / 2

        voxel_size = X.volumes[0].voxel_size
        self.tensors_ = TensorField(comp.reshape(dims + (6,)), s0.reshape(dims), voxel_size)
        self.qc_mask_ = Mask(qc.reshape(dims), voxel_size)
        return self

    def fa_map(self, mask: Mask | None = None) -> Volume3:
        if not hasattr(self, "tensors_"):
            raise ConfigError("model is not fitted")
        return fa_map(self.tensors_, mask)
