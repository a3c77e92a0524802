"""Core volumetric containers and the angle/quadrant algebra.

All containers are immutable after construction: the wrapped numpy arrays are
marked read-only, so instances can be shared freely between workers.  Scalar
payloads live in float64 internally; file payloads are 32-bit (see ``io``).
Angle fields always hold radians in the half-open interval (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ._validation import ensure_finite, ensure_same_dims
from .errors import DimsMismatchError, InvalidDataError

TWO_PI = 2.0 * np.pi


def _own_readonly(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Volume3:
    """A 3D scalar grid.

    Parameters
    ----------
    data : array_like, shape (nx, ny, nz)
        Voxel values, finite everywhere.  Axis order is (x, y, z); the flat
        file layout is x-fastest (Fortran order).
    voxel_size : tuple of float
        Voxel edge lengths in mm.  Informational only.
    """

    data: np.ndarray
    voxel_size: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = _own_readonly(self.data, np.float64)
        if arr.ndim != 3:
            raise InvalidDataError(f"volume data must be 3D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise InvalidDataError(f"volume dims must be positive, got {arr.shape}")
        ensure_finite(arr, "volume data")
        vs = tuple(float(v) for v in self.voxel_size)
        if len(vs) != 3:
            raise InvalidDataError("voxel_size must have three components")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "voxel_size", vs)

    @property
    def dims(self):
        return self.data.shape

    def with_data(self, data) -> "Volume3":
        """New volume with the same voxel size and replaced values."""
        return Volume3(data, self.voxel_size)


@dataclass(frozen=True, eq=False)
class Mask:
    """Boolean gate over a voxel grid."""

    data: np.ndarray
    voxel_size: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = _own_readonly(self.data, bool)
        if arr.ndim != 3:
            raise InvalidDataError(f"mask data must be 3D, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "voxel_size", tuple(float(v) for v in self.voxel_size))

    @property
    def dims(self):
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True, eq=False)
class ComplexVolume3:
    """One complex-valued acquisition stored as paired real/imaginary grids."""

    re: Volume3
    im: Volume3

    def __post_init__(self):
        ensure_same_dims(self.re.dims, self.im.dims, "real/imaginary parts")

    @property
    def dims(self):
        return self.re.dims

    def magnitude(self) -> Volume3:
        return self.re.with_data(np.hypot(self.re.data, self.im.data))


@dataclass(frozen=True, eq=False)
class PhaseField:
    """Per-voxel angles in radians, each in (-pi, pi]."""

    angles: Volume3

    def __post_init__(self):
        a = self.angles.data
        if np.any(a <= -np.pi) or np.any(a > np.pi):
            raise InvalidDataError("phase angles must lie in (-pi, pi]")

    @property
    def dims(self):
        return self.angles.dims

    @property
    def values(self) -> np.ndarray:
        return self.angles.data


class Quadrant(IntEnum):
    """Quadrant of the complex plane under the zero-is-nonnegative convention."""

    Q1 = 1
    Q2 = 2
    Q3 = 3
    Q4 = 4


@dataclass(frozen=True, eq=False)
class GradientTable:
    """Diffusion weightings: b-values (s/mm^2) paired with unit directions.

    Directions must be unit length (within 1e-6) wherever b > 0; the zero
    vector is permitted for b = 0 entries.
    """

    bvals: np.ndarray
    bvecs: np.ndarray

    def __post_init__(self):
        b = _own_readonly(self.bvals, np.float64)
        g = _own_readonly(self.bvecs, np.float64)
        if b.ndim != 1:
            raise InvalidDataError("bvals must be a 1D sequence")
        if g.shape != (b.size, 3):
            raise InvalidDataError(f"bvecs must have shape (n, 3), got {g.shape}")
        ensure_finite(b, "bvals")
        ensure_finite(g, "bvecs")
        if np.any(b < 0):
            raise InvalidDataError("b-values must be nonnegative")
        norms = np.linalg.norm(g, axis=1)
        bad = (b > 0) & (np.abs(norms - 1.0) > 1e-6)
        if np.any(bad):
            idx = int(np.nonzero(bad)[0][0])
            raise InvalidDataError(
                f"direction {idx} has norm {norms[idx]:.6g} but b={b[idx]:g} > 0 requires a unit vector"
            )
        object.__setattr__(self, "bvals", b)
        object.__setattr__(self, "bvecs", g)

    def __len__(self):
        return self.bvals.size

    @property
    def entries(self):
        """List of (b, direction) pairs."""
        return [(float(b), tuple(v)) for b, v in zip(self.bvals, self.bvecs)]

    @property
    def b0_mask(self) -> np.ndarray:
        return self.bvals == 0

    @property
    def n_b0(self) -> int:
        return int(np.count_nonzero(self.b0_mask))


@dataclass(frozen=True, eq=False)
class DwiSeries:
    """Ordered diffusion-weighted volumes plus their gradient table.

    Volumes are either all complex (``ComplexVolume3``) or all magnitude
    (``Volume3``); counts and grid dims must agree with the table.
    """

    volumes: tuple
    gradients: GradientTable

    def __post_init__(self):
        vols = tuple(self.volumes)
        if len(vols) == 0:
            raise InvalidDataError("series must contain at least one volume")
        if len(vols) != len(self.gradients):
            raise DimsMismatchError(
                f"series has {len(vols)} volumes but gradient table has {len(self.gradients)} entries"
            )
        kinds = {type(v) for v in vols}
        if kinds == {ComplexVolume3}:
            is_complex = True
        elif kinds == {Volume3}:
            is_complex = False
        else:
            raise InvalidDataError("series volumes must be uniformly complex or magnitude")
        dims = vols[0].dims
        for v in vols[1:]:
            ensure_same_dims(dims, v.dims, "series volumes")
        object.__setattr__(self, "volumes", vols)
        object.__setattr__(self, "_is_complex", is_complex)

    @property
    def is_complex(self) -> bool:
        return self._is_complex

    @property
    def dims(self):
        return self.volumes[0].dims

    def __len__(self):
        return len(self.volumes)

    def stack(self) -> np.ndarray:
        """Magnitude series as an (nx, ny, nz, n) array; complex series stack
        their real and imaginary parts into complex128."""
        if self.is_complex:
            return np.stack(
                [v.re.data + 1j * v.im.data for v in self.volumes], axis=-1
            )
        return np.stack([v.data for v in self.volumes], axis=-1)


@dataclass(frozen=True, eq=False)
class SigmaMap:
    """Per-voxel noise standard deviation in signal units."""

    sigma: Volume3

    def __post_init__(self):
        if np.any(self.sigma.data < 0):
            raise InvalidDataError("sigma map must be nonnegative")

    @property
    def dims(self):
        return self.sigma.dims


def wrap_angle(theta):
    """Canonical angle representative in (-pi, pi].

    Accepts scalars or arrays.  Values already inside the interval pass
    through bit-exactly, which makes the operation idempotent.
    """
    arr = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap_angle requires finite input")
    # fmod is exact, so congruence mod 2*pi survives large inputs
    r = np.fmod(arr, TWO_PI)
    r = np.where(r > np.pi, r - TWO_PI, r)
    r = np.where(r <= -np.pi, r + TWO_PI, r)
    out = np.where((arr > -np.pi) & (arr <= np.pi), arr, r)
    if arr.ndim == 0:
        return float(out)
    return out


def quadrant_of(re, im) -> Quadrant:
    """Quadrant of the point (re, im); zero components count as nonnegative,
    so the axes belong to Q1/Q2/Q4 deterministically."""
    if not (np.isfinite(re) and np.isfinite(im)):
        raise ValueError("quadrant_of requires finite components")
    if re >= 0:
        return Quadrant.Q1 if im >= 0 else Quadrant.Q4
    return Quadrant.Q2 if im >= 0 else Quadrant.Q3


def opposite_diagonal(a: Quadrant, b: Quadrant) -> bool:
    """True iff the two quadrants are diagonally opposite (Q1/Q3 or Q2/Q4)."""
    return abs(int(a) - int(b)) == 2
