"""Synthetic data generation with known ground truth.

A parametric tensor-field phantom (axis-aligned boxes and spheres with
prescribed tensor eigenvalues), the monoexponential tensor signal model, a
smooth synthetic background phase, and spatially-varying complex Gaussian
noise with per-volume deterministic substreams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidDataError
from .tensor import TensorField
from .volume import (
    ComplexVolume3,
    DwiSeries,
    GradientTable,
    Mask,
    PhaseField,
    SigmaMap,
    Volume3,
    wrap_angle,
)

RNG_NAME = "numpy-pcg64/seedseq(seed, volume)"


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class Region:
    """One geometric primitive with a homogeneous tensor.

    Boxes use half-open voxel index bounds [lo, hi); spheres include voxels
    whose center lies within ``radius`` of ``center``.  ``evals`` are tensor
    eigenvalues in mm^2/s, ``direction`` the principal axis of the first one.
    """

    shape: str  # "box" | "sphere"
    evals: tuple
    direction: tuple = (1.0, 0.0, 0.0)
    s0: float = 100.0
    wm: bool = False
    lo: tuple | None = None
    hi: tuple | None = None
    center: tuple | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.shape not in ("box", "sphere"):
            raise ConfigError(f"unknown region shape {self.shape!r}")
        evals = tuple(float(v) for v in self.evals)
        if len(evals) != 3 or any(v < 0 for v in evals):
            raise ConfigError(f"eigenvalues must be three nonnegative values, got {self.evals!r}")
        direction = np.asarray(self.direction, dtype=np.float64)
        norm = np.linalg.norm(direction)
        if direction.shape != (3,) or norm == 0:
            raise ConfigError("region direction must be a nonzero 3-vector")
        object.__setattr__(self, "evals", evals)
        object.__setattr__(self, "direction", tuple(direction / norm))
        if self.shape == "box":
            if self.lo is None or self.hi is None:
                raise ConfigError("box regions need lo and hi bounds")
            object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
            object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))
        else:
            if self.center is None or self.radius is None:
                raise ConfigError("sphere regions need center and radius")
            object.__setattr__(self, "center", tuple(float(v) for v in self.center))
            object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(
            shape=d["shape"],
            evals=tuple(d["evals"]),
            direction=tuple(d.get("direction", (1.0, 0.0, 0.0))),
            s0=float(d.get("s0", 100.0)),
            wm=bool(d.get("wm", False)),
            lo=tuple(d["lo"]) if "lo" in d else None,
            hi=tuple(d["hi"]) if "hi" in d else None,
            center=tuple(d["center"]) if "center" in d else None,
            radius=float(d["radius"]) if "radius" in d else None,
        )

    def to_dict(self) -> dict:
        d = {
            "shape": self.shape,
            "evals": list(self.evals),
            "direction": list(self.direction),
            "s0": self.s0,
            "wm": self.wm,
        }
        if self.shape == "box":
            d["lo"] = list(self.lo)
            d["hi"] = list(self.hi)
        else:
            d["center"] = list(self.center)
            d["radius"] = self.radius
        return d


@dataclass(frozen=True)
class PhantomSpec:
    """Phantom geometry: grid dims plus an ordered region list.

    Later regions override earlier ones where they overlap.  Voxels covered
    by no region carry zero signal (background).
    """

    dims: tuple = (64, 64, 8)
    voxel_size: tuple = (2.0, 2.0, 2.0)
    regions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ConfigError(f"invalid phantom dims {self.dims!r}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size", tuple(float(v) for v in self.voxel_size))
        object.__setattr__(self, "regions", tuple(self.regions))

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        dims = tuple(d.get("dims", (64, 64, 8)))
        if "regions" in d:
            regions = tuple(Region.from_dict(r) for r in d["regions"])
        else:
            regions = default_regions(dims)
        return cls(dims=dims, voxel_size=tuple(d.get("voxel_size", (2.0, 2.0, 2.0))), regions=regions)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "voxel_size": list(self.voxel_size),
            "regions": [r.to_dict() for r in self.regions],
        }


def default_regions(dims) -> tuple:
    """Two crossing rectangular bundles plus an isotropic sphere.

    Bundle eigenvalues (1.7, 0.3, 0.3)e-3 mm^2/s along x and along y; the
    sphere is isotropic at 0.8e-3.  Everything else is zero-signal
    background.
    """
    nx, ny, nz = (int(d) for d in dims)

    def frac(n, f):
        return max(0, min(n, round(n * f)))

    z_lo, z_hi = frac(nz, 0.125), max(frac(nz, 0.875), frac(nz, 0.125) + 1)
    bundle = (1.7e-3, 0.3e-3, 0.3e-3)
    return (
        Region(
            shape="box",
            evals=bundle,
            direction=(1.0, 0.0, 0.0),
            s0=100.0,
            wm=True,
            lo=(frac(nx, 0.0625), frac(ny, 0.40625), z_lo),
            hi=(frac(nx, 0.9375), frac(ny, 0.59375), z_hi),
        ),
        Region(
            shape="box",
            evals=bundle,
            direction=(0.0, 1.0, 0.0),
            s0=100.0,
            wm=True,
            lo=(frac(nx, 0.40625), frac(ny, 0.0625), z_lo),
            hi=(frac(nx, 0.59375), frac(ny, 0.9375), z_hi),
        ),
        Region(
            shape="sphere",
            evals=(0.8e-3, 0.8e-3, 0.8e-3),
            s0=100.0,
            wm=False,
            center=(nx * 0.21875, ny * 0.21875, (nz - 1) / 2.0),
            # the slab is thin along z, so z caps the radius
            radius=min(min(nx, ny) * 0.09375, nz / 2.0),
        ),
    )


def default_phantom_spec(dims=(64, 64, 8)) -> PhantomSpec:
    return PhantomSpec(dims=dims, regions=default_regions(dims))


@dataclass(frozen=True)
class NoiseSpec:
    """Spatially-varying complex Gaussian noise: same std for the real and
    the imaginary part, deterministic given the seed."""

    sigma0: float = 5.0
    pattern: dict = field(default_factory=lambda: {"kind": "linear-ramp", "axis": 0, "slope": 1.0})
    seed: int = 0

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ConfigError("sigma0 must be nonnegative")
        kind = self.pattern.get("kind", "constant")
        if kind not in ("constant", "linear-ramp", "gaussian-bump"):
            raise ConfigError(f"unknown noise pattern {kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(
            sigma0=float(d.get("sigma0", 5.0)),
            pattern=dict(d.get("pattern", {"kind": "linear-ramp", "axis": 0, "slope": 1.0})),
            seed=int(d.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {"sigma0": self.sigma0, "pattern": dict(self.pattern), "seed": self.seed}

    def sigma_field(self, dims) -> np.ndarray:
        """Analytic sigma(x) over the grid."""
        nx, ny, nz = dims
        kind = self.pattern.get("kind", "constant")
        if kind == "constant":
            mult = np.ones(dims)
        elif kind == "linear-ramp":
            axis = int(self.pattern.get("axis", 0))
            slope = float(self.pattern.get("slope", 1.0))
            n = dims[axis]
            t = np.arange(n) / (n - 1) if n > 1 else np.zeros(1)
            shape = [1, 1, 1]
            shape[axis] = n
            mult = np.broadcast_to(1.0 + slope * t.reshape(shape), dims).copy()
        else:  # gaussian-bump
            center = self.pattern.get("center", (nx / 2.0, ny / 2.0, nz / 2.0))
            width = float(self.pattern.get("width", min(dims) / 4.0))
            amplitude = float(self.pattern.get("amplitude", 1.0))
            ix, iy, iz = np.meshgrid(
                np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
            )
            r2 = (
                (ix - center[0]) ** 2 + (iy - center[1]) ** 2 + (iz - center[2]) ** 2
            )
            mult = 1.0 + amplitude * np.exp(-r2 / (2.0 * width**2))
        sigma = self.sigma0 * mult
        if np.any(sigma < 0):
            raise ConfigError("noise pattern yields negative sigma")
        return sigma


@dataclass(frozen=True)
class BackgroundPhaseSpec:
    """Smooth, slowly varying synthetic background phase.

    phi(x, y, z) = wrap(amplitude * sin(2 pi fx x / nx) * cos(2 pi fy y / ny)
    + px x / nx + py y / ny).
    """

    amplitude: float = math.pi / 4.0
    freq: tuple = (1.0, 1.0)
    ramp: tuple = (math.pi / 2.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "BackgroundPhaseSpec":
        return cls(
            amplitude=float(d.get("amplitude", math.pi / 4.0)),
            freq=tuple(d.get("freq", (1.0, 1.0))),
            ramp=tuple(d.get("ramp", (math.pi / 2.0, 0.0))),
        )

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "freq": list(self.freq), "ramp": list(self.ramp)}


# ---------------------------------------------------------------------------
# construction


def _principal_frame(direction) -> np.ndarray:
    """Right-handed orthonormal basis whose first column is ``direction``."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    helper = np.array([0.0, 1.0, 0.0]) if abs(d[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    v2 = helper - np.dot(helper, d) * d
    v2 /= np.linalg.norm(v2)
    v3 = np.cross(d, v2)
    return np.column_stack([d, v2, v3])


def _region_tensor(region: Region) -> np.ndarray:
    l1, l2, l3 = region.evals
    if l1 == l2 == l3:
        return np.diag(region.evals)  # rotation of an isotropic tensor is itself
    rot = _principal_frame(region.direction)
    return rot @ np.diag(region.evals) @ rot.T


def _region_mask(region: Region, dims) -> np.ndarray:
    nx, ny, nz = dims
    if region.shape == "box":
        lo, hi = region.lo, region.hi
        for axis in range(3):
            if not (0 <= lo[axis] < hi[axis] <= dims[axis]):
                raise ConfigError(f"box region {lo}..{hi} does not fit inside dims {dims}")
        mask = np.zeros(dims, dtype=bool)
        mask[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = True
        return mask
    center, radius = region.center, region.radius
    for axis in range(3):
        if center[axis] - radius < -0.5 or center[axis] + radius > dims[axis] - 0.5:
            raise ConfigError(f"sphere region at {center} r={radius} does not fit inside dims {dims}")
    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    r2 = (ix - center[0]) ** 2 + (iy - center[1]) ** 2 + (iz - center[2]) ** 2
    return r2 <= radius**2


def build_phantom(spec: PhantomSpec) -> tuple[TensorField, Mask, Mask]:
    """Assemble the voxel-wise tensor field plus white-matter and background
    masks.  Later regions override earlier ones."""
    dims = spec.dims
    comp = np.zeros(dims + (6,))
    s0 = np.zeros(dims)
    wm = np.zeros(dims, dtype=bool)
    for region in spec.regions:
        sel = _region_mask(region, dims)
        t = _region_tensor(region)
        values = np.array([t[0, 0], t[1, 1], t[2, 2], t[0, 1], t[0, 2], t[1, 2]])
        comp[sel] = values
        s0[sel] = region.s0
        wm[sel] = region.wm
    background = s0 == 0
    return (
        TensorField(comp, s0, spec.voxel_size),
        Mask(wm, spec.voxel_size),
        Mask(background, spec.voxel_size),
    )


def simulate_dwi(tensors: TensorField, grads: GradientTable) -> DwiSeries:
    """Noise-free magnitudes from the monoexponential tensor model:
    S = S0 * exp(-b g^T D g)."""
    comp = tensors.components.reshape(-1, 6)
    volumes = []
    for b, g in zip(grads.bvals, grads.bvecs):
        weights = np.array(
            [g[0] ** 2, g[1] ** 2, g[2] ** 2, 2 * g[0] * g[1], 2 * g[0] * g[2], 2 * g[1] * g[2]]
        )
        exponent = -b * (comp @ weights)
        signal = tensors.s0 * np.exp(exponent.reshape(tensors.dims))
        volumes.append(Volume3(signal, tensors.voxel_size))
    return DwiSeries(tuple(volumes), grads)


def synth_background_phase(dims, spec: BackgroundPhaseSpec) -> PhaseField:
    """Low-frequency sinusoid plus linear ramp, wrapped to (-pi, pi]."""
    nx, ny, _ = dims
    x = np.arange(nx)[:, None, None] / nx
    y = np.arange(ny)[None, :, None] / ny
    fx, fy = spec.freq
    px, py = spec.ramp
    phi = (
        spec.amplitude * np.sin(2.0 * np.pi * fx * x) * np.cos(2.0 * np.pi * fy * y)
        + px * x
        + py * y
    )
    phi = np.broadcast_to(phi, dims).copy()
    return PhaseField(Volume3(wrap_angle(phi)))


def _volume_rng(seed: int, volume_index: int) -> np.random.Generator:
    # independent, reproducible substream per volume
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(volume_index))))


def add_complex_noise(
    clean: DwiSeries, phase: PhaseField, noise: NoiseSpec
) -> tuple[DwiSeries, SigmaMap]:
    """Rotate clean magnitudes by the background phase and add independent
    zero-mean Gaussian noise of std sigma(x) to each part.

    Returns the complex series and the analytic ground-truth sigma map.
    """
    if clean.is_complex:
        raise InvalidDataError("add_complex_noise expects a magnitude series")
    dims = clean.dims
    if phase.dims != dims:
        raise InvalidDataError("phase field dims must match the series")
    for v in clean.volumes:
        if np.any(v.data < 0):
            raise InvalidDataError("clean magnitudes must be nonnegative")
    sigma = noise.sigma_field(dims)
    cos_p = np.cos(phase.values)
    sin_p = np.sin(phase.values)
    volumes = []
    for index, vol in enumerate(clean.volumes):
        rng = _volume_rng(noise.seed, index)
        eps_r = rng.standard_normal(dims) * sigma
        eps_i = rng.standard_normal(dims) * sigma
        re = vol.data * cos_p + eps_r
        im = vol.data * sin_p + eps_i
        volumes.append(
            ComplexVolume3(Volume3(re, vol.voxel_size), Volume3(im, vol.voxel_size))
        )
    series = DwiSeries(tuple(volumes), clean.gradients)
    return series, SigmaMap(Volume3(sigma, clean.volumes[0].voxel_size))


# ---------------------------------------------------------------------------
# gradient schemes


def golden_spiral_directions(n: int) -> np.ndarray:
    """n well-spread unit vectors (golden-angle spiral over the upper
    hemisphere; antipodal directions are redundant for diffusion encoding)."""
    if n < 1:
        raise ConfigError("need at least one direction")
    i = np.arange(n)
    z = 1.0 - (i + 0.5) / n  # (0, 1]: upper hemisphere only
    radius = np.sqrt(np.maximum(0.0, 1.0 - z**2))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    theta = golden * i
    dirs = np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def make_gradient_table(n_directions: int, n_b0: int, bvalue: float) -> GradientTable:
    """b=0 entries first, then ``n_directions`` spiral directions at
    ``bvalue``."""
    if n_b0 < 0 or n_directions < 0 or n_b0 + n_directions < 1:
        raise ConfigError("gradient table needs at least one entry")
    bvals = np.concatenate([np.zeros(n_b0), np.full(n_directions, float(bvalue))])
    dirs = golden_spiral_directions(n_directions) if n_directions else np.zeros((0, 3))
    bvecs = np.vstack([np.zeros((n_b0, 3)), dirs])
    return GradientTable(bvals, bvecs)
