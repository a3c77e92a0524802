"""Bit-exact file I/O for volumes, masks, and gradient tables.

Volume container
----------------
A volume ``name`` is stored as two files:

``name.json``
    header: ``{"dims": [nx, ny, nz], "voxel_size": [dx, dy, dz],
    "dtype": "float32", "byte_order": "little-endian"}``
``name.raw``
    nx*ny*nz little-endian 32-bit floats, x-fastest order.

Round trips are bit-exact for 32-bit payloads.  Gradient tables are plain
text, one ``b gx gy gz`` entry per line, ``#`` comments allowed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import (
    DimsMismatchError,
    InvalidDataError,
    MissingFileError,
    TruncatedPayloadError,
)
from .volume import GradientTable, Mask, Volume3

_HEADER_DTYPE = "float32"
_HEADER_BYTE_ORDER = "little-endian"


def _base_path(path) -> Path:
    p = Path(path)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p


def save_volume(vol: Volume3, path) -> None:
    """Write ``<path>.json`` and ``<path>.raw`` for a volume."""
    base = _base_path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "dims": list(vol.dims),
        "voxel_size": list(vol.voxel_size),
        "dtype": _HEADER_DTYPE,
        "byte_order": _HEADER_BYTE_ORDER,
    }
    base.with_suffix(".json").write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    payload = np.asarray(vol.data, dtype="<f4").ravel(order="F")
    payload.tofile(base.with_suffix(".raw"))


def load_volume(path) -> Volume3:
    """Load a volume container; raises a distinct error per failure mode."""
    base = _base_path(path)
    header_path = base.with_suffix(".json")
    raw_path = base.with_suffix(".raw")
    if not header_path.exists():
        raise MissingFileError(f"missing header file: {header_path}")
    if not raw_path.exists():
        raise MissingFileError(f"missing payload file: {raw_path}")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidDataError(f"unreadable header {header_path}: {exc}") from exc

    dims = header.get("dims")
    if not (isinstance(dims, list) and len(dims) == 3 and all(int(d) > 0 for d in dims)):
        raise InvalidDataError(f"header {header_path} has invalid dims: {dims!r}")
    dims = tuple(int(d) for d in dims)
    if header.get("dtype") != _HEADER_DTYPE:
        raise InvalidDataError(f"unsupported dtype {header.get('dtype')!r} in {header_path}")
    if header.get("byte_order") != _HEADER_BYTE_ORDER:
        raise InvalidDataError(
            f"byte_order must read exactly {_HEADER_BYTE_ORDER!r} in {header_path}"
        )
    voxel_size = tuple(float(v) for v in header.get("voxel_size", (1.0, 1.0, 1.0)))

    payload = np.fromfile(raw_path, dtype="<f4")
    expected = dims[0] * dims[1] * dims[2]
    if payload.size < expected:
        raise TruncatedPayloadError(
            f"{raw_path} holds {payload.size} values but header dims {dims} require {expected}"
        )
    if payload.size > expected:
        raise DimsMismatchError(
            f"{raw_path} holds {payload.size} values, more than header dims {dims} allow"
        )
    if not np.all(np.isfinite(payload)):
        raise InvalidDataError(f"{raw_path} contains non-finite values")
    data = payload.astype(np.float64).reshape(dims, order="F")
    return Volume3(data, voxel_size)


def save_mask(mask: Mask, path) -> None:
    save_volume(Volume3(mask.data.astype(np.float64), mask.voxel_size), path)


def load_mask(path) -> Mask:
    vol = load_volume(path)
    return Mask(vol.data > 0.5, vol.voxel_size)


def save_gradients(table: GradientTable, path) -> None:
    lines = ["# b gx gy gz"]
    for b, g in zip(table.bvals, table.bvecs):
        lines.append(f"{b:.17g} {g[0]:.17g} {g[1]:.17g} {g[2]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_gradients(path) -> GradientTable:
    """Parse a gradient table file, validating entry shape and unit norms."""
    p = Path(path)
    if not p.exists():
        raise MissingFileError(f"missing gradient table: {p}")
    bvals, bvecs = [], []
    for lineno, raw_line in enumerate(p.read_text().splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise InvalidDataError(
                f"{p}:{lineno}: expected 'b gx gy gz' (4 values), got {len(tokens)}"
            )
        try:
            values = [float(t) for t in tokens]
        except ValueError as exc:
            raise InvalidDataError(f"{p}:{lineno}: non-numeric entry") from exc
        bvals.append(values[0])
        bvecs.append(values[1:])
    if not bvals:
        raise InvalidDataError(f"{p}: gradient table is empty")
    return GradientTable(np.array(bvals), np.array(bvecs))
