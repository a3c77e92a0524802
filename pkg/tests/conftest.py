import json
from pathlib import Path

import numpy as np
import pytest

from dwipc import ComplexVolume3, DwiSeries, GradientTable, Volume3


def make_table(n: int, b: float = 0.0) -> GradientTable:
    """n entries, all at the same b; zero directions for b=0, x-axis otherwise."""
    bvals = np.full(n, float(b))
    if b == 0:
        bvecs = np.zeros((n, 3))
    else:
        bvecs = np.tile([1.0, 0.0, 0.0], (n, 1))
    return GradientTable(bvals, bvecs)


def complex_series(re_arrays, im_arrays) -> DwiSeries:
    vols = tuple(
        ComplexVolume3(Volume3(np.asarray(r, dtype=float)), Volume3(np.asarray(i, dtype=float)))
        for r, i in zip(re_arrays, im_arrays)
    )
    return DwiSeries(vols, make_table(len(vols)))


def magnitude_series(arrays) -> DwiSeries:
    vols = tuple(Volume3(np.asarray(a, dtype=float)) for a in arrays)
    return DwiSeries(vols, make_table(len(vols)))


def read_metrics_csv(path) -> dict:
    """Parse a metrics CSV back into {label: [(index, value), ...]}."""
    out: dict = {}
    lines = Path(path).read_text().splitlines()
    assert lines[0] == "label,index,value"
    for line in lines[1:]:
        label, index, value = line.split(",")
        out.setdefault(label, []).append((int(index), float(value)))
    return out


def small_config_dict(output_dir, seed=7, dims=(16, 16, 6), n_directions=8, n_b0=2, **extra) -> dict:
    """A fast pipeline config for CLI-level tests."""
    d = {
        "seed": seed,
        "output_dir": str(output_dir),
        "phantom": {"dims": list(dims)},
        "gradients": {"n_directions": n_directions, "n_b0": n_b0, "bvalue": 1000.0},
        "noise": {"sigma0": 5.0, "pattern": {"kind": "linear-ramp", "axis": 0, "slope": 1.0}},
        "filters": [
            {"kind": "tv", "weight": 2.0, "iterations": 10},
            {"kind": "cf", "iterations": 10},
            {"kind": "mppca", "block": [5, 5, 5], "stride": 1},
        ],
        "calibration": "both",
    }
    d.update(extra)
    return d


def write_config(tmp_path, config_dict) -> Path:
    path = Path(tmp_path) / "config.json"
    path.write_text(json.dumps(config_dict, indent=2))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
