"""Experiment configuration: a single JSON document drives every subcommand.

CLI flags override config keys through dotted ``--set key=value`` pairs, and
a manifest written by ``simulate`` (the config echoed under a ``config`` key
plus version metadata) is itself accepted wherever a config is expected, so
any run can be reproduced from its manifest alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .filters import FilterConfig
from .io import load_gradients
from .phantom import (
    BackgroundPhaseSpec,
    NoiseSpec,
    PhantomSpec,
    make_gradient_table,
)

OUTPUT_DIR_ENV = "DWIPC_OUTPUT_DIR"
CALIBRATION_MODES = ("both", "on", "off")


@dataclass(frozen=True)
class GradientSpec:
    """Either a path to a gradient table file or a generated scheme."""

    path: str | None = None
    n_directions: int = 30
    n_b0: int = 3
    bvalue: float = 1000.0

    @classmethod
    def from_dict(cls, d: dict) -> "GradientSpec":
        return cls(
            path=d.get("path"),
            n_directions=int(d.get("n_directions", 30)),
            n_b0=int(d.get("n_b0", 3)),
            bvalue=float(d.get("bvalue", 1000.0)),
        )

    def to_dict(self) -> dict:
        if self.path is not None:
            return {"path": self.path}
        return {
            "path": None,
            "n_directions": self.n_directions,
            "n_b0": self.n_b0,
            "bvalue": self.bvalue,
        }

    def resolve(self):
        if self.path is not None:
            return load_gradients(self.path)
        return make_gradient_table(self.n_directions, self.n_b0, self.bvalue)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output_dir: Path
    phantom: PhantomSpec
    gradients: GradientSpec
    background_phase: BackgroundPhaseSpec
    noise: NoiseSpec
    filters: tuple
    calibration: str = "both"
    jobs: int = 1

    def __post_init__(self):
        if not self.filters:
            raise ConfigError("config must list at least one filter")
        if self.calibration not in CALIBRATION_MODES:
            raise ConfigError(
                f"calibration must be one of {CALIBRATION_MODES}, got {self.calibration!r}"
            )
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        labels = [f.label for f in self.filters]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate filter kinds in config: {labels}")
        if self.gradients.path is not None and not Path(self.gradients.path).exists():
            raise ConfigError(f"gradient table path does not exist: {self.gradients.path}")
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(self, "filters", tuple(self.filters))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            seed = int(d.get("seed", 0))
            output_dir = d.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV)
            if not output_dir:
                raise ConfigError(
                    f"output_dir missing; set it in the config or via ${OUTPUT_DIR_ENV}"
                )
            noise_dict = dict(d.get("noise", {}))
            noise_dict.setdefault("seed", seed)
            filters = tuple(FilterConfig.from_dict(f) for f in d.get("filters", _default_filters()))
            return cls(
                seed=seed,
                output_dir=Path(output_dir),
                phantom=PhantomSpec.from_dict(dict(d.get("phantom", {}))),
                gradients=GradientSpec.from_dict(dict(d.get("gradients", {}))),
                background_phase=BackgroundPhaseSpec.from_dict(dict(d.get("background_phase", {}))),
                noise=NoiseSpec.from_dict(noise_dict),
                filters=filters,
                calibration=str(d.get("calibration", "both")),
                jobs=int(d.get("jobs", 1)),
            )
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "phantom": self.phantom.to_dict(),
            "gradients": self.gradients.to_dict(),
            "background_phase": self.background_phase.to_dict(),
            "noise": self.noise.to_dict(),
            "filters": [f.to_dict() for f in self.filters],
            "calibration": self.calibration,
            "jobs": self.jobs,
        }

    def filter_by_label(self, label: str) -> FilterConfig:
        for f in self.filters:
            if f.label == label:
                return f
        valid = sorted({f.label for f in self.filters})
        raise ConfigError(f"unknown filter {label!r}; configured filters: {valid}")

    def calibration_variants(self) -> tuple:
        if self.calibration == "both":
            return (False, True)
        return (self.calibration == "on",)


def _default_filters():
    return [{"kind": "tv"}, {"kind": "cf"}, {"kind": "mppca"}]


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set expects a nonempty key, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_override(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[parts[-1]] = value


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a config (or manifest) file and apply ``--set`` overrides."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file does not exist: {p}")
    try:
        tree = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError(f"config {p} must hold a JSON object")
    if "config" in tree and isinstance(tree["config"], dict):
        tree = tree["config"]  # manifest written by simulate
    for item in overrides:
        key, value = _parse_override(item)
        _apply_override(tree, key, value)
    return ExperimentConfig.from_dict(tree)
