"""Run configuration with per-field provenance.

Every hyperparameter carries a source tag: ``published`` values come from the
method this toolkit implements, ``toolkit`` values are artifact-level knobs
the method leaves open.  Config files are flat JSON documents; command-line
``key=value`` overrides win over file values.  Unknown keys are rejected, and
every run dumps its fully resolved config (values plus tags) next to its
outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

PUBLISHED = "published"
TOOLKIT = "toolkit"


@dataclass
class Field:
    default: Any
    source: str
    kind: type
    choices: tuple | None = None
    optional: bool = False


FIELDS: dict[str, Field] = {
    # clip geometry and sampling
    "clip_length": Field(256, PUBLISHED, int),
    "train_overlap": Field(30, PUBLISHED, int),
    "test_overlap": Field(128, PUBLISHED, int),
    "single_clip_frames": Field(None, PUBLISHED, int, optional=True),
    "sample_fps": Field(10.0, PUBLISHED, float),
    # boundary regions
    "delta_a": Field(4.0, PUBLISHED, float),
    "delta_b": Field(10.0, PUBLISHED, float),
    "bcl_delta_b": Field(100.0, PUBLISHED, float),
    # objective weights
    "lambda_loc": Field(10.0, PUBLISHED, float),
    "gamma_quality": Field(1.0, PUBLISHED, float),
    # optimization
    "epochs": Field(16, PUBLISHED, int),
    "learning_rate": Field(1e-5, PUBLISHED, float),
    "weight_decay": Field(1e-3, PUBLISHED, float),
    "batch_size": Field(1, PUBLISHED, int),
    "max_steps": Field(None, TOOLKIT, int, optional=True),
    # method components
    "pooling": Field("max", PUBLISHED, str, choices=("max", "mean", "conv", "stack")),
    "quality_mode": Field("tiou", PUBLISHED, str, choices=("tiou", "centerness", "off")),
    "bcl": Field(True, PUBLISHED, bool),
    "bcl_act": Field(True, PUBLISHED, bool),
    "bcl_trip": Field(True, PUBLISHED, bool),
    "bcl_norm": Field("tanh", PUBLISHED, str, choices=("tanh", "clip01", "minmax")),
    # post-processing
    "nms_tiou": Field(0.5, PUBLISHED, float),
    "nms_variant": Field("linear", TOOLKIT, str, choices=("linear", "gaussian")),
    "nms_sigma": Field(0.5, TOOLKIT, float),
    "score_floor": Field(1e-4, TOOLKIT, float),
    "top_k": Field(2000, TOOLKIT, int),
    # evaluation
    "eval_thresholds": Field([0.3, 0.4, 0.5, 0.6, 0.7], PUBLISHED, list),
    # network shape
    "channels": Field(64, TOOLKIT, int),
    "num_levels": Field(6, TOOLKIT, int),
    "groups": Field(8, TOOLKIT, int),
    "eps_width": Field(1.0, TOOLKIT, float),
    # focal loss
    "focal_gamma": Field(2.0, TOOLKIT, float),
    "focal_alpha": Field(0.25, TOOLKIT, float),
    # consistency learning details
    "bcl_radius": Field(2, TOOLKIT, int),
    "bcl_symmetric": Field(False, TOOLKIT, bool),
    # run control
    "seed": Field(0, TOOLKIT, int),
    "dtype": Field("f64", TOOLKIT, str, choices=("f64", "f32")),
    "log_every": Field(1, TOOLKIT, int),
    # synthetic data
    "synth_train": Field(20, TOOLKIT, int),
    "synth_test": Field(5, TOOLKIT, int),
    "synth_classes": Field(3, TOOLKIT, int),
    "synth_channels": Field(16, TOOLKIT, int),
    "synth_frames_per_step": Field(4, TOOLKIT, int),
    "synth_min_frames": Field(320, TOOLKIT, int),
    "synth_max_frames": Field(640, TOOLKIT, int),
    "synth_min_actions": Field(2, TOOLKIT, int),
    "synth_max_actions": Field(4, TOOLKIT, int),
    "synth_min_action": Field(32, TOOLKIT, int),
    "synth_max_action": Field(144, TOOLKIT, int),
    "synth_min_gap": Field(24, TOOLKIT, int),
    "synth_boundary": Field(6, TOOLKIT, int),
    "synth_boundary_strength": Field(0.6, TOOLKIT, float),
    "synth_ramp": Field(16, TOOLKIT, int),
    "synth_snr": Field(2.0, TOOLKIT, float),
    "synth_confusers": Field(1, TOOLKIT, int),
    "synth_confuser_strength": Field(0.5, TOOLKIT, float),
}


class ConfigError(ValueError):
    pass


class Config:
    """Resolved configuration: attribute access plus provenance bookkeeping."""

    def __init__(self, values: dict[str, Any]):
        for name, value in values.items():
            setattr(self, name, value)
        self._values = values

    def __repr__(self):
        return f"Config({self._values})"

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)

    def resolved(self) -> dict[str, dict[str, Any]]:
        """Values plus provenance tags, for the resolved-config dump."""
        return {name: {"value": self._values[name], "source": FIELDS[name].source}
                for name in sorted(self._values)}

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.resolved(), indent=2, sort_keys=True) + "\n")


def _coerce(name: str, field: Field, raw: Any) -> Any:
    if raw is None or (isinstance(raw, str) and raw.lower() in ("none", "null")):
        if field.optional:
            return None
        raise ConfigError(f"{name} cannot be null")
    if field.kind is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str):
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if field.kind is list:
        if isinstance(raw, list):
            return [float(x) for x in raw]
        if isinstance(raw, str):
            return [float(x) for x in raw.split(",") if x]
        raise ConfigError(f"{name}: expected a list, got {raw!r}")
    try:
        return field.kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot interpret {raw!r} as {field.kind.__name__}") from exc


def _validate(values: dict[str, Any]) -> None:
    problems = []
    for name, field in FIELDS.items():
        v = values[name]
        if v is None:
            continue
        if field.choices is not None and v not in field.choices:
            problems.append(f"{name}: {v!r} not in {field.choices}")
        if field.kind in (int, float) and not isinstance(v, bool) and v < 0:
            problems.append(f"{name}: must be non-negative, got {v}")
    for overlap_name in ("train_overlap", "test_overlap"):
        if not (0 <= values[overlap_name] < values["clip_length"]):
            problems.append(f"{overlap_name} must lie in [0, clip_length)")
    t = values["eval_thresholds"]
    if any(not (0 < x <= 1) for x in t) or any(b <= a for a, b in zip(t, t[1:])):
        problems.append("eval_thresholds must be strictly increasing within (0, 1]")
    if values["channels"] % values["groups"] != 0:
        problems.append("channels must be divisible by groups")
    for positive in ("clip_length", "delta_a", "delta_b", "epochs", "channels",
                     "num_levels", "groups", "learning_rate"):
        if not values[positive] or values[positive] <= 0:
            problems.append(f"{positive} must be positive")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))


def _profile_path(name: str) -> Path | None:
    candidate = Path(name)
    if candidate.exists():
        return candidate
    if not name.endswith(".cfg"):
        name = name + ".cfg"
    ref = resources.files("aftal").joinpath("profiles", name)
    if ref.is_file():
        return Path(str(ref))
    return None


def load_config(path: str | None = None,
                overrides: dict[str, Any] | None = None) -> Config:
    """Defaults, then profile/file values, then overrides; validated."""
    values = {name: field.default for name, field in FIELDS.items()}
    if path is not None:
        resolved = _profile_path(str(path))
        if resolved is None:
            raise ConfigError(f"config file or profile {path!r} not found")
        try:
            doc = json.loads(resolved.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{resolved}: invalid JSON ({exc})") from exc
        unknown = sorted(set(doc) - set(FIELDS))
        if unknown:
            raise ConfigError(f"{resolved}: unknown config keys {unknown}")
        for name, raw in doc.items():
            values[name] = _coerce(name, FIELDS[name], raw)
    for name, raw in (overrides or {}).items():
        if name not in FIELDS:
            raise ConfigError(f"unknown config key {name!r}")
        values[name] = _coerce(name, FIELDS[name], raw)
    _validate(values)
    return Config(values)


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out
