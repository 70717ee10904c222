"""YAML run configuration: schema validation and resolved-config echoing.

A config file holds up to three sections, ``model`` (ModelConfig fields),
``train`` (TrainConfig fields) and ``data``. Unknown sections or fields are
rejected with the offending name. ``resolved_dict`` materializes every
default so a run's manifest records the exact configuration it used.
"""

import dataclasses
from dataclasses import asdict

import yaml

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

MODEL_FIELDS = {f.name for f in dataclasses.fields(ModelConfig)}
TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
SYNTHETIC_FIELDS = {"volumes", "slices", "height", "width", "noise_sigma", "noise", "seed"}
DATA_FIELDS = {"manifest", "modality", "synthetic"}
SECTIONS = {"model", "train", "data"}

SYNTHETIC_DEFAULTS = {
    "volumes": 2,
    "slices": 12,
    "height": 96,
    "width": 96,
    "noise_sigma": 0.05,
    "noise": "gaussian",
    "seed": 0,
}


def _check_mapping(obj, name):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{name} must be a mapping, got {type(obj).__name__}")
    return obj


def load_config(path):
    """Parse and schema-check a YAML config file; returns the raw sections."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    raw = _check_mapping(raw, "config")
    for section in raw:
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r} (expected {sorted(SECTIONS)})")
    model = _check_mapping(raw.get("model"), "model")
    train = _check_mapping(raw.get("train"), "train")
    data = _check_mapping(raw.get("data"), "data")
    for key in model:
        if key not in MODEL_FIELDS:
            raise ConfigError(f"model.{key} is not a recognized field")
    for key in train:
        if key not in TRAIN_FIELDS:
            raise ConfigError(f"train.{key} is not a recognized field")
    for key in data:
        if key not in DATA_FIELDS:
            raise ConfigError(f"data.{key} is not a recognized field")
    synthetic = _check_mapping(data.get("synthetic"), "data.synthetic")
    for key in synthetic:
        if key not in SYNTHETIC_FIELDS:
            raise ConfigError(f"data.synthetic.{key} is not a recognized field")
    return {"model": model, "train": train, "data": data}


def build_configs(raw, model_overrides=None, train_overrides=None):
    """Materialize (ModelConfig, TrainConfig, data section) with overrides applied."""
    model_kwargs = dict(raw.get("model", {}))
    model_kwargs.update(model_overrides or {})
    train_kwargs = dict(raw.get("train", {}))
    train_kwargs.update(train_overrides or {})
    try:
        model_config = ModelConfig(**model_kwargs)
    except TypeError as exc:
        raise ConfigError(f"model section: {exc}") from exc
    try:
        train_config = TrainConfig(**train_kwargs)
    except TypeError as exc:
        raise ConfigError(f"train section: {exc}") from exc
    model_config.validate()
    train_config.validate()
    data = dict(raw.get("data", {}))
    synthetic = dict(SYNTHETIC_DEFAULTS)
    synthetic.update(data.get("synthetic") or {})
    data["synthetic"] = synthetic
    return model_config, train_config, data


def resolved_dict(model_config, train_config, data):
    """Every effective setting, defaults included, as one plain dict."""
    out = {
        "model": asdict(model_config),
        "train": asdict(train_config),
        "data": dict(data),
    }
    out["model"]["depths"] = list(model_config.full_depths)
    out["model"]["heads"] = list(model_config.full_heads)
    return out


def dump_resolved(path, resolved):
    with open(path, "w") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=True)


def parse_param_budget(text):
    """Parse a parameter budget like '0.7M', '610k' or '700000'."""
    t = str(text).strip()
    scale = 1.0
    if t and t[-1] in "MmKk":
        scale = 1e6 if t[-1] in "Mm" else 1e3
        t = t[:-1]
    try:
        return int(float(t) * scale)
    except ValueError as exc:
        raise ConfigError(f"cannot parse parameter budget {text!r}") from exc
