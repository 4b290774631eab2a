"""Experiment configuration: JSON parsing, schema checks, model construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from . import service as svc
from .dps import DpsSpec, make_dps
from .errors import ConfigError
from .workload import ModelSpec, make_model

MODES = ("analyze", "simulate", "ht-sweep", "validate")


def load_schema() -> dict:
    return json.loads(resources.files("mmqueue").joinpath("config.schema.json").read_text())


@dataclass
class ExperimentConfig:
    mode: str
    model: ModelSpec | None = None
    dps: DpsSpec | None = None
    p0: list | None = None
    p0_tolerance: float = 1e-3
    load: float | None = None
    n_values: list = field(default_factory=lambda: [10, 50, 100, 200])
    horizon: float = 1e5
    warmup: float | None = None
    horizon_scaling: str = "n2"
    batches: int = 30
    snapshots: int = 100_000
    seed: int = 0
    replications: int = 1
    workers: int = 1
    check_mu: list | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def workload_model(self) -> ModelSpec:
        """The workload model; for DPS configs, the class-mixture model."""
        return self.model if self.model is not None else self.dps.model


def parse_config(raw: dict, mode: str) -> ExperimentConfig:
    """Validate ``raw`` against the schema and build model objects.

    Schema and cross-field problems raise :class:`ConfigError`; an
    ill-posed model (reducible generator, bad weights...) raises the
    corresponding :class:`~mmqueue.errors.ModelError`.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    if raw.get("mode", mode) != mode:
        raise ConfigError(f"config mode {raw['mode']!r} does not match command {mode!r}")

    cfg = ExperimentConfig(mode=mode, raw=raw)
    for key in ("p0", "p0_tolerance", "load", "n_values", "horizon", "warmup", "horizon_scaling",
                "batches", "snapshots", "seed", "replications", "workers", "check_mu"):
        if key in raw:
            setattr(cfg, key, raw[key])
    if any(b <= a for a, b in zip(cfg.n_values, cfg.n_values[1:])):
        raise ConfigError("n_values must be strictly increasing")
    if cfg.warmup is not None and cfg.warmup >= cfg.horizon:
        raise ConfigError("warmup must be shorter than horizon")

    if "model" in raw:
        spec = raw["model"]
        services = [svc.from_json(s) for s in spec["service"]]
        cfg.model = make_model(spec["Q"], spec["lambda"], spec["c"], services)
    else:
        spec = raw["dps"]
        cfg.dps = make_dps(spec["Q"], spec["lambda"], spec["c"], spec["alpha"], spec["mu"], spec["g"])
        if cfg.check_mu is not None and len(cfg.check_mu) != cfg.dps.K:
            raise ConfigError(f"check_mu must have {cfg.dps.K} entries")
    return cfg


def read_config(path, mode: str) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(raw, mode)
