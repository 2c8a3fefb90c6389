"""Experiment configuration: one TOML file, validated before any work starts.

Example::

    [experiment]
    methods = ["Centralized", "Standalone", "FedAvg", "FedKD", "FedKDF"]
    seed = 0

    [data]
    num_classes = 8
    dim = 64

    [partition]
    num_clients = 3
    alpha = 1.0

Every section and key is optional; ``DEFAULTS`` documents the full schema.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .data import (
    Dataset,
    PartitionSpec,
    SyntheticSpec,
    dirichlet_partition,
    make_proxy,
    read_csv,
    sample_synthetic,
    write_csv,
)
from .federation import ArchConfig, RoundConfig, RunSettings
from .federation.experiment import METHOD_ORDER, Method
from .models import TaskMode


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


DEFAULTS: dict[str, dict[str, Any]] = {
    "experiment": {
        "methods": list(METHOD_ORDER),
        "seed": 0,
    },
    "data": {
        "num_classes": 8,
        "dim": 64,
        "class_separation": 3.0,
        "mode": "multiclass",
        "positive_rate": 0.25,
        "n_train": 3000,
        "n_val": 1000,
        "n_test": 2000,
        "proxy_size": 500,
        "gen_on_the_fly": True,
    },
    "partition": {
        "num_clients": 3,
        "alpha": 1.0,
    },
    "model": {
        "latent_dim": 16,
        "hidden": [64, 64],
        "predictor_hidden": [],
        "generator_hidden": [64],
        "noise_dim": 8,
    },
    "training": {
        "local_epochs": 1,
        "local_batch_size": 32,
        "local_lr": 0.05,
        "server_steps": 50,
        "server_batch_size": 64,
        "server_lr": 0.05,
        "generator_steps": 50,
        "generator_lr": 0.02,
        "client_distill_steps": 10,
        "total_rounds": 20,
        "uniform_predictor_weights": False,
    },
    "metrics": {
        "wire_bytes": 4,
        "ci_resamples": 1000,
        "ci_level": 0.95,
        "ci_every_round": False,
        "convergence_tolerance": 0.005,
    },
    "output": {
        "dir": "fedsim-out",
        "checkpoints": False,
        "round_csv": True,
    },
}

_POSITIVE = {
    "data": ["num_classes", "dim", "n_train", "n_val", "n_test", "proxy_size", "class_separation"],
    "partition": ["num_clients", "alpha"],
    "model": ["latent_dim", "noise_dim"],
    "metrics": ["wire_bytes", "ci_level", "convergence_tolerance"],
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown config field '{path}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}' must be a table")
            out[key] = _merge(base[key], value, path)
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, overrides: dict | None = None) -> "ExperimentConfig":
        cfg = cls(_merge(DEFAULTS, overrides or {}))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "ExperimentConfig":
        if path is None:
            return cls.from_dict({})
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file '{path}' not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file '{path}' is not valid TOML: {exc}") from exc
        return cls.from_dict(data)

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["experiment"]["seed"] = seed
        if out is not None:
            raw["output"]["dir"] = str(out)
        cfg = ExperimentConfig(raw)
        cfg.validate()
        return cfg

    def __getitem__(self, section: str) -> dict:
        return self.raw[section]

    def validate(self) -> None:
        r = self.raw
        for section, keys in _POSITIVE.items():
            for key in keys:
                v = r[section][key]
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                    raise ConfigError(f"field '{section}.{key}' must be a positive number, got {v!r}")
        seed = r["experiment"]["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError(f"field 'experiment.seed' must be an unsigned 64-bit integer, got {seed!r}")
        methods = r["experiment"]["methods"]
        if not isinstance(methods, list) or not methods:
            raise ConfigError("field 'experiment.methods' must be a non-empty list")
        for m in methods:
            try:
                Method.parse(m)
            except ValueError as exc:
                raise ConfigError(f"field 'experiment.methods': {exc}") from None
        try:
            TaskMode(r["data"]["mode"])
        except ValueError:
            raise ConfigError(f"field 'data.mode' must be 'multiclass' or 'multilabel', got {r['data']['mode']!r}") from None
        if not isinstance(r["metrics"]["wire_bytes"], int):
            raise ConfigError("field 'metrics.wire_bytes' must be an integer")
        if r["model"]["latent_dim"] >= r["data"]["dim"]:
            raise ConfigError(
                f"field 'model.latent_dim' ({r['model']['latent_dim']}) must be smaller than 'data.dim' ({r['data']['dim']})"
            )
        if r["partition"]["num_clients"] > r["data"]["n_train"]:
            raise ConfigError("field 'partition.num_clients' exceeds 'data.n_train'")
        for section, builder in (("training", self.round_config), ("model", self.arch_config), ("metrics", self.run_settings)):
            try:
                builder()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"section '{section}': {exc}") from None
        try:
            self.synthetic_spec()
        except ValueError as exc:
            raise ConfigError(f"section 'data': {exc}") from None

    @property
    def seed(self) -> int:
        return self.raw["experiment"]["seed"]

    @property
    def methods(self) -> list[str]:
        return [Method.parse(m).value for m in self.raw["experiment"]["methods"]]

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["output"]["dir"])

    @property
    def mode(self) -> TaskMode:
        return TaskMode(self.raw["data"]["mode"])

    def round_config(self) -> RoundConfig:
        return RoundConfig(**self.raw["training"])

    def arch_config(self) -> ArchConfig:
        m = self.raw["model"]
        return ArchConfig(
            latent_dim=m["latent_dim"],
            hidden=tuple(m["hidden"]),
            predictor_hidden=tuple(m["predictor_hidden"]),
            generator_hidden=tuple(m["generator_hidden"]),
            noise_dim=m["noise_dim"],
        )

    def run_settings(self) -> RunSettings:
        m = self.raw["metrics"]
        return RunSettings(
            rounds=self.round_config(),
            arch=self.arch_config(),
            mode=self.mode,
            wire_bytes=m["wire_bytes"],
            ci_resamples=m["ci_resamples"],
            ci_level=m["ci_level"],
            ci_every_round=m["ci_every_round"],
            convergence_tolerance=m["convergence_tolerance"],
        )

    def synthetic_spec(self) -> SyntheticSpec:
        d = self.raw["data"]
        return SyntheticSpec(
            num_classes=d["num_classes"],
            dim=d["dim"],
            class_separation=float(d["class_separation"]),
            mode=self.mode,
            positive_rate=d["positive_rate"],
            seed=self.seed,
        )

    def partition_spec(self) -> PartitionSpec:
        p = self.raw["partition"]
        return PartitionSpec(p["num_clients"], float(p["alpha"]), self.seed)


@dataclass(frozen=True)
class DataBundle:
    train: Dataset
    val: Dataset
    test: Dataset
    proxy: Dataset
    partitions: list[Dataset]


def generate_data(cfg: ExperimentConfig) -> DataBundle:
    """Train/val/test/proxy from independent streams with disjoint id ranges."""
    spec = cfg.synthetic_spec()
    d = cfg["data"]
    n_train, n_val, n_test = d["n_train"], d["n_val"], d["n_test"]
    train = sample_synthetic(spec, n_train, "train", 0)
    val = sample_synthetic(spec, n_val, "val", n_train)
    test = sample_synthetic(spec, n_test, "test", n_train + n_val)
    proxy = make_proxy(spec, d["proxy_size"], id_offset=n_train + n_val + n_test)
    return DataBundle(train, val, test, proxy, dirichlet_partition(train, cfg.partition_spec()))


DATA_FILES = ("train", "val", "test", "proxy")


def save_data(bundle: DataBundle, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in DATA_FILES:
        path = directory / f"{name}.csv"
        write_csv(getattr(bundle, name), path)
        written.append(path)
    for k, part in enumerate(bundle.partitions):
        path = directory / f"client_{k}.csv"
        write_csv(part, path)
        written.append(path)
    return written


def load_data(directory: Path, mode: TaskMode, num_clients: int) -> DataBundle:
    missing = [n for n in (*DATA_FILES, *(f"client_{k}" for k in range(num_clients)))
               if not (directory / f"{n}.csv").exists()]
    if missing:
        raise FileNotFoundError(f"missing data files in {directory}: {', '.join(missing)}")
    sets = {n: read_csv(directory / f"{n}.csv", mode) for n in DATA_FILES}
    parts = [read_csv(directory / f"client_{k}.csv", mode) for k in range(num_clients)]
    return DataBundle(sets["train"], sets["val"], sets["test"], sets["proxy"], parts)
