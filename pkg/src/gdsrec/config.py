"""Run configuration: key-value config files, CLI overrides, and validation
against the supported hyper-parameter grids (with an explicit escape hatch
for off-grid experimentation)."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .model import ATTENTION_MODES, ModelConfig
from .training import TrainConfig

EMBEDDING_GRID = (16, 32, 64, 128, 256, 512)
LEARNING_RATE_GRID = (1e-6, 1e-5, 1e-4, 5e-4)
BATCH_GRID = (64, 128, 256)
DELTA_GRID = (0, 1, 2, 3)
RESERVATION_GRIDS = {"ciao": (5, 10, 15, 20), "epinions": (15, 20, 25, 30)}
ALPHA_GRID = tuple(round(0.2 * i, 1) for i in range(9))  # 0.0 .. 1.6
FRACTION_GRID = (0.6, 0.8)

VARIANTS = ("full", "RC", "SN", "RD", "avg", "max")
SWEEP_PARAMS = ("delta", "k", "alpha")


@dataclass
class RunConfig:
    # data
    ratings: str = ""
    trust: str = ""
    train_fraction: float = 0.6
    dataset_grid: str = "ciao"  # which reservation grid applies
    # model
    embedding_size: int = 64
    reservation: int = 10
    delta: int = 1
    alpha: float = 1.0
    attention_mode: str = "softmax"
    variant: str = "full"
    social_mix: float = 0.5
    activation: str = "relu"
    l2: float = 0.0
    # training
    learning_rate: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    optimizer: str = "adam"
    loss: str = "mse"
    # baselines
    mf_factors: int = 32
    mf_learning_rate: float = 0.01
    mf_reg: float = 0.05
    # run behavior
    out_dir: str = "runs/latest"
    cache_dir: str = "cache"
    clip: bool = False
    repeats: int = 5
    allow_off_grid: bool = False

    def model_config(self) -> ModelConfig:
        base = ModelConfig(
            embedding_size=self.embedding_size,
            reservation=self.reservation,
            delta=self.delta,
            alpha=self.alpha,
            attention_mode=self.attention_mode,
            social_mix=self.social_mix,
            activation=self.activation,
            l2=self.l2,
        )
        return base.for_variant(self.variant).validate()

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed if seed is None else seed,
            optimizer=self.optimizer,
            loss=self.loss,
        ).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate_grids(self):
        """Reject hyper-parameters outside the supported search grids unless
        the escape hatch is set; structural validity is checked regardless."""
        self.model_config()
        self.train_config()
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.dataset_grid not in RESERVATION_GRIDS:
            raise ConfigError(f"dataset_grid must be one of {tuple(RESERVATION_GRIDS)}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be positive, got {self.repeats}")
        if self.allow_off_grid:
            return self

        def on(value, grid):
            return any(math.isclose(value, g, rel_tol=0.0, abs_tol=1e-9) for g in grid)

        checks = [
            ("embedding_size", self.embedding_size, EMBEDDING_GRID),
            ("learning_rate", self.learning_rate, LEARNING_RATE_GRID),
            ("batch_size", self.batch_size, BATCH_GRID),
            ("delta", self.delta, DELTA_GRID),
            ("reservation", self.reservation, RESERVATION_GRIDS[self.dataset_grid]),
            ("alpha", self.alpha, ALPHA_GRID),
            ("train_fraction", self.train_fraction, FRACTION_GRID),
        ]
        for name, value, grid in checks:
            if not on(value, grid):
                raise ConfigError(
                    f"{name}={value} is outside the supported grid {grid}; "
                    f"pass --allow-off-grid to override")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES.get(name)
    if kind is None:
        raise ConfigError(f"unknown config key: {name!r}")
    if isinstance(kind, type):
        kind = kind.__name__
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {name}={raw!r} as {kind}") from None


def load_config_file(path) -> dict:
    """Read ``key = value`` lines (or a JSON manifest) into a raw dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        payload = json.loads(text)
        if "config" in payload:  # a run manifest embeds the resolved config
            payload = payload["config"]
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: JSON config must be an object")
        unknown = set(payload) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        return payload
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), raw)
    return values


def resolve_config(config_path=None, overrides=None) -> RunConfig:
    """File values, then ``key=value`` overrides, folded into a RunConfig."""
    values: dict = {}
    if config_path:
        values.update(load_config_file(config_path))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), raw)
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise ConfigError(f"bad configuration: {e}") from None
