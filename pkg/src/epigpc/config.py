"""Run configuration: a nested YAML document validated into dataclasses."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ._validation import MIN_TAU
from .models import LOG_MEAN, SIGMA_MAX

DEFAULT_TAUS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


@dataclass
class ModelConfig:
    type: str = "diffusion"
    nx: int = 120
    ny: int = 30
    extent: list = field(default_factory=lambda: [240.0, 60.0])
    left: float = 50.0
    right: float = 25.0
    sink: float = -1.0
    sink_extent: list | None = None
    log_mean: float = LOG_MEAN
    # synthetic model only
    n_points: int = 21
    scale: float = 0.1
    seed: int = 0


@dataclass
class CovarianceConfig:
    sigma_max: float = SIGMA_MAX
    L: list = field(default_factory=lambda: [1 / 24, 1 / 20])
    n_decay: int = 100


@dataclass
class StochasticConfig:
    d: int = 10
    N: int = 3
    level: int | None = None
    taus: list = field(default_factory=lambda: list(DEFAULT_TAUS))
    full_gpc: bool = True


@dataclass
class DDConfig:
    enabled: bool = False
    layout: list = field(default_factory=lambda: [4, 2])
    r: int = 3
    N_s: int = 3
    level: int | None = None
    coarse_level: int = 2


@dataclass
class MCConfig:
    n: int = 100_000
    seed: int = 0
    bins: int = 30
    point: str | int = "center"
    density_samples: int = 10_000


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    covariance: CovarianceConfig = field(default_factory=CovarianceConfig)
    stochastic: StochasticConfig = field(default_factory=StochasticConfig)
    dd: DDConfig = field(default_factory=DDConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    output: str = "out"
    cache: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def offline_hash(self) -> str:
        """Hash of everything the offline artifacts depend on."""
        doc = self.to_dict()
        key = {"model": doc["model"], "covariance": doc["covariance"],
               "stochastic": {k: v for k, v in doc["stochastic"].items() if k != "taus"},
               "dd": doc["dd"]}
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict | None) -> "RunConfig":
        doc = {} if doc is None else doc
        if not isinstance(doc, dict):
            raise ConfigError("<root>: expected a mapping")
        sections = {"model": ModelConfig, "covariance": CovarianceConfig,
                    "stochastic": StochasticConfig, "dd": DDConfig, "mc": MCConfig}
        kwargs = {}
        for key, value in doc.items():
            if key in sections:
                kwargs[key] = _build(sections[key], value, key)
            elif key in ("output", "cache"):
                kwargs[key] = value
            else:
                raise ConfigError(f"{key}: unknown field")
        cfg = cls(**kwargs)
        try:
            cfg.validate()
        except TypeError as exc:
            raise ConfigError(f"<root>: wrong value type ({exc})") from exc
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def validate(self) -> None:
        m, s, dd, mc = self.model, self.stochastic, self.dd, self.mc
        _require(m.type in ("diffusion", "synthetic"), "model.type",
                 f"must be 'diffusion' or 'synthetic', got {m.type!r}")
        _require(m.nx >= 3 and m.ny >= 3, "model.nx", "grid must be at least 3x3 cells")
        _require(len(m.extent) == 2 and min(m.extent) > 0, "model.extent",
                 "must be two positive lengths")
        _require(m.n_points >= 1, "model.n_points", "must be >= 1")
        _require(self.covariance.sigma_max > 0, "covariance.sigma_max", "must be > 0")
        _require(len(self.covariance.L) == 2, "covariance.L", "must have two diagonal entries")
        _require(s.d >= 1, "stochastic.d", "must be >= 1")
        _require(s.N >= 0, "stochastic.N", "must be >= 0")
        _require(s.level is None or s.level >= 1, "stochastic.level", "must be >= 1")
        for i, t in enumerate(s.taus):
            _require(isinstance(t, (int, float)) and MIN_TAU <= t <= 1.0,
                     f"stochastic.taus[{i}]", f"must lie in [{MIN_TAU:g}, 1], got {t!r}")
        if dd.enabled:
            _require(1 <= dd.r <= s.d, "dd.r", f"must satisfy 1 <= r <= d={s.d}")
            _require(dd.N_s >= 0, "dd.N_s", "must be >= 0")
            _require(dd.level is None or dd.level >= 1, "dd.level", "must be >= 1")
            _require(dd.coarse_level >= 2, "dd.coarse_level", "must be >= 2")
            _require(len(dd.layout) in (1, 2) and min(dd.layout) >= 1, "dd.layout",
                     "must be one or two positive block counts")
        _require(mc.n >= 2, "mc.n", "must be >= 2")
        _require(mc.bins >= 2, "mc.bins", "must be >= 2")
        _require(mc.density_samples >= 2, "mc.density_samples", "must be >= 2")
        _require(mc.point == "center" or isinstance(mc.point, int), "mc.point",
                 "must be 'center' or a spatial index")


def _require(ok: bool, path: str, message: str) -> None:
    if not ok:
        raise ConfigError(f"{path}: {message}")


def _build(kind, value, path):
    if value is None:
        return kind()
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping")
    names = {f.name: f for f in fields(kind)}
    for key in value:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
    try:
        return kind(**value)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
