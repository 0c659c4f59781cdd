"""Experiment configuration files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .geometry import Point
from .sppa import Schedule
from .stochastic import ScenarioDistribution, mean_modulus

SCHEMA = 1


class ConfigError(ValueError):
    pass


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_scenarios(obj, base_dir: Path) -> ScenarioDistribution:
    if isinstance(obj, str):
        obj = _read_json(base_dir / obj)
    try:
        return ScenarioDistribution.from_json(obj)
    except ValueError as exc:
        raise ConfigError(f"invalid scenario set: {exc}") from None


@dataclass
class ExperimentConfig:
    dist: ScenarioDistribution
    schedule_kind: str
    N: int
    R: int
    seed: int
    x0: Point
    eps: tuple = ()
    log_at: tuple = ()
    lambda_conf: tuple = (1.0,)
    rates_eps: tuple = (1.0, 0.1, 0.01)
    out: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def schedule(self) -> Schedule:
        if self.schedule_kind == "fast_harmonic":
            return Schedule("fast_harmonic", mean_modulus(self.dist))
        return Schedule("harmonic")

    def with_overrides(self, **kw) -> ExperimentConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        raw = dict(self.raw, **kw)
        return replace(self, raw=raw, **kw)

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
        if not isinstance(obj, dict):
            raise ConfigError("experiment config must be a JSON object")
        if obj.get("schema", SCHEMA) != SCHEMA:
            raise ConfigError(f"unsupported schema {obj.get('schema')!r}")
        if "scenarios" not in obj:
            raise ConfigError("experiment config needs 'scenarios'")
        dist = load_scenarios(obj["scenarios"], base_dir)
        kind = obj.get("schedule", "harmonic")
        if kind not in ("harmonic", "fast_harmonic"):
            raise ConfigError(f"unknown schedule {kind!r}")
        try:
            N = int(obj.get("N", 1000))
            R = int(obj.get("R", 1))
            seed = int(obj.get("seed", 0))
            x0 = Point(dist.space, dist.space.point_from_json(obj["x0"])) if "x0" in obj else None
            eps = tuple(float(e) for e in obj.get("eps", ()))
            log_at = tuple(int(n) for n in obj.get("log_at", ()))
            lambda_conf = tuple(float(v) for v in obj.get("lambda_conf", (1.0,)))
            rates_eps = tuple(float(v) for v in obj.get("rates_eps", (1.0, 0.1, 0.01)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid field: {exc}") from None
        if x0 is None:
            raise ConfigError("experiment config needs 'x0'")
        if N < 0 or R < 1:
            raise ConfigError("need N >= 0 and R >= 1")
        if any(e <= 0 for e in eps + rates_eps + lambda_conf):
            raise ConfigError("eps, rates_eps and lambda_conf entries must be positive")
        return cls(dist, kind, N, R, seed, x0, eps, log_at, lambda_conf, rates_eps, obj.get("out"), dict(obj))

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        return cls.from_dict(_read_json(path), path.parent)
