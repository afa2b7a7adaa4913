"""Scenario configuration as flat ``section.key = value`` text.

Lines starting with ``#`` are comments. Values are parsed as JSON when
possible (numbers, ``true``/``false``, quoted strings) and fall back to bare
strings, so ``acq.kind = spiral`` and ``acq.kind = "spiral"`` are equivalent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


def _key(f) -> str:
    return f.metadata.get("key", f.name)


@dataclass
class ImageConfig:
    size: int = 32
    phase_scale: float = 1.0


@dataclass
class AcqConfig:
    kind: str = "cartesian"  # cartesian | spiral | radial
    interleaves: int = 4
    readout: int = 200
    spokes: int = 15
    golden: bool = True
    accel: float = 4.0
    acs_lines: int = 4


@dataclass
class NoiseConfig:
    sigma: float = 0.01  # complex noise variance 1e-4, as in the reference experiments


@dataclass
class ConstraintConfig:
    radius: float = 1.0  # images are normalized to unit max magnitude


@dataclass
class RegConfig:
    kind: str = "quadratic"  # quadratic | huber_tv | log_tv
    lam: float = field(default=0.5, metadata={"key": "lambda"})
    delta_h: float = 0.05
    eps: float = 0.5
    anchor_file: str = ""


@dataclass
class SolverConfig:
    name: str = "cqnpm"  # cqnpm | pg | apg | gd
    K: int = 100
    stepsize: str = "fixed"  # fixed | theory
    alpha: float = 1.0
    safeguard: bool = True


@dataclass
class EstConfig:
    # metric estimator constants used in the reference experiments
    delta: float = 1e-8
    theta1: float = 2e-6
    theta2: float = 200.0
    m_fallback_tol: float = 1e-10


@dataclass
class WpmConfig:
    eps: float = 1e-9
    max_inner: int = 2000


@dataclass
class GdConfig:
    alpha0: float = 1.0
    shrink: float = 0.5
    c: float = 1e-4
    max_halvings: int = 40


@dataclass
class ValidationConfig:
    fstar_iters: int = 500
    fstar_eps: float = 0.0
    mc_samples: int = 1000


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    coils: int = 4
    image: ImageConfig = field(default_factory=ImageConfig)
    acq: AcqConfig = field(default_factory=AcqConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    constraint: ConstraintConfig = field(default_factory=ConstraintConfig)
    reg: RegConfig = field(default_factory=RegConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    est: EstConfig = field(default_factory=EstConfig)
    wpm: WpmConfig = field(default_factory=WpmConfig)
    gd: GdConfig = field(default_factory=GdConfig)
    validate: ValidationConfig = field(default_factory=ValidationConfig)

    def check(self) -> "ScenarioConfig":
        if self.image.size < 8:
            raise ConfigError("image.size must be >= 8")
        if self.coils < 1:
            raise ConfigError("coils must be >= 1")
        if self.acq.kind not in ("cartesian", "spiral", "radial"):
            raise ConfigError(f"unknown acq.kind {self.acq.kind!r}")
        if self.acq.readout < 1 or self.acq.interleaves < 1 or self.acq.spokes < 1:
            raise ConfigError("readout, interleaves and spokes must be >= 1")
        if self.acq.accel < 1:
            raise ConfigError("acq.accel must be >= 1")
        if self.noise.sigma < 0:
            raise ConfigError("noise.sigma must be >= 0")
        if self.reg.kind not in ("quadratic", "huber_tv", "log_tv"):
            raise ConfigError(f"unknown reg.kind {self.reg.kind!r}")
        if self.solver.name not in ("cqnpm", "pg", "apg", "gd"):
            raise ConfigError(f"unknown solver.name {self.solver.name!r}")
        if self.solver.stepsize not in ("fixed", "theory"):
            raise ConfigError(f"unknown solver.stepsize {self.solver.stepsize!r}")
        if self.solver.K < 1:
            raise ConfigError("solver.K must be >= 1")
        return self

    # -- flat text ---------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return dict(_flatten(self))

    def to_text(self) -> str:
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in _flatten(self))

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "ScenarioConfig":
        cfg = cls()
        for key, raw in values.items():
            _assign(cfg, key, raw)
        return cfg.check()

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key] = _parse_value(raw)
        return cls.from_dict(values)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_text(Path(path).read_text())

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


def _flatten(obj, prefix=""):
    for f in fields(obj):
        val = getattr(obj, f.name)
        key = prefix + _key(f)
        if is_dataclass(val):
            yield from _flatten(val, key + ".")
        else:
            yield key, val


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _coerce(value, default, key):
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                return value.lower() == "true"
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from None


def _assign(cfg, key: str, value) -> None:
    target = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        sub = next((f for f in fields(target) if _key(f) == part), None)
        if sub is None or not is_dataclass(getattr(target, sub.name)):
            raise ConfigError(f"unknown config key {key!r}")
        target = getattr(target, sub.name)
    f = next((f for f in fields(target) if _key(f) == parts[-1]), None)
    if f is None or is_dataclass(getattr(target, f.name)):
        raise ConfigError(f"unknown config key {key!r}")
    setattr(target, f.name, _coerce(value, getattr(target, f.name), key))
