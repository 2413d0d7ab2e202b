"""Run configuration: nested dataclasses with a lossless JSON round trip."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .evolution import StepperConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DomainConfig:
    length: float = 1.0
    height: float = 1.0


@dataclass(frozen=True)
class PhysicalConfig:
    mu: float = 0.1
    eta: float = 0.0
    rho_max: float = 1.0
    beta: float = 3.0
    amplitude: float = 0.1
    gravity: tuple = (0.0, -0.5)


@dataclass(frozen=True)
class RegularizationConfig:
    eps: float = 1e-2
    delta: float = 5e-2
    gamma_exp: float = 4.0
    lambda_bar: float | None = None        # None: automatic
    reference_density: float = 1e-2


@dataclass(frozen=True)
class BoundaryConfig:
    period: float = 1.0
    alpha: float = 1.0
    inflow_offset: float = 0.5
    stream_amplitude: float = 0.6
    wavenumber: int = 1
    rho_b: float = 0.5
    rho_b_amplitude: float = 0.2
    time_dependent: bool = True


@dataclass(frozen=True)
class FixedPointConfig:
    max_iterations: int = 200
    tol: float = 1e-6
    damping: float = 1.0
    anderson_depth: int = 0                 # 0: plain (damped) Picard
    initial_guess: str = "zero"             # zero | supplied | continuation

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("fixed-point tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")
        if self.anderson_depth < 0:
            raise ConfigError("Anderson depth must be >= 0")
        if self.initial_guess not in ("zero", "supplied", "continuation"):
            raise ConfigError(f"unknown initial guess policy {self.initial_guess!r}")


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    n: int = 8
    physical: PhysicalConfig = field(default_factory=PhysicalConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    omega: float | None = None              # None: H/8
    stepper: StepperConfig = field(default_factory=StepperConfig)
    fixed_point: FixedPointConfig = field(default_factory=FixedPointConfig)
    ledger_tolerance: float = 40.0          # C_led: |residual| <= C_led * dt, see scripts/calibrate_ledger.py
    lambda_doublings: int = 3
    output_dir: str = "runs/default"
    seed: int = 0
    deterministic: bool = False

    @property
    def cutoff_width(self):
        return self.omega if self.omega is not None else self.domain.height / 8

    def replace(self, **changes):
        """Copy with changes; dotted keys reach into sections (``"regularization.delta"``)."""
        cfg = self
        for key, value in changes.items():
            head, _, rest = key.partition(".")
            if rest:
                section = dataclasses.replace(getattr(cfg, head), **{rest: value})
                cfg = dataclasses.replace(cfg, **{head: section})
            else:
                cfg = dataclasses.replace(cfg, **{head: value})
        return cfg

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("schema_version", None)
        sections = {"domain": DomainConfig, "physical": PhysicalConfig,
                    "regularization": RegularizationConfig, "boundary": BoundaryConfig,
                    "stepper": StepperConfig, "fixed_point": FixedPointConfig}
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in d.items():
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            if key in sections:
                sub = sections[key]
                allowed = {f.name for f in dataclasses.fields(sub)}
                extra = set(value) - allowed
                if extra:
                    raise ConfigError(f"unknown keys in [{key}]: {sorted(extra)}")
                value = dict(value)
                if key == "physical" and "gravity" in value:
                    value["gravity"] = tuple(value["gravity"])
                kwargs[key] = sub(**value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


def zero_data_config(**changes):
    """All forcing switched off: the zero state is the periodic solution."""
    cfg = RunConfig(boundary=BoundaryConfig(alpha=0.0, inflow_offset=0.0, stream_amplitude=0.0,
                                            rho_b=0.0, rho_b_amplitude=0.0),
                    physical=PhysicalConfig(gravity=(0.0, 0.0)),
                    regularization=RegularizationConfig(lambda_bar=0.0))
    return cfg.replace(**changes)


def autonomous_config(**changes):
    cfg = RunConfig().replace(**{"boundary.time_dependent": False})
    return cfg.replace(**changes)
