"""Run configuration: a versioned YAML schema with strict validation.

Configs are nested key-value files; unknown keys are rejected with the line
they appear on, so sweeps stay diff-able and typos fail fast.  The validated
config re-serializes canonically into the run manifest, and the manifest
re-parses to an identical config (round-trip contract).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1

KINDS = ("brl", "standard", "lemma1", "gradcheck", "sweep")


@dataclass
class EnvConfig:
    name: str = "chain"
    n_states: int = 2
    slip: float = 0.1
    gamma: float = 0.9


@dataclass
class PolicyConfig:
    eps_floor: float = 0.02


@dataclass
class RewardConfig:
    beta: float = 0.0


@dataclass
class LabelerConfig:
    mode: str = "bernoulli"
    true_phi: list[float] | None = None


@dataclass
class PenaltySection:
    sigma: float = 0.5
    eta: float = 0.05
    tau: float = 0.02
    tau_prime: float = 0.02
    K: int = 10
    T: int = 50
    n: int = 64
    B: int = 256
    H: int = 40
    warm_start: bool = True
    sigma0: float = 1.0
    penalty_term_sign: str = "plus"
    outer_mode: str = "penalty"
    eta_backtracking: bool = False


@dataclass
class ScheduleSection:
    c_sigma: float = 0.25
    c_B: float = 1.0
    c_n: float = 1.0
    c_T: float = 1.0
    c_K: float = 1.0
    c_H: float = 1.0


@dataclass
class NoiseConfig:
    upper: float = 0.0
    lower: float = 0.0


@dataclass
class Lemma1Config:
    fn: str = "sinsq"
    eta: float = 0.125
    steps: int = 500
    seeds: int = 100
    bias: float = 0.0
    noise: float = 0.0
    x0: float = 3.0
    smooth_l: float = 8.0
    pl_lo: float = -10.0
    pl_hi: float = 10.0
    pl_step: float = 1e-4


@dataclass
class GradcheckConfig:
    names: list[str] | None = None
    points: int = 20
    tolerance: float = 1e-4
    corrupt: str | None = None


@dataclass
class SweepConfig:
    axis: str = "B"
    values: list = field(default_factory=list)


@dataclass
class RunConfig:
    kind: str
    seed: int = 0
    out_dir: str = "run"
    plots: bool = True
    env: EnvConfig = field(default_factory=EnvConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    labeler: LabelerConfig = field(default_factory=LabelerConfig)
    pair_horizon: int = 2
    persist_pairs: bool = False
    penalty: PenaltySection = field(default_factory=PenaltySection)
    epsilon: float | None = None
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    instance: str = "quad"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    phi0: list[float] | None = None
    lemma1: Lemma1Config = field(default_factory=Lemma1Config)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    sweep_base: dict | None = None


_SECTION_TYPES = {
    "env": EnvConfig,
    "policy": PolicyConfig,
    "reward": RewardConfig,
    "labeler": LabelerConfig,
    "penalty": PenaltySection,
    "schedule": ScheduleSection,
    "noise": NoiseConfig,
    "lemma1": Lemma1Config,
    "gradcheck": GradcheckConfig,
    "sweep": SweepConfig,
}

_TOP_SCALARS = {"kind", "seed", "out_dir", "plots", "pair_horizon", "persist_pairs",
                "epsilon", "instance", "phi0", "sweep_base"}


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        if stripped.strip().startswith(f"{key}:"):
            return f" (line {i})"
    return ""


def _build_section(cls, data: dict, path: str, text: str | None):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be a mapping{_line_of(text, path.split('.')[-1])}")
    allowed = set(cls.__dataclass_fields__)
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key}{_line_of(text, key)}")
    return cls(**data)


def config_from_mapping(raw: dict, text: str | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = dict(raw)
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}"
                          f"{_line_of(text, 'schema_version')}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}{_line_of(text, 'kind')}")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key, text)
        elif key in _TOP_SCALARS:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown key {key}{_line_of(text, key)}")
    cfg = RunConfig(**kwargs)
    _validate_semantics(cfg, text)
    return cfg


def _validate_semantics(cfg: RunConfig, text: str | None) -> None:
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError(f"seed must be an integer{_line_of(text, 'seed')}")
    if cfg.env.name not in ("chain", "lq1d"):
        raise ConfigError(f"env.name must be 'chain' or 'lq1d'{_line_of(text, 'name')}")
    if cfg.instance not in ("quad", "sinsq"):
        raise ConfigError(f"instance must be 'quad' or 'sinsq'{_line_of(text, 'instance')}")
    if cfg.epsilon is not None and not 0.0 < cfg.epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1]{_line_of(text, 'epsilon')}")
    if cfg.kind == "sweep":
        if cfg.sweep_base is None:
            raise ConfigError("sweep runs need a sweep_base mapping")
        if not cfg.sweep.values:
            raise ConfigError("sweep.values must be non-empty")
        if cfg.sweep.axis not in ("sigma", "B", "K", "H", "T"):
            raise ConfigError(f"sweep.axis must be one of sigma/B/K/H/T{_line_of(text, 'axis')}")
        base = dict(cfg.sweep_base)
        base.setdefault("schema_version", SCHEMA_VERSION)
        child = config_from_mapping(base)
        if child.kind not in ("brl", "standard"):
            raise ConfigError("sweep_base.kind must be brl or standard")


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"YAML parse error in {path}: {err}") from err
    return config_from_mapping(raw, text)


def config_to_mapping(cfg: RunConfig) -> dict:
    """Canonical mapping form (defaults included) used for the manifest."""
    out = {"schema_version": SCHEMA_VERSION}
    out.update(asdict(cfg))
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_mapping(cfg), sort_keys=True)


def write_manifest(cfg: RunConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def load_manifest(path) -> RunConfig:
    return load_config(path)
