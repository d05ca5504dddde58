"""Experiment configuration: a single YAML file with nested blocks (model /
solver / learner / sim / sweep / output). Field names are documented in the
README; unknown fields are rejected so typos surface as config errors."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .channel import ChannelParams
from .model import ArrivalDist, CostModel, SystemModel, build_model


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ModelConfig:
    p01: float = 0.2
    p11: float = 0.9
    arrival_probs: tuple[float, ...] = (0.1, 0.9)
    m_d: int = 2
    kappa: float = 1.0
    cost: str | tuple[float, ...] = "exp"   # "exp" => c(u) = exp(u) - 1
    q_max: int = 10
    belief_depth: int = 10                  # truncation depth K of the belief grid
    b0: float = 0.5


@dataclass(frozen=True)
class SolverConfig:
    beta: float | None = None               # None => average-cost RVI
    tol: float = 1e-9
    max_iter: int = 100_000
    ref_q: int = 0
    ref_belief: str | float = "p01"         # "p01" | "p11" | "b0" | numeric value


@dataclass(frozen=True)
class LearnerConfig:
    steps: int = 450_000
    alpha_theta: float = 0.0005
    alpha_w: float = 0.002
    seed: int = 0
    q0: int = 5
    b0: float = 0.5
    record_every: int = 100


@dataclass(frozen=True)
class SimConfig:
    steps: int = 1_000_000
    runs: int = 1
    seed: int = 0
    q0: int = 5
    burn_in: float = 0.01
    bins: int = 20


@dataclass(frozen=True)
class SweepConfig:
    parameter: str = "delta_p"              # kappa | p1 | delta_p | p11
    values: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7)
    runs_per_point: int = 1
    include_ac: bool = False


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_BLOCKS = {
    "model": ModelConfig,
    "solver": SolverConfig,
    "learner": LearnerConfig,
    "sim": SimConfig,
    "sweep": SweepConfig,
    "output": OutputConfig,
}


def _build_block(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"block '{name}' must be a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown field(s) in '{name}': {sorted(unknown)}")
    coerced = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        if isinstance(v, list):
            v = tuple(v)
        coerced[f.name] = v
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"block '{name}': {e}") from e


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level of the config must be a mapping")
    unknown = set(data) - set(_BLOCKS)
    if unknown:
        raise ConfigError(f"unknown top-level block(s): {sorted(unknown)}")
    blocks = {name: _build_block(name, cls, data.get(name, {}))
              for name, cls in _BLOCKS.items()}
    cfg = ExperimentConfig(**blocks)
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    return parse_config(data or {})


def _validate(cfg: ExperimentConfig) -> None:
    m = cfg.model
    for name, p in (("p01", m.p01), ("p11", m.p11)):
        if not (0.0 < p < 1.0):
            raise ConfigError(f"model.{name} must be in (0,1), got {p}")
    probs = m.arrival_probs
    if not probs or any(p < 0 for p in probs):
        raise ConfigError(f"model.arrival_probs must be nonnegative, got {probs}")
    if abs(sum(probs) - 1.0) > 1e-12:
        raise ConfigError(f"model.arrival_probs must sum to 1, got {sum(probs)!r}")
    if m.m_d < 1:
        raise ConfigError(f"model.m_d must be >= 1, got {m.m_d}")
    if m.kappa < 0:
        raise ConfigError(f"model.kappa must be >= 0, got {m.kappa}")
    if isinstance(m.cost, str):
        if m.cost != "exp":
            raise ConfigError(f"model.cost must be 'exp' or a table, got {m.cost!r}")
    elif len(m.cost) != m.m_d + 1:
        raise ConfigError(
            f"model.cost table needs m_d+1 = {m.m_d + 1} entries, got {len(m.cost)}")
    if m.q_max < 0:
        raise ConfigError(f"model.q_max must be >= 0, got {m.q_max}")
    if m.belief_depth < 0:
        raise ConfigError(f"model.belief_depth must be >= 0, got {m.belief_depth}")
    if not (0.0 <= m.b0 <= 1.0):
        raise ConfigError(f"model.b0 must be in [0,1], got {m.b0}")
    s = cfg.solver
    if s.beta is not None and not (0.0 < s.beta < 1.0):
        raise ConfigError(f"solver.beta must be in (0,1), got {s.beta}")
    if s.tol <= 0:
        raise ConfigError(f"solver.tol must be positive, got {s.tol}")
    if cfg.sweep.parameter not in ("kappa", "p1", "delta_p", "p11"):
        raise ConfigError(
            f"sweep.parameter must be one of kappa|p1|delta_p|p11, got {cfg.sweep.parameter!r}")
    if cfg.learner.steps < 1 or cfg.sim.steps < 1:
        raise ConfigError("learner.steps and sim.steps must be >= 1")


def to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-dict form of a config; parse_config(to_dict(cfg)) == cfg."""
    out: dict = {}
    for name, block in ((n, getattr(cfg, n)) for n in _BLOCKS):
        d = {}
        for f in fields(block):
            v = getattr(block, f.name)
            if isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        out[name] = d
    return out


def build_from_config(cfg: ExperimentConfig, allow_unstable: bool = False) -> SystemModel:
    """Materialize the SystemModel, enforcing the stability gate."""
    m = cfg.model
    channel = ChannelParams(p01=m.p01, p11=m.p11)
    arrivals = ArrivalDist(probs=m.arrival_probs)
    if m.cost == "exp":
        cost = CostModel.exponential(m.m_d, m.kappa)
    else:
        cost = CostModel(kappa=m.kappa, c=tuple(m.cost))
    return build_model(channel, arrivals, cost, Q_max=m.q_max,
                       K=m.belief_depth, b0=m.b0, allow_unstable=allow_unstable)


def resolve_ref_state(cfg: ExperimentConfig, model: SystemModel):
    from .model import State

    ref = cfg.solver.ref_belief
    beliefs = model.beliefs
    if ref == "p01":
        bi = beliefs.idx_p01
    elif ref == "p11":
        bi = beliefs.idx_p11
    elif ref == "b0":
        bi = beliefs.idx_b0
    else:
        try:
            bi = beliefs.index_of(float(ref))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"solver.ref_belief {ref!r} is not a grid belief") from e
    q = cfg.solver.ref_q
    if not (0 <= q <= model.Q_max):
        raise ConfigError(f"solver.ref_q must be in 0..{model.Q_max}, got {q}")
    return State(q, bi)
