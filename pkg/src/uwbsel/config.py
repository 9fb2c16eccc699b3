"""Experiment configuration: TOML file <-> nested dataclasses.

Layout (every key optional; unknown keys are errors)::

    policy = "dqlel"              # dqlel | ne-drl | rns | nn-ns
    output_dir = "runs/default"   # overridden by $UWBSEL_OUTPUT_DIR
    full_scale = false           # 128-filter network

    [seeds]        world, walk, agent, noise
    [world]        n_x, n_y, n_u, cell_size, origin, p_nlos, reception_range, beacons
    [energy]       EnergyParams fields (mW, pJ, Mbps, s)
    [measurement]  los_noise_std, nlos_bias_mean, nakagami_m, fading_enabled, c
    [reward]       md_threshold_eps, r_c1 .. r_c4
    [agent]        AgentConfig fields
    [schedule]     n_epoch, horizon, eps_max, eps_min, initial_battery_factor
    [evaluation]   epochs
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .agent import AgentConfig, EpsilonSchedule
from .channel import MeasurementModel
from .energy import EnergyParams, packet_energy
from .env import Environment, GridWorld, RewardConfig, make_world
from .errors import ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

POLICIES = ("dqlel", "ne-drl", "rns", "nn-ns")
OUTPUT_ENV_VAR = "UWBSEL_OUTPUT_DIR"


def _check_keys(section: str, data: Mapping[str, Any], cls) -> None:
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"[{section}] unknown key(s): {sorted(unknown)}")


@dataclass(frozen=True)
class Seeds:
    world: int = 0
    walk: int = 1
    agent: int = 2
    noise: int = 3

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValidationError(f"seed {f.name} must be a non-negative integer, got {v!r}")


@dataclass(frozen=True)
class WorldSpec:
    n_x: int = 5
    n_y: int = 4
    n_u: int = 4
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.5, 0.5)
    p_nlos: float = 0.3
    reception_range: float = 10.0
    beacons: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if self.beacons is not None:
            bs = tuple(tuple(float(v) for v in b) for b in self.beacons)
            if any(len(b) != 2 for b in bs):
                raise ValidationError("[world] beacons must be [x, y] pairs")
            if len(bs) != self.n_u:
                raise ValidationError(f"[world] {len(bs)} beacon positions given for n_u = {self.n_u}")
            object.__setattr__(self, "beacons", bs)
        if self.n_u < 2:
            raise ValidationError("[world] n_u must be >= 2")
        if not 0.0 <= self.p_nlos <= 1.0:
            raise ValidationError("[world] p_nlos must lie in [0, 1]")

    def build(self, seed: int) -> GridWorld:
        return make_world(
            n_x=self.n_x, n_y=self.n_y, n_u=self.n_u, p_nlos=self.p_nlos, seed=seed,
            beacon_positions=self.beacons, reception_range=self.reception_range,
            cell_size=self.cell_size, origin=self.origin,
        )


@dataclass(frozen=True)
class Schedule:
    n_epoch: int = 500
    horizon: int = 50
    eps_max: float = 1.0
    eps_min: float = 0.01
    initial_battery_factor: float = 1e4

    def __post_init__(self) -> None:
        if self.n_epoch < 0 or self.horizon < 0:
            raise ValidationError("[schedule] n_epoch and horizon must be non-negative")
        if not self.initial_battery_factor > 0:
            raise ValidationError("[schedule] initial_battery_factor must be positive")
        self.epsilon()

    def epsilon(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.eps_max, self.eps_min, max(self.n_epoch, 1))


@dataclass(frozen=True)
class Evaluation:
    epochs: int = 10

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValidationError("[evaluation] epochs must be non-negative")


@dataclass(frozen=True)
class ExperimentConfig:
    policy: str = "dqlel"
    output_dir: str = "runs/default"
    full_scale: bool = False
    seeds: Seeds = field(default_factory=Seeds)
    world: WorldSpec = field(default_factory=WorldSpec)
    energy: EnergyParams = field(default_factory=EnergyParams)
    measurement: MeasurementModel = field(default_factory=MeasurementModel)
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    schedule: Schedule = field(default_factory=Schedule)
    evaluation: Evaluation = field(default_factory=Evaluation)

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValidationError(f"policy must be one of {POLICIES}, got {self.policy!r}")

    # derived objects -------------------------------------------------------
    @property
    def agent_config(self) -> AgentConfig:
        return replace(self.agent, filters=128) if self.full_scale else self.agent

    @property
    def e_total(self) -> float:
        return packet_energy(self.energy).e_total

    def build_world(self) -> GridWorld:
        return self.world.build(self.seeds.world)

    def build_env(self, world: Optional[GridWorld] = None, horizon: Optional[int] = None) -> Environment:
        e = self.e_total
        return Environment(
            world=world if world is not None else self.build_world(),
            e_total=e,
            initial_battery=self.schedule.initial_battery_factor * e,
            reward_cfg=self.reward,
            meas_model=self.measurement,
            horizon=self.schedule.horizon if horizon is None else horizon,
            walk_seed=self.seeds.walk,
            noise_seed=self.seeds.noise,
        )

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV_VAR) or self.output_dir)

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        d["world"]["origin"] = list(self.world.origin)
        if self.world.beacons is not None:
            d["world"]["beacons"] = [list(b) for b in self.world.beacons]
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        sections = {
            "seeds": Seeds,
            "world": WorldSpec,
            "energy": EnergyParams,
            "measurement": MeasurementModel,
            "reward": RewardConfig,
            "agent": AgentConfig,
            "schedule": Schedule,
            "evaluation": Evaluation,
        }
        top = {"policy", "output_dir", "full_scale"}
        unknown = set(data) - top - set(sections)
        if unknown:
            raise ValidationError(f"unknown top-level key(s): {sorted(unknown)}")
        kwargs: dict[str, Any] = {k: data[k] for k in top if k in data}
        for name, sec_cls in sections.items():
            sec = data.get(name, {})
            if not isinstance(sec, Mapping):
                raise ValidationError(f"[{name}] must be a table")
            _check_keys(name, sec, sec_cls)
            sec = dict(sec)
            if name == "agent" and "dense" in sec:
                sec["dense"] = tuple(sec["dense"])
            try:
                kwargs[name] = sec_cls(**sec)
            except TypeError as exc:
                raise ValidationError(f"[{name}] {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"invalid TOML in {path}: {exc}") from exc
        return cls.from_mapping(data)

    def with_policy(self, policy: str, output_dir: Optional[str] = None) -> "ExperimentConfig":
        return replace(self, policy=policy, output_dir=output_dir or self.output_dir)


def load_config(path: Optional[Union[str, Path]]) -> ExperimentConfig:
    return ExperimentConfig() if path is None else ExperimentConfig.from_file(path)
