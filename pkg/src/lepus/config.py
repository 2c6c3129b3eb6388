"""Run configuration: defaults, presets, JSON round-trip, validation, seeding.

Presets: desk3/desk4 are fast small-track configurations for development and
acceptance runs; paper3/paper4 carry the full-scale reference configuration
(distillation 200 iters / batch 256 / lr 1e-3, v 250000, adversarial
iterations 20000/30000, discriminator and policy lr 1e-4, critic lr 1e-3,
batch 32, gamma 0.99, ell 1e-3) on the full-size 2057.56 m track.
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .artifact_io import digest_of
from .expert import ExpertGains
from .sim import SimParams
from .track import TrackSpec, oval_track


@dataclass
class ScenarioCfg:
    n_agents: int = 3
    obs_dim: int = 65
    spacing: float = 20.0
    track_file: str | None = None    # JSON track overrides the built-in oval
    lap_length: float = 400.0
    half_width: float = 6.0
    dt: float = 0.1
    c_steer: float = 0.35
    c_acc: float = 2.0
    c_brake: float = 8.0
    c_drag: float = 0.05
    collision_radius: float = 1.0
    n_sensors: int = 19
    sensor_range: float = 100.0
    sensor_step: float = 2.0
    w_rev: int = 20
    w_slow: int = 50
    grace: int = 50
    t_max: int = 3000

    def sim_params(self) -> SimParams:
        return SimParams(dt=self.dt, c_steer=self.c_steer, c_acc=self.c_acc,
                         c_brake=self.c_brake, c_drag=self.c_drag,
                         collision_radius=self.collision_radius,
                         n_sensors=self.n_sensors, sensor_range=self.sensor_range,
                         sensor_step=self.sensor_step, w_rev=self.w_rev,
                         w_slow=self.w_slow, grace=self.grace, t_max=self.t_max)

    def make_track(self) -> TrackSpec:
        if self.track_file:
            return TrackSpec.load_json(self.track_file)
        return oval_track(self.lap_length, self.half_width)


@dataclass
class ExpertCfg:
    n_rounds: int = 30
    max_steps_keep: int = 360
    min_keep_fraction: float = 0.25
    gains: ExpertGains = field(default_factory=ExpertGains)


@dataclass
class RndCfg:
    v: float = 250000.0
    auto_calibrate_v: bool = True    # rescale v post-training for desk scale
    calibrate_target: float = 0.9
    iters: int = 200
    minibatch: int = 256
    lr: float = 1e-3
    holdout_fraction: float = 0.1


@dataclass
class PretrainCfg:
    dis_iter: int = 2000
    batch: int = 256
    dis_lr: float = 1e-4
    policy_lr: float = 1e-4
    expert_fraction: float = 0.5
    discriminator: str = "A"         # A: (300, 600) tanh; B: (128, 64, 32) leaky_relu


@dataclass
class TrainerCfg:
    gamma: float = 0.99
    ell: float = 1e-3
    policy_lr: float = 1e-4
    q_lr: float = 1e-3
    batch: int = 32
    buffer_capacity: int = 100_000
    warmup: int = 1000
    episodes: int = 10
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0


@dataclass
class EvalCfg:
    rounds: int = 20


@dataclass
class RunConfig:
    scenario: ScenarioCfg = field(default_factory=ScenarioCfg)
    expert: ExpertCfg = field(default_factory=ExpertCfg)
    rnd: RndCfg = field(default_factory=RndCfg)
    pretrain: PretrainCfg = field(default_factory=PretrainCfg)
    trainer: TrainerCfg = field(default_factory=TrainerCfg)
    eval: EvalCfg = field(default_factory=EvalCfg)
    seed: int = 0
    out_dir: str = "runs/default"

    def validate(self) -> None:
        s = self.scenario
        if s.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        from .sim import obs_layout
        need = obs_layout(s.n_agents, s.n_sensors)["min_dim"]
        if s.obs_dim < need:
            raise ValueError(f"obs_dim {s.obs_dim} below minimum {need} for "
                             f"{s.n_agents} agents and {s.n_sensors} sensors")
        if s.spacing * s.n_agents > s.lap_length:
            raise ValueError("agents do not fit on the track at this spacing")
        if self.pretrain.discriminator not in ("A", "B"):
            raise ValueError("discriminator variant must be 'A' or 'B'")
        if not (0.0 < self.pretrain.expert_fraction <= 1.0):
            raise ValueError("expert_fraction must be in (0, 1]")
        if not (0.0 < self.trainer.ell <= 1.0):
            raise ValueError("ell must be in (0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return digest_of(self.to_dict())

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        def build(tp, sub):
            kwargs = dict(sub)
            if tp is ExpertCfg and "gains" in kwargs:
                kwargs["gains"] = ExpertGains(**kwargs["gains"])
            return tp(**kwargs)

        cfg = cls()
        for name, tp in (("scenario", ScenarioCfg), ("expert", ExpertCfg),
                         ("rnd", RndCfg), ("pretrain", PretrainCfg),
                         ("trainer", TrainerCfg), ("eval", EvalCfg)):
            if name in d:
                setattr(cfg, name, build(tp, d[name]))
        for name in ("seed", "out_dir"):
            if name in d:
                setattr(cfg, name, d[name])
        return cfg

    @classmethod
    def load_json(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def component_seed(master_seed: int, component: str) -> np.random.SeedSequence:
    """Stable per-component seed stream derived from the master seed."""
    return np.random.SeedSequence([int(master_seed), zlib.crc32(component.encode())])


def preset(name: str) -> RunConfig:
    cfg = RunConfig()
    if name == "desk3":
        cfg.scenario.n_agents = 3
    elif name == "desk4":
        cfg.scenario.n_agents = 4
    elif name in ("paper3", "paper4"):
        cfg.scenario.n_agents = 3 if name == "paper3" else 4
        cfg.scenario.lap_length = 2057.56
        cfg.scenario.dt = 0.2
        cfg.scenario.t_max = 3000
        cfg.scenario.w_slow = 500       # published slow-rule window at 1 s/step
        cfg.expert.n_rounds = 1000
        cfg.expert.max_steps_keep = 750
        cfg.expert.gains = ExpertGains(angle_kp=1.5, angle_kd=0.0)
        cfg.rnd.auto_calibrate_v = False
        cfg.pretrain.dis_iter = 20000 if name == "paper3" else 30000
        cfg.trainer.episodes = 100
    else:
        raise ValueError(f"unknown preset {name!r} "
                         f"(expected desk3, desk4, paper3, paper4)")
    cfg.out_dir = f"runs/{name}"
    return cfg
