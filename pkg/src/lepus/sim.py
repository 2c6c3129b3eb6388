"""Deterministic 2D multi-car closed-track simulator.

Sign conventions: the track runs counterclockwise; lateral offset (and
trackPos) is positive to the RIGHT of the track axis; alpha is heading minus
local track direction, wrapped to (-pi, pi]; positive steering turns the car
clockwise (to the right).  With these choices the expert's steering law
(steer from -trackPos/10 + alpha) is stabilizing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .track import TrackSpec, wrap_angle


@dataclass
class SimParams:
    dt: float = 0.1                 # s per tick
    c_steer: float = 0.35           # curvature per unit steering (1/m)
    c_acc: float = 2.0              # m/s^2 at full throttle
    c_brake: float = 8.0            # m/s^2 at full brake
    c_drag: float = 0.05            # 1/s linear drag
    collision_radius: float = 1.0   # m; contact below 2*radius
    n_sensors: int = 19
    sensor_range: float = 100.0     # m
    sensor_step: float = 2.0        # ray-march step, m
    opponent_range: float = 200.0   # m cap on opponent distances
    w_rev: int = 20                 # consecutive reversed-orientation ticks
    w_slow: int = 50                # consecutive slow ticks
    grace: int = 50                 # ticks before the slow rule arms
    t_max: int = 3000               # tick budget per round
    slow_kmh: float = 1.0           # slow-rule speed threshold


@dataclass
class Termination:
    reason: str                     # off_track | reverse | slow | timeout | lap_complete
    agent: int | None = None


@dataclass
class StepOutcome:
    observations: np.ndarray        # (M, D)
    g_rewards: np.ndarray           # (M,)
    collisions: list                # list of (i, j) pairs, i < j, edge-triggered
    termination: Termination | None


def obs_layout(n_agents: int, n_sensors: int) -> dict:
    """Index map for the observation vector."""
    return {
        "vx": 0, "alpha": 1, "trackpos": 2,
        "sensors": (3, 3 + n_sensors),
        "opponents": (3 + n_sensors, 3 + n_sensors + n_agents - 1),
        "min_dim": 3 + n_sensors + n_agents - 1,
    }


def g_reward(vx_kmh, alpha, trackpos):
    """Base per-agent shaping reward from speed, track angle, lateral offset."""
    return vx_kmh * np.cos(alpha) - vx_kmh * np.sin(alpha) - vx_kmh * np.abs(trackpos)


class RuleTracker:
    """Per-round driving-rule state machine (consecutive-tick windows)."""

    def __init__(self, n_agents: int, params: SimParams, lap_length: float):
        self.p = params
        self.lap_length = lap_length
        self.n = n_agents
        self.tick = 0
        self.rev_count = np.zeros(n_agents, dtype=np.int64)
        self.slow_count = np.zeros(n_agents, dtype=np.int64)

    def observe(self, vx_kmh, alpha, trackpos, progress) -> Termination | None:
        self.tick += 1
        for i in range(self.n):
            if abs(trackpos[i]) > 1.0:
                return Termination("off_track", i)
        for i in range(self.n):
            if abs(alpha[i]) > np.pi / 2:
                self.rev_count[i] += 1
                if self.rev_count[i] >= self.p.w_rev:
                    return Termination("reverse", i)
            else:
                self.rev_count[i] = 0
        if self.tick > self.p.grace:
            for i in range(self.n):
                if vx_kmh[i] < self.p.slow_kmh:
                    self.slow_count[i] += 1
                    if self.slow_count[i] >= self.p.w_slow:
                        return Termination("slow", i)
                else:
                    self.slow_count[i] = 0
        if np.all(np.asarray(progress) >= self.lap_length):
            return Termination("lap_complete", None)
        if self.tick >= self.p.t_max:
            return Termination("timeout", None)
        return None


def check_rules(vx_kmh, alpha, trackpos, progress, params: SimParams,
                lap_length: float) -> Termination | None:
    """Run the rule machine over a whole round history ((T, M) arrays)."""
    vx_kmh = np.atleast_2d(vx_kmh)
    tracker = RuleTracker(vx_kmh.shape[1], params, lap_length)
    for t in range(vx_kmh.shape[0]):
        verdict = tracker.observe(np.atleast_2d(vx_kmh)[t], np.atleast_2d(alpha)[t],
                                  np.atleast_2d(trackpos)[t], np.atleast_2d(progress)[t])
        if verdict is not None:
            return verdict
    return None


@dataclass
class SimState:
    track: TrackSpec
    params: SimParams
    n_agents: int
    obs_dim: int
    pos: np.ndarray                 # (M, 2)
    heading: np.ndarray             # (M,)
    speed: np.ndarray               # (M,) m/s
    arc: np.ndarray                 # (M,) wrapped arc position
    lateral: np.ndarray             # (M,) signed meters, right positive
    alpha: np.ndarray               # (M,)
    progress: np.ndarray            # (M,) cumulative centerline meters
    tick: int = 0
    terminated: Termination | None = None
    in_contact: np.ndarray = field(default=None)
    rules: RuleTracker = field(default=None)
    _last_obs: np.ndarray = field(default=None)

    @property
    def vx_kmh(self) -> np.ndarray:
        return self.speed * 3.6

    @property
    def trackpos(self) -> np.ndarray:
        return self.lateral / self.track.half_width


def clamp_actions(actions: np.ndarray) -> np.ndarray:
    """steering -> [-1, 1], acceleration and braking -> [0, 1]."""
    a = np.array(actions, dtype=np.float64)
    a[..., 0] = np.clip(a[..., 0], -1.0, 1.0)
    a[..., 1] = np.clip(a[..., 1], 0.0, 1.0)
    a[..., 2] = np.clip(a[..., 2], 0.0, 1.0)
    return a


def reset(track: TrackSpec, n_agents: int, spacing: float, seed,
          params: SimParams | None = None, obs_dim: int = 65) -> SimState:
    """Place cars on the centerline at equal arc spacing, at rest."""
    params = params or SimParams()
    if n_agents < 1:
        raise ValueError("need at least one agent")
    if spacing * n_agents > track.lap_length:
        raise ValueError("spacing * n_agents exceeds lap length")
    layout = obs_layout(n_agents, params.n_sensors)
    if obs_dim < layout["min_dim"]:
        raise ValueError(f"obs_dim {obs_dim} < minimum {layout['min_dim']}")
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0.0, track.lap_length)
    arcs = (offset + spacing * np.arange(n_agents)) % track.lap_length
    pos = np.empty((n_agents, 2))
    heading = np.empty(n_agents)
    for i, s in enumerate(arcs):
        x, y, h = track.pose_at(s)
        pos[i] = (x, y)
        heading[i] = h
    state = SimState(
        track=track, params=params, n_agents=n_agents, obs_dim=obs_dim,
        pos=pos, heading=heading, speed=np.zeros(n_agents),
        arc=arcs.astype(np.float64), lateral=np.zeros(n_agents),
        alpha=np.zeros(n_agents), progress=np.zeros(n_agents),
        in_contact=np.zeros((n_agents, n_agents), dtype=bool),
        rules=RuleTracker(n_agents, params, track.lap_length),
    )
    state._last_obs = observe(state)
    return state


def observe(state: SimState) -> np.ndarray:
    """Build the (M, D) observation matrix for the current state."""
    p = state.params
    M, D = state.n_agents, state.obs_dim
    K = p.n_sensors
    obs = np.zeros((M, D))
    ray_offsets = np.linspace(-np.pi / 2, np.pi / 2, K)
    for i in range(M):
        obs[i, 0] = state.speed[i] * 3.6
        obs[i, 1] = state.alpha[i]
        obs[i, 2] = state.lateral[i] / state.track.half_width
        angles = state.heading[i] + ray_offsets
        obs[i, 3:3 + K] = state.track.ray_distances(
            state.pos[i, 0], state.pos[i, 1], angles, p.sensor_range, p.sensor_step)
        others = [j for j in range(M) if j != i]
        if others:
            d = np.hypot(state.pos[others, 0] - state.pos[i, 0],
                         state.pos[others, 1] - state.pos[i, 1])
            obs[i, 3 + K:3 + K + M - 1] = np.minimum(d, p.opponent_range)
    return obs


def step(state: SimState, joint_action) -> StepOutcome:
    """Advance one tick.  Terminated rounds are inert and re-report termination."""
    actions = np.asarray(joint_action, dtype=np.float64)
    if actions.shape != (state.n_agents, 3):
        raise ValueError(f"joint action must be ({state.n_agents}, 3), "
                         f"got {actions.shape}")
    if state.terminated is not None:
        return StepOutcome(state._last_obs.copy(), np.zeros(state.n_agents),
                           [], state.terminated)
    a = clamp_actions(actions)
    p = state.params
    # kinematics
    accel = p.c_acc * a[:, 1] - p.c_brake * a[:, 2] - p.c_drag * state.speed
    state.speed = np.maximum(state.speed + p.dt * accel, 0.0)
    state.heading = np.asarray(
        wrap_angle(state.heading - p.dt * p.c_steer * a[:, 0] * state.speed))
    state.pos[:, 0] += p.dt * state.speed * np.cos(state.heading)
    state.pos[:, 1] += p.dt * state.speed * np.sin(state.heading)
    # localization against the centerline
    raw_arc, lat = state.track.project(state.pos[:, 0], state.pos[:, 1])
    L = state.track.lap_length
    delta = (raw_arc - state.arc + L / 2) % L - L / 2
    state.arc = (state.arc + delta) % L
    state.progress = state.progress + delta
    state.lateral = lat
    track_dir = np.array([state.track.direction_at(s) for s in state.arc])
    state.alpha = np.asarray(wrap_angle(state.heading - track_dir))
    state.tick += 1
    # outputs, in order: observations, rewards, collisions, rules
    obs = observe(state)
    state._last_obs = obs
    rewards = g_reward(state.vx_kmh, state.alpha, state.trackpos)
    collisions = detect_collisions(state)
    verdict = state.rules.observe(state.vx_kmh, state.alpha,
                                  state.trackpos, state.progress)
    if verdict is not None:
        state.terminated = verdict
    return StepOutcome(obs, rewards, collisions, state.terminated)


def detect_collisions(state: SimState) -> list:
    """Edge-triggered contact events: a pair counts once per contact episode."""
    M = state.n_agents
    thresh = 2.0 * state.params.collision_radius
    events = []
    for i in range(M):
        for j in range(i + 1, M):
            d = float(np.hypot(state.pos[i, 0] - state.pos[j, 0],
                               state.pos[i, 1] - state.pos[j, 1]))
            touching = d < thresh
            if touching and not state.in_contact[i, j]:
                events.append((i, j))
            state.in_contact[i, j] = state.in_contact[j, i] = touching
    return events


def write_trace_csv(path, rows: list[dict]) -> None:
    """Rollout trace export; rows as produced by rollout loops."""
    if not rows:
        with open(path, "w", newline="") as f:
            f.write("")
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
