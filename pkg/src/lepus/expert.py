"""PID-controlled joint expert and its trajectory dataset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sim
from .artifact_io import digest_of, load_artifact, save_artifact, ArtifactError
from .seeding import as_seed_sequence
from .sim import SimParams
from .track import TrackSpec

TARGET_SPEED_KMH = 50.0


@dataclass
class Pid:
    kp: float
    ki: float
    kd: float
    integral_limit: float = float("inf")   # anti-windup clamp on the accumulator
    integral: float = 0.0
    prev_error: float | None = None

    def reset(self):
        self.integral = 0.0
        self.prev_error = None


def pid_update(state: Pid, error: float, dt: float) -> float:
    """Rectangle-rule integral, backward-difference derivative."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(error):
        raise ValueError("non-finite PID error")
    state.integral += error * dt
    lim = state.integral_limit
    if state.integral > lim:
        state.integral = lim
    elif state.integral < -lim:
        state.integral = -lim
    deriv = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    state.prev_error = error
    return state.kp * error + state.ki * state.integral + state.kd * deriv


@dataclass
class ExpertGains:
    speed_kp: float = 0.15
    speed_ki: float = 0.02
    speed_kd: float = 0.0
    speed_integral_limit: float = 40.0
    angle_kp: float = 2.5
    angle_ki: float = 0.0
    angle_kd: float = 0.05

    def make_pids(self) -> tuple[Pid, Pid]:
        v_pid = Pid(self.speed_kp, self.speed_ki, self.speed_kd,
                    integral_limit=self.speed_integral_limit)
        a_pid = Pid(self.angle_kp, self.angle_ki, self.angle_kd)
        return v_pid, a_pid


def expert_action(obs_row: np.ndarray, v_pid: Pid, a_pid: Pid, dt: float) -> np.ndarray:
    """[steering, acceleration, braking] from one agent's observation.

    Speed error is 50 - V_x; angle error is -trackPos/10 + alpha.  Braking
    snaps to 1 whenever the raw acceleration command goes negative.
    """
    vx, alpha, trackpos = obs_row[0], obs_row[1], obs_row[2]
    v_err = TARGET_SPEED_KMH - vx
    a_err = -trackpos / 10.0 + alpha
    accel_raw = pid_update(v_pid, v_err, dt)
    steer = float(np.clip(pid_update(a_pid, a_err, dt), -1.0, 1.0))
    if accel_raw < 0.0:
        return np.array([steer, 0.0, 1.0])
    return np.array([steer, float(np.clip(accel_raw, 0.0, 1.0)), 0.0])


@dataclass
class JointTrajectoryDataset:
    states: np.ndarray              # (T_total, M, D)
    actions: np.ndarray             # (T_total, M, 3)
    round_lengths: np.ndarray       # ticks per kept round
    meta: dict = field(default_factory=dict)

    @property
    def n_rounds(self) -> int:
        return len(self.round_lengths)

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]

    @property
    def obs_dim(self) -> int:
        return self.states.shape[2]

    def joint_pairs(self):
        """Flattened joint (S, A): (T, M*D) and (T, M*3)."""
        T = self.states.shape[0]
        return (self.states.reshape(T, -1), self.actions.reshape(T, -1))

    def split_rounds(self, holdout_fraction: float):
        """(train, holdout) datasets split on round boundaries (last rounds held out)."""
        n_hold = max(1, int(round(self.n_rounds * holdout_fraction)))
        n_train = self.n_rounds - n_hold
        if n_train < 1:
            raise ValueError("holdout fraction leaves no training rounds")
        cut = int(self.round_lengths[:n_train].sum())
        train = JointTrajectoryDataset(self.states[:cut], self.actions[:cut],
                                       self.round_lengths[:n_train], dict(self.meta))
        hold = JointTrajectoryDataset(self.states[cut:], self.actions[cut:],
                                      self.round_lengths[n_train:], dict(self.meta))
        return train, hold

    def take_fraction(self, fraction: float) -> "JointTrajectoryDataset":
        """First `fraction` of rounds (used by the expert-amount ablation)."""
        if not (0.0 < fraction <= 1.0):
            raise ValueError("fraction must be in (0, 1]")
        n = max(1, int(round(self.n_rounds * fraction)))
        cut = int(self.round_lengths[:n].sum())
        return JointTrajectoryDataset(self.states[:cut], self.actions[:cut],
                                      self.round_lengths[:n], dict(self.meta))


def run_expert_round(track: TrackSpec, n_agents: int, spacing: float, seed,
                     params: SimParams, gains: ExpertGains, obs_dim: int,
                     max_ticks: int | None = None):
    """One PID-driven round.  Returns (states, actions, collisions, termination)."""
    state = sim.reset(track, n_agents, spacing, seed, params, obs_dim)
    pids = [gains.make_pids() for _ in range(n_agents)]
    obs = state._last_obs
    states_log, actions_log = [], []
    n_collisions = 0
    budget = max_ticks if max_ticks is not None else params.t_max
    outcome = None
    for _ in range(budget):
        actions = np.stack([expert_action(obs[i], *pids[i], params.dt)
                            for i in range(n_agents)])
        states_log.append(obs.copy())
        actions_log.append(actions)
        outcome = sim.step(state, actions)
        obs = outcome.observations
        n_collisions += len(outcome.collisions)
        if outcome.termination is not None:
            break
    termination = outcome.termination if outcome is not None else None
    return (np.stack(states_log), np.stack(actions_log), n_collisions, termination)


def generate_dataset(track: TrackSpec, n_agents: int, n_rounds: int,
                     max_steps_keep: int, seed, params: SimParams | None = None,
                     gains: ExpertGains | None = None, spacing: float = 20.0,
                     obs_dim: int = 65, min_keep_fraction: float = 0.25):
    """Run PID rounds and keep those that lap quickly with zero collisions.

    Returns (dataset, summary).  Raises if fewer than
    min_keep_fraction * n_rounds rounds survive the filter (a gain
    miscalibration signal).
    """
    params = params or SimParams()
    gains = gains or ExpertGains()
    ss = as_seed_sequence(seed)
    round_seeds = ss.spawn(n_rounds) if n_rounds else []
    kept_s, kept_a, kept_len = [], [], []
    total_steps = 0
    n_lapped = 0
    for r in range(n_rounds):
        s, a, ncol, term = run_expert_round(
            track, n_agents, spacing, round_seeds[r], params, gains, obs_dim)
        lapped = term is not None and term.reason == "lap_complete"
        n_lapped += lapped
        if lapped and len(s) < max_steps_keep and ncol == 0:
            kept_s.append(s)
            kept_a.append(a)
            kept_len.append(len(s))
            total_steps += len(s)
    if n_rounds and len(kept_len) < min_keep_fraction * n_rounds:
        raise RuntimeError(
            f"only {len(kept_len)}/{n_rounds} rounds passed the keep filter "
            f"(lap complete in < {max_steps_keep} steps, zero collisions); "
            f"PID gains likely miscalibrated for this track")
    D = obs_dim
    states = (np.concatenate(kept_s) if kept_s
              else np.zeros((0, n_agents, D)))
    actions = (np.concatenate(kept_a) if kept_a
               else np.zeros((0, n_agents, 3)))
    meta = {
        "n_agents": n_agents, "obs_dim": D, "track": track.name,
        "config_digest": digest_of({
            "n_rounds": n_rounds, "max_steps_keep": max_steps_keep,
            "spacing": spacing, "gains": vars(gains), "params": vars(params),
        }),
    }
    dataset = JointTrajectoryDataset(states, actions,
                                     np.asarray(kept_len, dtype=np.int64), meta)
    summary = {
        "rounds_run": n_rounds, "rounds_lapped": int(n_lapped),
        "rounds_kept": int(dataset.n_rounds),
        "mean_lap_steps": float(np.mean(kept_len)) if kept_len else None,
        "total_records": int(total_steps),
    }
    return dataset, summary


def save_dataset(path, dataset: JointTrajectoryDataset) -> None:
    save_artifact(path, "expert_dataset",
                  {"states": dataset.states, "actions": dataset.actions,
                   "round_lengths": dataset.round_lengths},
                  dataset.meta)


def load_dataset(path) -> JointTrajectoryDataset:
    arrays, meta = load_artifact(path, expect_kind="expert_dataset")
    ds = JointTrajectoryDataset(arrays["states"], arrays["actions"],
                                arrays["round_lengths"], meta)
    if ds.states.shape[1] != meta.get("n_agents"):
        raise ArtifactError("dataset metadata n_agents does not match records")
    if ds.states.shape[2] != meta.get("obs_dim"):
        raise ArtifactError("dataset metadata obs_dim does not match records")
    if int(ds.round_lengths.sum()) != ds.states.shape[0]:
        raise ArtifactError("round lengths do not sum to record count")
    return ds
