"""Shared-parameter actor-critic joint training.

One policy network serves every agent; one centralized Q network scores the
joint state-action pair and is trained against the team reward (mean of the
per-agent combined rewards).  Target copies of both are soft-updated.
Exploration uses Ornstein-Uhlenbeck noise on the squashed actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sim as simulator
from .artifact_io import load_artifact, save_artifact
from .nets import (AdamState, Mlp, adam_init, backward_from_cache, forward,
                   forward_cached, init_mlp, soft_update)
from .nets import adam_step as _adam_step
from .policy import obs_scale, policy_actions, policy_actions_cached, squash_grad
from .pretrain import build_policy
from .rnd import RndModel, rd_joint_reward
from .sim import SimParams
from .seeding import as_seed_sequence
from .track import TrackSpec


@dataclass
class OuNoise:
    """Per-agent, per-action-dim OU process state."""
    x: np.ndarray                   # (M, 3)
    theta: float = 0.15
    sigma: float = 0.2
    mu: float = 0.0

    @classmethod
    def zeros(cls, n_agents: int, theta=0.15, sigma=0.2, mu=0.0) -> "OuNoise":
        return cls(np.zeros((n_agents, 3)), theta, sigma, mu)

    def reset(self):
        self.x[:] = 0.0


def ou_step(noise: OuNoise, dt: float, rng: np.random.Generator) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    eps = rng.standard_normal(noise.x.shape)
    noise.x = (noise.x + noise.theta * (noise.mu - noise.x) * dt
               + noise.sigma * np.sqrt(dt) * eps)
    return noise.x


class ReplayBuffer:
    """Fixed-capacity ring of joint transitions with uniform sampling."""

    def __init__(self, capacity: int, n_agents: int, obs_dim: int):
        self.capacity = capacity
        self.S = np.zeros((capacity, n_agents, obs_dim))
        self.A = np.zeros((capacity, n_agents, 3))
        self.R = np.zeros((capacity, n_agents))
        self.S2 = np.zeros((capacity, n_agents, obs_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, S, A, R, S2, done: bool):
        if not np.all(np.isfinite(R)):
            raise ValueError("non-finite rewards")
        i = self._next
        self.S[i], self.A[i], self.R[i], self.S2[i] = S, A, R, S2
        self.done[i] = done
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int):
        idx = rng.choice(self._size, size=min(n, self._size), replace=False)
        return {"S": self.S[idx], "A": self.A[idx], "R": self.R[idx],
                "S2": self.S2[idx], "done": self.done[idx]}


@dataclass
class AgentEnsemble:
    policy: Mlp
    q_net: Mlp
    target_policy: Mlp
    target_q: Mlp
    policy_opt: AdamState
    q_opt: AdamState
    gamma: float
    ell: float
    n_agents: int
    obs_dim: int
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.scale is None:
            self.scale = obs_scale(self.obs_dim, self.n_agents)


def build_ensemble(n_agents: int, obs_dim: int, seed=0, policy_lr: float = 1e-4,
                   q_lr: float = 1e-3, gamma: float = 0.99, ell: float = 1e-3,
                   policy_init: Mlp | None = None) -> AgentEnsemble:
    ss = as_seed_sequence(seed)
    s_pol, s_q = ss.spawn(2)
    policy = policy_init.copy() if policy_init is not None else build_policy(obs_dim, s_pol)
    if policy.in_dim != obs_dim:
        raise ValueError("policy input dim does not match obs_dim")
    in_dim = n_agents * (obs_dim + 3)
    q_net = init_mlp([in_dim, 300, 600, 1], ["relu", "relu", "identity"],
                     np.random.default_rng(s_q))
    ens = AgentEnsemble(
        policy=policy, q_net=q_net,
        target_policy=policy.copy(), target_q=q_net.copy(),
        policy_opt=adam_init(policy, policy_lr), q_opt=adam_init(q_net, q_lr),
        gamma=gamma, ell=ell, n_agents=n_agents, obs_dim=obs_dim)
    return ens


def _joint_q_input(ens: AgentEnsemble, S: np.ndarray, A: np.ndarray) -> np.ndarray:
    Ss = S / ens.scale
    return np.concatenate([np.concatenate([Ss[:, i], A[:, i]], axis=1)
                           for i in range(ens.n_agents)], axis=1)


def select_actions(ens: AgentEnsemble, observations: np.ndarray,
                   noise: OuNoise | None = None, explore: bool = False,
                   rng: np.random.Generator | None = None, dt: float = 0.1):
    """Squashed shared-policy actions, with OU noise when exploring."""
    observations = np.asarray(observations, dtype=np.float64)
    if observations.shape != (ens.n_agents, ens.obs_dim):
        raise ValueError(f"observations must be ({ens.n_agents}, {ens.obs_dim})")
    actions, _ = policy_actions(ens.policy, observations, ens.scale)
    if explore:
        if noise is None or rng is None:
            raise ValueError("exploration needs noise state and rng")
        actions = actions + ou_step(noise, dt, rng)
    return simulator.clamp_actions(actions)


def critic_update(ens: AgentEnsemble, batch) -> float:
    """One Adam step on the mean squared Bellman error.  Returns the loss."""
    S, A, R, S2, done = (batch["S"], batch["A"], batch["R"], batch["S2"],
                         batch["done"])
    if len(S) == 0:
        raise ValueError("empty batch")
    a2, _ = policy_actions(ens.target_policy, S2, ens.scale)
    q2 = forward(ens.target_q, _joint_q_input(ens, S2, a2))[:, 0]
    team_r = R.mean(axis=1)
    y = team_r + ens.gamma * q2 * (~done)
    if not np.all(np.isfinite(y)):
        raise ValueError(f"non-finite critic targets (q2 range "
                         f"[{q2.min()}, {q2.max()}])")
    q, ctx = forward_cached(ens.q_net, _joint_q_input(ens, S, A))
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    upstream = (2.0 * err / len(err))[:, None]
    grads, _ = backward_from_cache(ens.q_net, ctx, upstream)
    _adam_step(ens.q_opt, ens.q_net, grads)
    return loss


def actor_update(ens: AgentEnsemble, batch) -> float:
    """One ascent step on mean Q with the batch actions replaced by the
    shared policy's.  Q parameters are untouched.  Returns the objective."""
    S = batch["S"]
    if len(S) == 0:
        raise ValueError("empty batch")
    B = len(S)
    actions, raw, pctx = policy_actions_cached(ens.policy, S, ens.scale)
    x = _joint_q_input(ens, S, actions)
    q, qctx = forward_cached(ens.q_net, x)
    objective = float(np.mean(q[:, 0]))
    upstream = np.full((B, 1), 1.0 / B)
    _, grad_x = backward_from_cache(ens.q_net, qctx, upstream)
    D = ens.obs_dim
    grad_a = np.empty((B, ens.n_agents, 3))
    for i in range(ens.n_agents):
        base = i * (D + 3) + D
        grad_a[:, i] = grad_x[:, base:base + 3]
    grad_raw = (grad_a * squash_grad(raw)).reshape(B * ens.n_agents, 3)
    grads, _ = backward_from_cache(ens.policy, pctx, grad_raw)
    # ascend: Adam minimizes, so feed the negated gradient
    neg = [(-gw, -gb) for gw, gb in grads]
    _adam_step(ens.policy_opt, ens.policy, neg)
    return objective


def target_sync(ens: AgentEnsemble) -> None:
    soft_update(ens.target_policy, ens.policy, ens.ell)
    soft_update(ens.target_q, ens.q_net, ens.ell)


@dataclass
class TrainSettings:
    episodes: int = 20
    spacing: float = 20.0
    buffer_capacity: int = 100_000
    warmup: int = 1000
    batch: int = 32
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0


def train(track: TrackSpec, rnd_model: RndModel, ens: AgentEnsemble,
          settings: TrainSettings, seed=0, sim_params: SimParams | None = None):
    """Off-policy joint training loop.  Returns per-episode metric dicts."""
    sim_params = sim_params or SimParams()
    M, D = ens.n_agents, ens.obs_dim
    if (rnd_model.n_agents, rnd_model.obs_dim) != (M, D):
        raise ValueError("RND model dimensions do not match ensemble")
    ss = as_seed_sequence(seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    buffer = ReplayBuffer(settings.buffer_capacity, M, D)
    noise = OuNoise.zeros(M, settings.ou_theta, settings.ou_sigma, settings.ou_mu)
    metrics = []
    episode_seeds = ss.spawn(settings.episodes) if settings.episodes else []
    for ep in range(settings.episodes):
        state = simulator.reset(track, M, settings.spacing, episode_seeds[ep],
                                sim_params, D)
        noise.reset()
        obs = state._last_obs
        ep_return = np.zeros(M)
        rd_sum = 0.0
        c_losses, a_objs = [], []
        n_collisions = 0
        steps = 0
        while True:
            actions = select_actions(ens, obs, noise, explore=True, rng=rng,
                                     dt=sim_params.dt)
            out = simulator.step(state, actions)
            rd = rd_joint_reward(rnd_model, obs, actions)
            rewards = out.g_rewards * rd
            done = out.termination is not None
            buffer.push(obs, actions, rewards, out.observations, done)
            obs = out.observations
            ep_return += rewards
            rd_sum += rd
            n_collisions += 2 * len(out.collisions)
            steps += 1
            if len(buffer) >= settings.warmup:
                batch = buffer.sample(rng, settings.batch)
                c_losses.append(critic_update(ens, batch))
                a_objs.append(actor_update(ens, batch))
                target_sync(ens)
            if done:
                break
        metrics.append({
            "episode": ep,
            "steps": steps,
            "termination": out.termination.reason,
            "mean_distance": float(np.mean(state.progress)),
            "collisions": int(n_collisions),
            "mean_rd": rd_sum / steps,
            "mean_reward": float(ep_return.mean() / steps),
            "critic_loss": float(np.mean(c_losses)) if c_losses else None,
            "actor_objective": float(np.mean(a_objs)) if a_objs else None,
        })
    return metrics


def save_ensemble(path, ens: AgentEnsemble, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m.update({
        "n_agents": ens.n_agents, "obs_dim": ens.obs_dim,
        "gamma": ens.gamma, "ell": ens.ell,
        "policy_arch": ens.policy.arch(), "q_arch": ens.q_net.arch(),
        "policy_lr": ens.policy_opt.lr, "q_lr": ens.q_opt.lr,
    })
    save_artifact(path, "ensemble", {
        "policy": ens.policy.flat(), "q_net": ens.q_net.flat(),
        "target_policy": ens.target_policy.flat(),
        "target_q": ens.target_q.flat(), "scale": ens.scale,
    }, m)


def load_ensemble(path) -> AgentEnsemble:
    from .rnd import _unflatten
    arrays, meta = load_artifact(path, expect_kind="ensemble")
    policy = _unflatten(meta["policy_arch"], arrays["policy"])
    q_net = _unflatten(meta["q_arch"], arrays["q_net"])
    ens = AgentEnsemble(
        policy=policy, q_net=q_net,
        target_policy=_unflatten(meta["policy_arch"], arrays["target_policy"]),
        target_q=_unflatten(meta["q_arch"], arrays["target_q"]),
        policy_opt=adam_init(policy, meta["policy_lr"]),
        q_opt=adam_init(q_net, meta["q_lr"]),
        gamma=float(meta["gamma"]), ell=float(meta["ell"]),
        n_agents=int(meta["n_agents"]), obs_dim=int(meta["obs_dim"]),
        scale=arrays["scale"])
    return ens
