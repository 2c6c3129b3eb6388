"""Joint random-distillation reward.

A frozen random network and a trained distillation network both map the
normalized joint state-action vector to a scalar; their squared disagreement
d^2 is turned into a reward exp(-v * d^2) in (0, 1].  The distillation
network is fit to the random network on expert pairs only, so disagreement
measures how far a pair lies from the expert distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets
from .artifact_io import load_artifact, save_artifact
from .expert import JointTrajectoryDataset
from .nets import Mlp, adam_init, adam_step, backward_from_cache, forward, forward_cached
from .seeding import as_seed_sequence

DEFAULT_V = 250000.0


@dataclass
class RndModel:
    random_net: Mlp          # frozen after construction
    distill_net: Mlp
    v: float
    n_agents: int
    obs_dim: int
    norm_mean: np.ndarray = field(default=None)
    norm_std: np.ndarray = field(default=None)

    @property
    def input_dim(self) -> int:
        return self.n_agents * (self.obs_dim + 3)


def build_rnd(n_agents: int, obs_dim: int, v: float = DEFAULT_V,
              seed=0) -> RndModel:
    if n_agents < 1 or obs_dim < 1:
        raise ValueError("n_agents and obs_dim must be positive")
    if v <= 0:
        raise ValueError("v must be positive")
    in_dim = n_agents * (obs_dim + 3)
    ss = as_seed_sequence(seed)
    rng_random, rng_distill = (np.random.default_rng(s) for s in ss.spawn(2))
    random_net = nets.init_mlp([in_dim, 128, 1], ["leaky_relu", "identity"],
                               rng_random)
    distill_net = nets.init_mlp([in_dim, 128, 128, 128, 128, 1],
                                ["leaky_relu"] * 4 + ["identity"], rng_distill)
    return RndModel(random_net, distill_net, float(v), n_agents, obs_dim)


def _joint_input(model: RndModel, S: np.ndarray, A: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    single = S.ndim <= 2
    if single:
        S, A = S[None], A[None]
    if S.shape[1:] != (model.n_agents, model.obs_dim) or A.shape[1:] != (model.n_agents, 3):
        raise nets.ShapeError(
            f"joint pair shapes {S.shape[1:]}, {A.shape[1:]} do not match "
            f"model ({model.n_agents}, {model.obs_dim})")
    B = S.shape[0]
    # fixed agent-order concatenation [s1, a1, s2, a2, ...]
    x = np.concatenate([np.concatenate([S[:, i], A[:, i]], axis=1)
                        for i in range(model.n_agents)], axis=1)
    return x[0] if single else x


def _normalize(model: RndModel, x: np.ndarray) -> np.ndarray:
    if model.norm_mean is None:
        raise RuntimeError("normalization stats not fitted; "
                           "call fit_normalization or train_distillation first")
    return (x - model.norm_mean) / model.norm_std


def fit_normalization(model: RndModel, dataset: JointTrajectoryDataset) -> None:
    """Per-dimension standardization stats over the expert pairs."""
    x = _joint_input(model, dataset.states, dataset.actions)
    model.norm_mean = x.mean(axis=0)
    model.norm_std = np.maximum(x.std(axis=0), 1e-6)


def disagreement(model: RndModel, S, A) -> np.ndarray:
    """f_distill - f_random on normalized joint inputs."""
    x = _joint_input(model, S, A)
    xn = _normalize(model, np.atleast_2d(x))
    d = forward(model.distill_net, xn)[:, 0] - forward(model.random_net, xn)[:, 0]
    return d


def rd_joint_reward(model: RndModel, S, A):
    """exp(-v * disagreement^2), shared by all agents; scalar for a single pair."""
    d = disagreement(model, S, A)
    r = np.exp(-model.v * d * d)
    return float(r[0]) if np.asarray(S).ndim <= 2 else r


def combined_reward(g_reward_i, rd):
    """Per-agent final reward: the base reward scaled by the shared RND reward."""
    return g_reward_i * rd


def train_distillation(model: RndModel, dataset: JointTrajectoryDataset,
                       iters: int = 200, minibatch: int = 256,
                       lr: float = 1e-3, seed=0) -> list[float]:
    """Fit the distillation net to the frozen random net on expert pairs.

    Returns the per-iteration MSE loss curve (loss measured before each step).
    """
    if dataset.states.shape[0] == 0:
        raise ValueError("empty expert dataset")
    if (dataset.n_agents, dataset.obs_dim) != (model.n_agents, model.obs_dim):
        raise nets.ShapeError("dataset dimensions do not match model")
    if model.norm_mean is None:
        fit_normalization(model, dataset)
    x_all = _normalize(model, _joint_input(
        model, dataset.states, dataset.actions))
    targets = forward(model.random_net, x_all)[:, 0]
    rng = np.random.default_rng(as_seed_sequence(seed))
    opt = adam_init(model.distill_net, lr)
    curve = []
    n = len(x_all)
    for _ in range(iters):
        idx = rng.choice(n, size=min(minibatch, n), replace=False)
        xb, tb = x_all[idx], targets[idx]
        out, ctx = forward_cached(model.distill_net, xb)
        err = out[:, 0] - tb
        loss = float(np.mean(err * err))
        curve.append(loss)
        upstream = (2.0 * err / len(err))[:, None]
        grads, _ = backward_from_cache(model.distill_net, ctx, upstream)
        adam_step(opt, model.distill_net, grads)
    return curve


def calibrate_v(model: RndModel, dataset: JointTrajectoryDataset,
                target_median_reward: float = 0.9) -> float:
    """Rescale v so the median expert-pair reward hits the target.

    Deviation knob for desk-scale runs; the default v stays at the
    configured value unless this is called.
    """
    d = disagreement(model, dataset.states, dataset.actions)
    med = float(np.median(d * d))
    if med <= 0:
        return model.v
    model.v = float(np.log(1.0 / target_median_reward) / med)
    return model.v


def save_rnd(path, model: RndModel, extra_meta: dict | None = None) -> None:
    meta = dict(extra_meta or {})
    meta.update({
        "v": model.v, "n_agents": model.n_agents, "obs_dim": model.obs_dim,
        "random_arch": model.random_net.arch(),
        "distill_arch": model.distill_net.arch(),
    })
    arrays = {
        "random_params": model.random_net.flat(),
        "distill_params": model.distill_net.flat(),
        "norm_mean": model.norm_mean if model.norm_mean is not None else np.zeros(0),
        "norm_std": model.norm_std if model.norm_std is not None else np.zeros(0),
    }
    save_artifact(path, "rnd_model", arrays, meta)


def _unflatten(arch: dict, flat: np.ndarray) -> Mlp:
    dims, acts = arch["dims"], arch["activations"]
    layers, pos = [], 0
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], acts):
        w = flat[pos:pos + fan_out * fan_in].reshape(fan_out, fan_in).copy()
        pos += fan_out * fan_in
        b = flat[pos:pos + fan_out].copy()
        pos += fan_out
        layers.append(nets.Layer(w, b, act))
    return Mlp(layers)


def load_rnd(path) -> RndModel:
    arrays, meta = load_artifact(path, expect_kind="rnd_model")
    model = RndModel(
        random_net=_unflatten(meta["random_arch"], arrays["random_params"]),
        distill_net=_unflatten(meta["distill_arch"], arrays["distill_params"]),
        v=float(meta["v"]), n_agents=int(meta["n_agents"]),
        obs_dim=int(meta["obs_dim"]),
    )
    if arrays["norm_mean"].size:
        model.norm_mean = arrays["norm_mean"]
        model.norm_std = arrays["norm_std"]
    return model
