"""Adversarial pre-training: joint discriminator vs the shared policy.

The discriminator is one network scored twice, on expert joint pairs and on
pairs whose actions come from the policy at expert states.  It ascends
E[log Dis(S, A)] + E[log(1 - Dis(S', A_p))]; the policy descends
-mean Dis(S', A_p), with gradients chained through the discriminator input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets
from .artifact_io import load_artifact, save_artifact
from .expert import JointTrajectoryDataset
from .nets import (AdamState, Mlp, adam_init, adam_step, backward_from_cache,
                   forward_cached, init_mlp)
from .policy import obs_scale, policy_actions_cached, squash_grad
from .seeding import as_seed_sequence

LOGIT_CLAMP = 40.0


def build_policy(obs_dim: int, seed=0) -> Mlp:
    rng = np.random.default_rng(as_seed_sequence(seed))
    return init_mlp([obs_dim, 300, 400, 3], ["relu", "relu", "identity"], rng)


@dataclass
class Discriminator:
    net: Mlp
    n_agents: int
    obs_dim: int
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.scale is None:
            self.scale = obs_scale(self.obs_dim, self.n_agents)


def build_discriminator(n_agents: int, obs_dim: int, seed=0,
                        hidden=(300, 600), activation="tanh") -> Discriminator:
    """Default: two tanh hidden layers (300, 600).  The ablation's variant B
    uses hidden=(128, 64, 32) with leaky_relu."""
    in_dim = n_agents * (obs_dim + 3)
    rng = np.random.default_rng(as_seed_sequence(seed))
    dims = [in_dim, *hidden, 1]
    acts = [activation] * len(hidden) + ["identity"]
    return Discriminator(init_mlp(dims, acts, rng), n_agents, obs_dim)


def _joint_input(dis: Discriminator, S: np.ndarray, A: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if S.ndim == 2:
        S = S[None]
    if A.ndim == 2:
        A = A[None]
    if S.shape[1:] != (dis.n_agents, dis.obs_dim) or A.shape[1:] != (dis.n_agents, 3):
        raise nets.ShapeError("joint pair shapes do not match discriminator")
    Ss = S / dis.scale
    return np.concatenate([np.concatenate([Ss[:, i], A[:, i]], axis=1)
                           for i in range(dis.n_agents)], axis=1)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _logits(dis: Discriminator, x: np.ndarray):
    out, ctx = forward_cached(dis.net, x)
    z = np.clip(out[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)
    return z, ctx


def discriminator_score(dis: Discriminator, S, A):
    """Sigmoid-squashed scalar in (0, 1); batched if S is (B, M, D)."""
    single = np.asarray(S).ndim == 2
    x = _joint_input(dis, S, A)
    z, _ = _logits(dis, x)
    p = _sigmoid(z)
    return float(p[0]) if single else p


def discriminator_update(dis: Discriminator, opt: AdamState,
                         expert_S, expert_A, policy_S, policy_A) -> float:
    """One Adam ascent step on the separation objective.

    Returns the objective estimate before the step.
    """
    if np.size(expert_S) == 0 or np.size(policy_S) == 0:
        raise ValueError("both batches must be nonempty")
    xe = _joint_input(dis, expert_S, expert_A)
    xp = _joint_input(dis, policy_S, policy_A)
    ze, ctx_e = _logits(dis, xe)
    zp, ctx_p = _logits(dis, xp)
    # log sigma(z) = -log(1 + exp(-z)); clamped logits keep this finite
    obj = float(np.mean(-np.log1p(np.exp(-ze))) + np.mean(-np.log1p(np.exp(zp))))
    # ascend: d obj / d z_e = (1 - sigma) / B ; d obj / d z_p = -sigma / B
    up_e = -((1.0 - _sigmoid(ze)) / len(ze))[:, None]
    up_p = (_sigmoid(zp) / len(zp))[:, None]
    ge, _ = backward_from_cache(dis.net, ctx_e, up_e)
    gp, _ = backward_from_cache(dis.net, ctx_p, up_p)
    grads = [(gw1 + gw2, gb1 + gb2) for (gw1, gb1), (gw2, gb2) in zip(ge, gp)]
    adam_step(opt, dis.net, grads)
    return obj


def policy_pretrain_update(policy: Mlp, opt: AdamState, dis: Discriminator,
                           states: np.ndarray) -> float:
    """One Adam descent step on -mean Dis(S', policy(S')).

    Gradients flow through the discriminator into the policy; discriminator
    parameters are untouched.  Returns the loss before the step.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 3 or states.shape[0] == 0:
        raise ValueError("states must be a nonempty (B, M, D) batch")
    if states.shape[1:] != (dis.n_agents, dis.obs_dim):
        raise nets.ShapeError("state batch does not match discriminator dims")
    B, M, D = states.shape
    actions, raw, pctx = policy_actions_cached(policy, states, dis.scale)
    x = _joint_input(dis, states, actions)
    z, dctx = _logits(dis, x)
    scores = _sigmoid(z)
    loss = float(-np.mean(scores))
    # descend loss: d loss / d z = -sigma'(z) / B
    up = (-(scores * (1.0 - scores)) / B)[:, None]
    _, grad_x = backward_from_cache(dis.net, dctx, up)
    # pull the action slice of the input gradient per agent
    grad_a = np.empty((B, M, 3))
    for i in range(M):
        base = i * (D + 3) + D
        grad_a[:, i] = grad_x[:, base:base + 3]
    grad_raw = (grad_a * squash_grad(raw)).reshape(B * M, 3)
    grads, _ = backward_from_cache(policy, pctx, grad_raw)
    adam_step(opt, policy, grads)
    return loss


def adversarial_pretrain(policy: Mlp, dis: Discriminator,
                         dataset: JointTrajectoryDataset, dis_iter: int,
                         batch: int = 256, dis_lr: float = 1e-4,
                         policy_lr: float = 1e-4, seed=0):
    """Alternate one discriminator and one policy update per iteration.

    Returns a curve: list of (discriminator objective, policy loss) per
    iteration, both measured before their respective steps.
    """
    if dataset.states.shape[0] == 0:
        raise ValueError("empty expert dataset")
    if (dataset.n_agents, dataset.obs_dim) != (dis.n_agents, dis.obs_dim):
        raise nets.ShapeError("dataset dimensions do not match discriminator")
    rng = np.random.default_rng(as_seed_sequence(seed))
    dis_opt = adam_init(dis.net, dis_lr)
    pol_opt = adam_init(policy, policy_lr)
    n = dataset.states.shape[0]
    b = min(batch, n)
    curve = []
    for _ in range(dis_iter):
        idx_e = rng.choice(n, size=b, replace=False)
        idx_s = rng.choice(n, size=b, replace=False)
        sp = dataset.states[idx_s]
        a_p, _ = _policy_batch_actions(policy, sp, dis.scale)
        obj = discriminator_update(dis, dis_opt,
                                   dataset.states[idx_e], dataset.actions[idx_e],
                                   sp, a_p)
        loss = policy_pretrain_update(policy, pol_opt, dis, sp)
        curve.append((obj, loss))
    return curve


def _policy_batch_actions(policy: Mlp, states: np.ndarray, scale: np.ndarray):
    from .policy import policy_actions
    return policy_actions(policy, states, scale)


def save_discriminator(path, dis: Discriminator, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m.update({"arch": dis.net.arch(), "n_agents": dis.n_agents,
              "obs_dim": dis.obs_dim})
    save_artifact(path, "discriminator",
                  {"params": dis.net.flat(), "scale": dis.scale}, m)


def load_discriminator(path) -> Discriminator:
    from .rnd import _unflatten
    arrays, meta = load_artifact(path, expect_kind="discriminator")
    return Discriminator(_unflatten(meta["arch"], arrays["params"]),
                         int(meta["n_agents"]), int(meta["obs_dim"]),
                         scale=arrays["scale"])
