"""Shared policy helpers: observation scaling and action squashing.

Raw observations carry physical units (km/h, meters); networks see them
divided by fixed per-component scales so initial pre-activations stay O(1).
Raw policy outputs are squashed to action bounds: tanh for steering,
sigmoid for acceleration and braking.
"""

from __future__ import annotations

import numpy as np

from .nets import Mlp, forward, forward_cached


def obs_scale(obs_dim: int, n_agents: int, n_sensors: int = 19,
              sensor_range: float = 100.0, opponent_range: float = 200.0,
              target_speed: float = 50.0) -> np.ndarray:
    scale = np.ones(obs_dim)
    scale[0] = target_speed
    k = 3 + n_sensors
    scale[3:k] = sensor_range
    scale[k:k + n_agents - 1] = opponent_range
    return scale


def squash(raw: np.ndarray) -> np.ndarray:
    out = np.empty_like(raw)
    out[..., 0] = np.tanh(raw[..., 0])
    out[..., 1] = 1.0 / (1.0 + np.exp(-raw[..., 1]))
    out[..., 2] = 1.0 / (1.0 + np.exp(-raw[..., 2]))
    return out


def squash_grad(raw: np.ndarray) -> np.ndarray:
    """Elementwise d squash / d raw."""
    s = squash(raw)
    g = np.empty_like(raw)
    g[..., 0] = 1.0 - s[..., 0] ** 2
    g[..., 1] = s[..., 1] * (1.0 - s[..., 1])
    g[..., 2] = s[..., 2] * (1.0 - s[..., 2])
    return g


def policy_actions(policy: Mlp, obs: np.ndarray, scale: np.ndarray):
    """Squashed actions for (M, D) or (B, M, D) observations via the shared net.

    Returns (actions, raw) with the same leading shape as obs.
    """
    obs = np.asarray(obs, dtype=np.float64)
    lead = obs.shape[:-1]
    flat = (obs / scale).reshape(-1, obs.shape[-1])
    raw = forward(policy, flat).reshape(*lead, 3)
    return squash(raw), raw


def policy_actions_cached(policy: Mlp, obs: np.ndarray, scale: np.ndarray):
    """Like policy_actions but keeps the forward cache for backprop."""
    obs = np.asarray(obs, dtype=np.float64)
    lead = obs.shape[:-1]
    flat = (obs / scale).reshape(-1, obs.shape[-1])
    raw_flat, ctx = forward_cached(policy, flat)
    raw = raw_flat.reshape(*lead, 3)
    return squash(raw), raw, ctx
