"""Minimal dense-network core: forward, exact reverse-mode gradients, Adam,
soft target updates, seeded initialization, and checkpointing.

All arithmetic is float64.  Layer architecture is fixed at construction;
only values change afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .artifact_io import ArtifactError, load_artifact, save_artifact

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "identity")
LEAKY_SLOPE = 0.01


class ShapeError(ValueError):
    """Input/parameter dimension mismatch."""


def _act(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "leaky_relu":
        return np.where(z > 0.0, z, LEAKY_SLOPE * z)
    if tag == "tanh":
        return np.tanh(z)
    if tag == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if tag == "identity":
        return z
    raise ValueError(f"unknown activation {tag!r}")


def _act_grad(tag: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation z (a = act(z))."""
    if tag == "relu":
        return (z > 0.0).astype(np.float64)
    if tag == "leaky_relu":
        return np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    if tag == "tanh":
        return 1.0 - a * a
    if tag == "sigmoid":
        return a * (1.0 - a)
    if tag == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {tag!r}")


@dataclass
class Layer:
    w: np.ndarray          # (out, in)
    b: np.ndarray          # (out,)
    activation: str


@dataclass
class Mlp:
    layers: list[Layer]

    def __post_init__(self):
        for k in range(len(self.layers) - 1):
            if self.layers[k].w.shape[0] != self.layers[k + 1].w.shape[1]:
                raise ShapeError(
                    f"layer {k} out dim {self.layers[k].w.shape[0]} != "
                    f"layer {k + 1} in dim {self.layers[k + 1].w.shape[1]}")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {k}: unknown activation {layer.activation!r}")
            if not (np.all(np.isfinite(layer.w)) and np.all(np.isfinite(layer.b))):
                raise ValueError(f"layer {k}: non-finite parameters")

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[0]

    def arch(self) -> dict:
        return {
            "dims": [self.in_dim] + [l.w.shape[0] for l in self.layers],
            "activations": [l.activation for l in self.layers],
        }

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.w.copy(), l.b.copy(), l.activation)
                    for l in self.layers])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.w.ravel(), l.b.ravel()])
                               for l in self.layers])

    def digest(self) -> str:
        from .artifact_io import sha256_hex
        return sha256_hex(self.flat().tobytes())


def init_mlp(dims: list[int], activations: list[str], rng: np.random.Generator) -> Mlp:
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init for weights and biases."""
    if len(activations) != len(dims) - 1:
        raise ShapeError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append(Layer(w, b, act))
    return Mlp(layers)


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass; x may be a single vector (in,) or a batch (B, in)."""
    y, _ = forward_cached(net, x)
    return y


def forward_cached(net: Mlp, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[-1] != net.in_dim:
        raise ShapeError(f"input dim {h.shape[-1]} != net input {net.in_dim}")
    cache = [h]
    pre = []
    for layer in net.layers:
        z = h @ layer.w.T + layer.b
        h = _act(layer.activation, z)
        pre.append(z)
        cache.append(h)
    out = h[0] if single else h
    return out, (cache, pre, single)


def backward(net: Mlp, x: np.ndarray, upstream: np.ndarray):
    """Exact gradients of sum(upstream * net(x)) w.r.t. parameters and input.

    For batched input, parameter gradients are summed over the batch and
    grad_x has the batch shape.  Returns (grads, grad_x) where grads is a
    list of (dw, db) matching the layer list.
    """
    _, ctx = forward_cached(net, x)
    return backward_from_cache(net, ctx, upstream)


def backward_from_cache(net: Mlp, ctx, upstream: np.ndarray):
    cache, pre, single = ctx
    upstream = np.asarray(upstream, dtype=np.float64)
    if not np.all(np.isfinite(upstream)):
        raise ValueError("non-finite upstream gradient")
    g = upstream[None, :] if single else upstream
    if g.shape != cache[-1].shape:
        raise ShapeError(f"upstream shape {g.shape} != output shape {cache[-1].shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        gz = g * _act_grad(layer.activation, pre[k], cache[k + 1])
        grads[k] = (gz.T @ cache[k], gz.sum(axis=0))
        g = gz @ layer.w
    grad_x = g[0] if single else g
    return grads, grad_x


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(net: Mlp, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    st = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for layer in net.layers:
        st.m.append((np.zeros_like(layer.w), np.zeros_like(layer.b)))
        st.v.append((np.zeros_like(layer.w), np.zeros_like(layer.b)))
    return st


def adam_step(st: AdamState, net: Mlp, grads) -> None:
    """One Adam update in place.  Rejects non-finite gradients untouched."""
    if len(grads) != len(net.layers):
        raise ShapeError("gradient list length mismatch")
    for (dw, db), layer in zip(grads, net.layers):
        if dw.shape != layer.w.shape or db.shape != layer.b.shape:
            raise ShapeError("gradient shape mismatch")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise ValueError("non-finite gradients; state unchanged")
    st.t += 1
    b1t = 1.0 - st.beta1 ** st.t
    b2t = 1.0 - st.beta2 ** st.t
    for k, (dw, db) in enumerate(grads):
        mw, mb = st.m[k]
        vw, vb = st.v[k]
        mw *= st.beta1
        mw += (1.0 - st.beta1) * dw
        mb *= st.beta1
        mb += (1.0 - st.beta1) * db
        vw *= st.beta2
        vw += (1.0 - st.beta2) * dw * dw
        vb *= st.beta2
        vb += (1.0 - st.beta2) * db * db
        layer = net.layers[k]
        layer.w -= st.lr * (mw / b1t) / (np.sqrt(vw / b2t) + st.eps)
        layer.b -= st.lr * (mb / b1t) / (np.sqrt(vb / b2t) + st.eps)


def soft_update(target: Mlp, source: Mlp, ell: float) -> Mlp:
    """target <- ell * source + (1 - ell) * target, in place.

    ell must lie in (0, 1]; ell = 1 is a hard copy.
    """
    if not (0.0 < ell <= 1.0):
        raise ValueError(f"soft-update proportion must be in (0, 1], got {ell}")
    if target.arch() != source.arch():
        raise ShapeError("architecture mismatch between target and source")
    for tl, sl in zip(target.layers, source.layers):
        tl.w *= 1.0 - ell
        tl.w += ell * sl.w
        tl.b *= 1.0 - ell
        tl.b += ell * sl.b
    return target


def save_net(path, net: Mlp, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m["arch"] = net.arch()
    save_artifact(path, "mlp", {"params": net.flat()}, m)


def load_net(path, expect_arch: dict | None = None) -> tuple[Mlp, dict]:
    arrays, meta = load_artifact(path, expect_kind="mlp")
    arch = meta["arch"]
    if expect_arch is not None and arch != expect_arch:
        raise ArtifactError(f"architecture mismatch: file has {arch}, "
                            f"expected {expect_arch}")
    dims, acts = arch["dims"], arch["activations"]
    flat = arrays["params"]
    layers = []
    pos = 0
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], acts):
        n = fan_out * fan_in
        w = flat[pos:pos + n].reshape(fan_out, fan_in).copy()
        pos += n
        b = flat[pos:pos + fan_out].copy()
        pos += fan_out
        layers.append(Layer(w, b, act))
    if pos != flat.size:
        raise ArtifactError("parameter count does not match architecture")
    return Mlp(layers), meta
