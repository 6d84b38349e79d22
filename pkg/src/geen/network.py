"""The generator network: a small fully connected map from k measurements
to one latent scalar per point, with exact reverse-mode gradients and an
adaptive moment optimizer.

Parameters are immutable per step; forward/backward are pure, so gradient
accumulation over observations stays deterministic when done in a fixed
order. Hidden layers use a smooth saturating nonlinearity by default
(hyperbolic tangent) so the kernel-density loss stays differentiable; the
output layer is always linear to keep the latent range unbounded.

Inputs can optionally be standardized by a location/scale stored with the
parameters; the affine transform is part of the model, applied identically
at training and evaluation time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import check_seed

MODEL_FORMAT = "geen-model v1"

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class MlpParams:
    """Per-layer weight matrices (fan_in x fan_out) and bias vectors."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "tanh"
    input_loc: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if len(weights) != len(biases) or not weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight/bias shape mismatch")
            if i > 0 and w.shape[0] != weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input dim does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameter")
        if weights[-1].shape[1] != 1:
            raise ValueError("output dimension must be 1")
        for arr in (*weights, *biases):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        for name in ("input_loc", "input_scale"):
            val = getattr(self, name)
            if val is not None:
                val = np.array(val, dtype=np.float64)
                if val.shape != (weights[0].shape[0],):
                    raise ValueError(f"{name} must have length {weights[0].shape[0]}")
                val.flags.writeable = False
                object.__setattr__(self, name, val)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def k(self) -> int:
        return self.weights[0].shape[0]


@dataclass(frozen=True)
class ParamGrads:
    """Gradients with the same shapes as the parameters."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class OptState:
    """Adaptive-moment optimizer state (bias-corrected first/second moments)."""

    step: int
    m_weights: tuple[np.ndarray, ...]
    v_weights: tuple[np.ndarray, ...]
    m_biases: tuple[np.ndarray, ...]
    v_biases: tuple[np.ndarray, ...]
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_mlp(
    k: int,
    hidden: int,
    depth: int,
    seed: int | np.random.SeedSequence,
    activation: str = "tanh",
) -> MlpParams:
    """Fresh parameters for a depth-layer network (depth weight layers).

    dims = [k, hidden, ..., hidden, 1] with depth - 1 hidden layers. Weights
    are symmetric uniform on +-1/sqrt(fan_in); biases start at zero. The
    draw is deterministic in the seed.
    """
    if k < 1 or hidden < 1 or depth < 2:
        raise ValueError("need k >= 1, hidden >= 1, depth >= 2")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(check_seed(seed))
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = [k] + [hidden] * (depth - 1) + [1]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpParams(weights=tuple(weights), biases=tuple(biases), activation=activation)


def with_standardization(params: MlpParams, features: np.ndarray) -> MlpParams:
    """Attach input location/scale estimated from a feature matrix."""
    loc = features.mean(axis=0)
    scale = features.std(axis=0, ddof=1)
    scale = np.where(scale == 0.0, 1.0, scale)
    return replace(params, input_loc=loc, input_scale=scale)


def _standardize(params: MlpParams, points: np.ndarray) -> np.ndarray:
    if params.input_loc is None:
        return points
    return (points - params.input_loc) / params.input_scale


def _forward_cached(params: MlpParams, points: np.ndarray):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != params.k:
        raise ValueError(f"points must be (m, {params.k}), got {np.shape(points)}")
    z = _standardize(params, pts)
    layers = [z]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = z @ w + b
        if i < last and params.activation == "tanh":
            z = np.tanh(z)
        layers.append(z)
    return layers


def forward(params: MlpParams, points: np.ndarray) -> np.ndarray:
    """Row-wise latents for an (m, k) matrix of measurements."""
    return _forward_cached(params, points)[-1][:, 0]


def backward(params: MlpParams, points: np.ndarray, upstream: np.ndarray) -> ParamGrads:
    """Exact gradients of sum_i upstream_i * forward(params, point_i).

    `upstream` is d loss / d latent per point, as produced by the loss
    module; the result composes the chain rule through the network.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    layers = _forward_cached(params, points)
    if upstream.shape != (layers[0].shape[0],):
        raise ValueError("upstream must have one entry per point")
    n_layers = len(params.weights)
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    delta = upstream[:, None]
    for i in range(n_layers - 1, -1, -1):
        d_weights[i] = layers[i].T @ delta
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i].T
            if params.activation == "tanh":
                delta = delta * (1.0 - np.square(layers[i]))
    return ParamGrads(weights=tuple(d_weights), biases=tuple(d_biases))


def init_opt_state(
    params: MlpParams,
    step_size: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptState:
    zeros_like = lambda arrs: tuple(np.zeros_like(a) for a in arrs)
    return OptState(
        step=0,
        m_weights=zeros_like(params.weights),
        v_weights=zeros_like(params.weights),
        m_biases=zeros_like(params.biases),
        v_biases=zeros_like(params.biases),
        step_size=step_size,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def opt_step(params: MlpParams, grads: ParamGrads, state: OptState) -> tuple[MlpParams, OptState]:
    """One bias-corrected adaptive moment update; pure in all arguments."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t

    def update(p, g, m, v):
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * np.square(g)
        p2 = p - state.step_size * (m2 / c1) / (np.sqrt(v2 / c2) + state.eps)
        return p2, m2, v2

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(params.weights, grads.weights, state.m_weights, state.v_weights):
        p2, m2, v2 = update(p, g, m, v)
        new_w.append(p2)
        new_mw.append(m2)
        new_vw.append(v2)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(params.biases, grads.biases, state.m_biases, state.v_biases):
        p2, m2, v2 = update(p, g, m, v)
        new_b.append(p2)
        new_mb.append(m2)
        new_vb.append(v2)
    new_params = replace(params, weights=tuple(new_w), biases=tuple(new_b))
    new_state = replace(
        state,
        step=t,
        m_weights=tuple(new_mw),
        v_weights=tuple(new_vw),
        m_biases=tuple(new_mb),
        v_biases=tuple(new_vb),
    )
    return new_params, new_state


def save_model(
    path: str | Path,
    params: MlpParams,
    *,
    config: dict | None = None,
    seed: int | None = None,
) -> None:
    """Write a model as a JSON document with full-precision decimals.

    Fields: format, layer_dims, activation, weights (row-major per layer),
    biases, input_loc, input_scale, train_config, seed.
    """
    doc = {
        "format": MODEL_FORMAT,
        "layer_dims": params.layer_dims,
        "activation": params.activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "input_loc": None if params.input_loc is None else params.input_loc.tolist(),
        "input_scale": None if params.input_scale is None else params.input_scale.tolist(),
        "train_config": config,
        "seed": seed,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> MlpParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    return MlpParams(
        weights=tuple(np.array(w) for w in doc["weights"]),
        biases=tuple(np.array(b) for b in doc["biases"]),
        activation=doc["activation"],
        input_loc=None if doc["input_loc"] is None else np.array(doc["input_loc"]),
        input_scale=None if doc["input_scale"] is None else np.array(doc["input_scale"]),
    )
