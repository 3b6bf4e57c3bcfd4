from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .autodiff import LEAKY_RELU_SLOPE, Tensor
from .errors import ContractError, DomainError

ACTIVATIONS = ("leaky_relu",)


class Linear:
    """y = x @ weight + bias, weight stored as (in, out); weights and bias start U(-1/sqrt(in), 1/sqrt(in))."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        if in_dim < 1 or out_dim < 1:
            raise ContractError(f"layer dims must be >= 1, got {in_dim}x{out_dim}")
        bound = 1.0 / math.sqrt(in_dim)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, size=(1, out_dim)), requires_grad=True)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class MlpNet:
    """Fully connected net; LeakyReLU between layers, linear output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, activation: str = "leaky_relu"):
        if len(sizes) < 2:
            raise ContractError("an MLP needs at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise DomainError(f"unsupported activation: {activation}")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        self.layers = [Linear(a, b, rng) for a, b in zip(self.sizes[:-1], self.sizes[1:])]

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def __call__(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(x))
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ContractError(f"input shape {x.shape} does not match net input dim {self.in_dim}")
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                x = x.leaky_relu(LEAKY_RELU_SLOPE)
        return x

    def parameters(self) -> List[Tensor]:
        out: List[Tensor] = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {}
        for i, layer in enumerate(self.layers):
            state[f"layers.{i}.weight"] = layer.weight.numpy()
            state[f"layers.{i}.bias"] = layer.bias.numpy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            for name, tensor in (("weight", layer.weight), ("bias", layer.bias)):
                key = f"layers.{i}.{name}"
                if key not in state:
                    raise ContractError(f"missing parameter {key}")
                value = np.asarray(state[key], dtype=np.float64)
                if value.shape != tensor.shape:
                    raise ContractError(f"{key}: shape {value.shape} does not match {tensor.shape}")
                tensor.value = value.copy()


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()


@dataclass
class AdamState:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @staticmethod
    def for_params(params: Sequence[Tensor], lr: float = 1e-3, weight_decay: float = 0.0, **kw) -> "AdamState":
        return AdamState(
            lr=lr,
            weight_decay=weight_decay,
            m=[np.zeros_like(p.value) for p in params],
            v=[np.zeros_like(p.value) for p in params],
            **kw,
        )

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "betas": list(self.betas),
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "step": self.step,
            "m": [a.tolist() for a in self.m],
            "v": [a.tolist() for a in self.v],
        }

    @staticmethod
    def from_dict(d: dict) -> "AdamState":
        return AdamState(
            lr=float(d["lr"]),
            betas=tuple(d["betas"]),
            eps=float(d["eps"]),
            weight_decay=float(d["weight_decay"]),
            step=int(d["step"]),
            m=[np.asarray(a, dtype=np.float64) for a in d["m"]],
            v=[np.asarray(a, dtype=np.float64) for a in d["v"]],
        )


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray] | None = None) -> None:
    """One Adam update in place; weight decay is added to the gradient before the moments."""
    if len(state.m) != len(params):
        raise ContractError(f"optimizer tracks {len(state.m)} parameters, got {len(params)}")
    grads = [p.grad for p in params] if grads is None else list(grads)
    state.step += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.value.shape:
            raise ContractError(f"moment shape {m.shape} does not match parameter {p.value.shape}")
        g = np.zeros_like(p.value) if g is None else g
        if state.weight_decay:
            g = g + state.weight_decay * p.value
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def reparam_gaussian(mu: Tensor, log_sigma: Tensor, rng: np.random.Generator, eps: np.ndarray | None = None) -> Tensor:
    """z = mu + sigma * eps, eps ~ N(0, I)."""
    if mu.shape != log_sigma.shape:
        raise ContractError(f"mean {mu.shape} and log-scale {log_sigma.shape} shapes differ")
    eps = rng.standard_normal(mu.shape) if eps is None else np.asarray(eps, dtype=np.float64)
    return mu + log_sigma.exp() * eps


def reparam_t(
    mu: Tensor,
    log_sigma: Tensor,
    nu: float,
    extra_df: float,
    rng: np.random.Generator,
    eps: np.ndarray | None = None,
    delta: np.ndarray | None = None,
) -> Tensor:
    """z = mu + sqrt(nu / delta) * sigma * eps with eps ~ N(0, I), delta ~ chi2(nu + extra_df) per row.

    delta carries no gradient; z then follows t(mu, nu/(nu+extra_df) * sigma^2, nu + extra_df).
    """
    if mu.shape != log_sigma.shape:
        raise ContractError(f"mean {mu.shape} and log-scale {log_sigma.shape} shapes differ")
    if not nu > 2:
        raise DomainError(f"t reparametrisation needs nu > 2, got {nu}")
    eps = rng.standard_normal(mu.shape) if eps is None else np.asarray(eps, dtype=np.float64)
    if delta is None:
        delta = rng.chisquare(nu + extra_df, size=(mu.shape[0], 1))
    factor = np.sqrt(nu / np.asarray(delta, dtype=np.float64))
    return mu + log_sigma.exp() * (factor * eps)
