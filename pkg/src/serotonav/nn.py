"""Small dense network in float64 numpy: forward/backward passes, Adam,
Huber loss, finite-difference gradient checking and a binary checkpoint format."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

CHECKPOINT_MAGIC = "SEROTONAV-DENSENET"
CHECKPOINT_VERSION = 1
ACTIVATIONS = ("relu", "identity")


class ShapeError(ValueError):
    pass


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError("bias length must match weight rows")


@dataclass
class Cache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weights.shape[0] != nxt.weights.shape[1]:
                raise ShapeError("adjacent layer dimensions do not chain")

    @classmethod
    def create(cls, sizes: Sequence[int], rng: np.random.Generator) -> DenseNet:
        """Glorot-uniform weights, zero biases, ReLU hidden layers, linear output."""
        layers = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            act = "identity" if k == len(sizes) - 2 else "relu"
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.weights.shape[0] for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.biases])
        return out

    def copy(self) -> DenseNet:
        return DenseNet([Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers])

    def load_from(self, other: DenseNet) -> None:
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def forward(self, x: np.ndarray, keep_cache: bool = False) -> np.ndarray | tuple[np.ndarray, Cache]:
        """Evaluate on a single vector ``(in,)`` or a batch ``(B, in)``."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ShapeError(f"expected input width {self.input_dim}, got shape {x.shape}")
        cache = Cache([], [])
        for layer in self.layers:
            z = h @ layer.weights.T + layer.biases
            cache.inputs.append(h)
            cache.pre.append(z)
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        out = h[0] if single else h
        return (out, cache) if keep_cache else out

    def backward(self, cache: Cache, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Reverse-mode gradients given dLoss/dOutput; returns (param grads, input grad)."""
        g = np.asarray(grad_out, dtype=np.float64)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        if g.shape != cache.pre[-1].shape:
            raise ShapeError(f"grad_out shape {grad_out.shape} does not match output")
        grads: list[np.ndarray] = []
        for layer, h, z in zip(reversed(self.layers), reversed(cache.inputs), reversed(cache.pre)):
            if layer.activation == "relu":
                g = g * (z > 0.0)
            grads.append(g.sum(axis=0))
            grads.append(g.T @ h)
            g = g @ layer.weights
        grads.reverse()
        return grads, (g[0] if single else g)


def huber(residual: np.ndarray, delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean Huber loss and its gradient with respect to ``residual``."""
    r = np.asarray(residual, dtype=np.float64)
    a = np.abs(r)
    quad = a <= delta
    loss = np.where(quad, 0.5 * r * r, delta * (a - 0.5 * delta))
    grad = np.where(quad, r, delta * np.sign(r))
    n = r.size
    return float(loss.sum() / n), grad / n


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    r = pred - target
    return float(np.mean(r * r)), 2.0 * r / r.size


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, net: DenseNet, grads: Sequence[np.ndarray]) -> None:
        params = net.params()
        if len(grads) != len(params):
            raise ShapeError("gradient list does not match parameters")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def numerical_gradients(loss_fn: Callable[[], float], params: Sequence[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``loss_fn`` with respect to every entry of ``params`` (in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn()
            flat[k] = orig - h
            down = loss_fn()
            flat[k] = orig
            gflat[k] = (up - down) / (2.0 * h)
        out.append(g)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise |a-b| / max(|a|+|b|, floor)."""
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


# -- checkpoints ---------------------------------------------------------


def save_checkpoint(net: DenseNet, path: str | Path | io.BufferedIOBase, optimizer: Adam | None = None) -> None:
    """Text header then little-endian float64 arrays, layer by layer (W then b)."""
    header = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        "sizes=" + ",".join(str(s) for s in net.sizes),
        "activations=" + ",".join(l.activation for l in net.layers),
    ]
    if optimizer is not None:
        header.append(
            f"optimizer=adam lr={optimizer.lr!r} beta1={optimizer.beta1!r} "
            f"beta2={optimizer.beta2!r} eps={optimizer.eps!r} steps={optimizer.step_count}"
        )
    header.append("end")
    blob = ("\n".join(header) + "\n").encode("ascii")
    body = b"".join(p.astype("<f8").tobytes(order="C") for p in net.params())
    if isinstance(path, (str, Path)):
        Path(path).write_bytes(blob + body)
    else:
        path.write(blob + body)


def load_checkpoint(path: str | Path) -> tuple[DenseNet, dict[str, str]]:
    data = Path(path).read_bytes()
    return loads_checkpoint(data)


def loads_checkpoint(data: bytes) -> tuple[DenseNet, dict[str, str]]:
    meta: dict[str, str] = {}
    offset = 0
    lines = []
    while True:
        nl = data.index(b"\n", offset)
        line = data[offset:nl].decode("ascii")
        offset = nl + 1
        if line == "end":
            break
        lines.append(line)
    magic, version = lines[0].split()
    if magic != CHECKPOINT_MAGIC:
        raise ValueError("not a network checkpoint")
    if int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    for line in lines[1:]:
        key, _, value = line.partition("=")
        meta[key] = value
    sizes = [int(s) for s in meta["sizes"].split(",")]
    acts = meta["activations"].split(",")
    layers = []
    for (fan_in, fan_out), act in zip(zip(sizes[:-1], sizes[1:]), acts):
        nw, nb = fan_in * fan_out, fan_out
        w = np.frombuffer(data, dtype="<f8", count=nw, offset=offset).reshape(fan_out, fan_in).astype(np.float64)
        offset += 8 * nw
        b = np.frombuffer(data, dtype="<f8", count=nb, offset=offset).astype(np.float64)
        offset += 8 * nb
        layers.append(Layer(w, b, act))
    if offset != len(data):
        raise ValueError("checkpoint has trailing or missing bytes")
    return DenseNet(layers), meta
