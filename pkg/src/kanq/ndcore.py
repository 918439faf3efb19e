"""Dense tensor arithmetic, optimizers, and the finite-difference oracle.

Tensors are contiguous float64 ``numpy.ndarray`` values; NumPy supplies
the arithmetic while this module pins the contracts the rest of the
package relies on (shape checks, finiteness checks, deterministic
optimizer updates, blob serialization).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def tensor(data, shape=None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    return np.ascontiguousarray(arr)


def assert_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    # clipping keeps exp() in range; exact for |x| < 500
    z = np.clip(x, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


_ACTIVATIONS: Dict[str, Callable] = {
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": sigmoid,
    "tanh": np.tanh,
    "silu": silu,
}

_ACTIVATION_GRADS: Dict[str, Callable] = {
    "relu": lambda x: (x > 0).astype(np.float64),
    "sigmoid": lambda x: sigmoid(x) * (1.0 - sigmoid(x)),
    "tanh": lambda x: 1.0 - np.tanh(x) ** 2,
    "silu": silu_grad,
}


def activation(x: np.ndarray, kind: str) -> np.ndarray:
    try:
        return _ACTIVATIONS[kind](np.asarray(x, dtype=np.float64))
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def activation_grad(x: np.ndarray, kind: str) -> np.ndarray:
    return _ACTIVATION_GRADS[kind](np.asarray(x, dtype=np.float64))


@dataclass
class AdamState:
    """Bias-corrected Adam over a dict of named parameter tensors."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, params: Dict[str, np.ndarray]) -> None:
        for k, p in params.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            elif self.m[k].shape != p.shape:
                raise ShapeError(f"moment shape {self.m[k].shape} != param {p.shape} for {k!r}")

    def remap(self, key: str, mapper: Callable[[np.ndarray], np.ndarray]) -> None:
        """Adjust stored moments when a parameter changes shape (grid growth)."""
        if key in self.m:
            self.m[key] = mapper(self.m[key])
            self.v[key] = mapper(self.v[key])


def adam_step(state: AdamState, params: Dict[str, np.ndarray],
              grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Bias-corrected Adam update, in place on the parameter arrays.

    Uses the algebraically identical form
        p -= lr * sqrt(1 - b2^t)/(1 - b1^t) * m / (sqrt(v) + eps*sqrt(1 - b2^t))
    to avoid materializing the bias-corrected moment tensors.
    """
    state.ensure(params)
    state.step += 1
    t = state.step
    c2 = math.sqrt(1.0 - state.beta2 ** t)
    scale = state.learning_rate * c2 / (1.0 - state.beta1 ** t)
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != param {p.shape} for {k!r}")
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        denom = np.sqrt(v)
        denom += state.epsilon * c2
        np.divide(m, denom, out=denom)
        denom *= scale
        p -= denom
    return params


@dataclass
class NesterovState:
    learning_rate: float = 0.01
    momentum: float = 0.9
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def lookahead(self, params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Evaluation point theta + mu*v for the caller's gradient."""
        out = {}
        for k, p in params.items():
            v = self.velocity.get(k)
            out[k] = p if v is None else p + self.momentum * v
        return out


def nesterov_step(state: NesterovState, params: Dict[str, np.ndarray],
                  grads_at_lookahead: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    out = {}
    for k, p in params.items():
        g = grads_at_lookahead[k]
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != param {p.shape} for {k!r}")
        v = state.velocity.get(k, np.zeros_like(p))
        v = state.momentum * v - state.learning_rate * g
        state.velocity[k] = v
        out[k] = p + v
    return out


def finite_diff_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                         eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function; the project oracle."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel().copy()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(flat.reshape(x.shape)))
        flat[i] = orig - eps
        fm = float(f(flat.reshape(x.shape)))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError("objective returned a non-finite value")
        grad[i] = (fp - fm) / (2 * eps)
    return grad.reshape(x.shape)


# --- tensor blob serialization (checkpoint building block) ---

_MAGIC = b"KQT1"


def save_tensors(path, tensors: Dict[str, np.ndarray], manifest: dict | None = None) -> None:
    """Single-file format: magic, u64 header length, JSON header, raw blobs.

    The header records the manifest plus per-tensor shape/offset; blobs are
    little-endian float64 in row-major order, so a round-trip is bitwise.
    """
    names = list(tensors)
    entries = []
    offset = 0
    for name in names:
        arr = np.asarray(tensors[name], dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    header = json.dumps({"manifest": manifest or {}, "tensors": entries},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for name in names:
            fh.write(np.asarray(tensors[name], dtype="<f8").tobytes())


def load_tensors(path):
    """Returns (tensors dict, manifest dict)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a tensor blob file")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen))
        blob = fh.read()
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).copy()
    return tensors, header["manifest"]
