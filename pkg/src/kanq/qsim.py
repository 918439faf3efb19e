"""Exact statevector simulation of the model's quantum components.

Convention: qubit 0 is the most significant bit of the basis-state index,
so |q0 q1 ... q_{n-1}> maps to index q0*2^{n-1} + ... + q_{n-1}.  States
are float64-complex vectors of length 2^n; batched helpers operate on
(batch, 2^n) arrays sharing one circuit.

Gate matrices:
    RY(t)  = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]
    RZ(p)  = diag(e^{-ip/2}, e^{ip/2})
    U3(t, p, l) = [[cos t/2, -e^{il} sin t/2],
                   [e^{ip} sin t/2, e^{i(p+l)} cos t/2]]
    CNOT flips the target amplitude pair wherever the control bit is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .backend import kernels


class EmbeddingError(ValueError):
    pass


class CircuitError(ValueError):
    pass


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz_matrix(phi: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * phi), 0], [0, np.exp(0.5j * phi)]],
                    dtype=np.complex128)


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -np.exp(1j * lam) * s],
                     [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
                    dtype=np.complex128)


_MATRIX_BUILDERS = {"ry": ry_matrix, "rz": rz_matrix, "u3": u3_matrix}


@dataclass(frozen=True)
class GateOp:
    """One circuit element: kind in {ry, rz, u3, cnot}, wire indices, params."""

    kind: str
    wires: tuple
    params: tuple = ()

    def validate(self, n_qubits: int) -> None:
        if any(w < 0 or w >= n_qubits for w in self.wires):
            raise CircuitError(f"wire out of range in {self}")
        if len(set(self.wires)) != len(self.wires):
            raise CircuitError(f"duplicate wires in {self}")
        if self.kind == "cnot":
            if len(self.wires) != 2:
                raise CircuitError("cnot needs (control, target)")
        elif self.kind not in _MATRIX_BUILDERS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")

    def matrix(self) -> np.ndarray:
        if self.kind == "cnot":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0],
                             [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128)
        return _MATRIX_BUILDERS[self.kind](*self.params)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "wires": list(self.wires),
                "params": [float(p) for p in self.params]}


class Statevector:
    """Unit-norm complex amplitude vector over n qubits."""

    def __init__(self, n_qubits: int, amplitudes: np.ndarray | None = None):
        self.n_qubits = n_qubits
        if amplitudes is None:
            amplitudes = np.zeros(1 << n_qubits, dtype=np.complex128)
            amplitudes[0] = 1.0
        self.amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << n_qubits,):
            raise CircuitError(f"amplitude vector must have length {1 << n_qubits}")

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def check_norm(self, tol: float = 1e-10) -> None:
        if abs(self.norm_sq() - 1.0) > tol:
            raise CircuitError(f"state norm drifted to {self.norm_sq()}")


def apply_gates_batch(states: np.ndarray, gates: Sequence[GateOp],
                      n_qubits: int) -> np.ndarray:
    """Apply a gate list to a (batch, 2^n) array of statevectors."""
    for g in gates:
        if g.kind == "cnot":
            states = kernels.apply_cnot(states, g.wires[0], g.wires[1], n_qubits)
        else:
            states = kernels.apply_1q(states, g.matrix(), g.wires[0], n_qubits)
    return states


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    gate.validate(state.n_qubits)
    amps = apply_gates_batch(state.amplitudes[None, :], [gate], state.n_qubits)[0]
    out = Statevector(state.n_qubits, amps)
    out.check_norm()
    return out


def amplitude_embed(features, n_qubits: int, ry_template: bool = False) -> Statevector:
    """Pad with zeros to 2^n, normalize to unit length, optionally rotate
    every qubit by RY(pi/2) (the circuit's superposition template step)."""
    amps = embed_batch(np.atleast_2d(np.asarray(features, dtype=np.float64)),
                       n_qubits, ry_template)[0]
    return Statevector(n_qubits, amps)


def embed_batch(features: np.ndarray, n_qubits: int,
                ry_template: bool = False) -> np.ndarray:
    """(batch, n_features) -> (batch, 2^n) embedded statevectors."""
    dim = 1 << n_qubits
    if features.ndim != 2:
        raise EmbeddingError("expected a (batch, features) array")
    if features.shape[1] > dim:
        raise EmbeddingError(
            f"{features.shape[1]} features exceed capacity 2^{n_qubits} = {dim}")
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0):
        raise EmbeddingError("cannot embed an all-zero feature vector")
    padded = np.zeros((features.shape[0], dim), dtype=np.complex128)
    padded[:, :features.shape[1]] = features / norms[:, None]
    if ry_template:
        gates = [GateOp("ry", (q,), (np.pi / 2,)) for q in range(n_qubits)]
        padded = apply_gates_batch(padded, gates, n_qubits)
    return padded


def angle_embed_batch(angles: np.ndarray, n_qubits: int) -> np.ndarray:
    """RY(x_q) on each qubit of |0...0>; angles: (batch, n_qubits)."""
    if angles.shape[1] != n_qubits:
        raise EmbeddingError(f"angle embedding needs {n_qubits} values per row")
    batch = angles.shape[0]
    half = angles / 2.0
    states = np.ones((batch, 1), dtype=np.complex128)
    for q in range(n_qubits):
        col = np.stack([np.cos(half[:, q]), np.sin(half[:, q])], axis=1)
        states = (states[:, :, None] * col[:, None, :]).reshape(batch, -1)
    return states


def sel_gates(weights: np.ndarray, n_qubits: int, r: int = 1) -> List[GateOp]:
    """Strongly entangling layers: per layer, U3 on every qubit then the
    CNOT ring (q, (q+r) mod n)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 3 or weights.shape[1] != n_qubits or weights.shape[2] != 3:
        raise CircuitError(f"SEL weights must be (L, {n_qubits}, 3), got {weights.shape}")
    gates: List[GateOp] = []
    for layer in weights:
        for q in range(n_qubits):
            gates.append(GateOp("u3", (q,), tuple(layer[q])))
        for q in range(n_qubits):
            target = (q + r) % n_qubits
            if target != q:
                gates.append(GateOp("cnot", (q, target)))
    return gates


def sel_circuit(state: Statevector, weights: np.ndarray, r: int = 1) -> Statevector:
    gates = sel_gates(weights, state.n_qubits, r)
    amps = apply_gates_batch(state.amplitudes[None, :], gates, state.n_qubits)[0]
    return Statevector(state.n_qubits, amps)


@dataclass
class AnsatzSpec:
    """Tensor-network-style entangler layout: mps chain, ttn tree, or mera
    (tree plus disentanglers).  The two-qubit block is RY(a), RY(b), CNOT."""

    kind: str
    layers: int = 1
    entangle_range: int = 1
    n_qubits: int = 4
    _pairs: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in ("sel", "mps", "ttn", "mera"):
            raise CircuitError(f"unknown ansatz kind {self.kind!r}")
        if self.kind in ("ttn", "mera"):
            n = self.n_qubits
            if n < 2 or (n & (n - 1)) != 0:
                raise CircuitError(f"{self.kind} needs a power-of-two qubit count")
        self._pairs = self._block_pairs()

    def _block_pairs(self) -> list:
        n = self.n_qubits
        if self.kind == "mps":
            return [(i, i + 1) for i in range(n - 1)]
        if self.kind in ("ttn", "mera"):
            pairs = []
            active = list(range(n))
            while len(active) > 1:
                if self.kind == "mera" and len(active) > 2:
                    # disentanglers straddle adjacent isometry pairs
                    for i in range(1, len(active) - 1, 2):
                        pairs.append((active[i], active[i + 1]))
                pairs.extend((active[i], active[i + 1]) for i in range(0, len(active), 2))
                active = active[::2]
            return pairs
        return []

    def param_count(self) -> int:
        if self.kind == "sel":
            return self.layers * self.n_qubits * 3
        return self.layers * 2 * len(self._pairs)

    def gates(self, params: np.ndarray) -> List[GateOp]:
        params = np.asarray(params, dtype=np.float64).ravel()
        if params.size != self.param_count():
            raise CircuitError(
                f"{self.kind} expects {self.param_count()} parameters, got {params.size}")
        if self.kind == "sel":
            return sel_gates(params.reshape(self.layers, self.n_qubits, 3),
                             self.n_qubits, self.entangle_range)
        gates: List[GateOp] = []
        k = 0
        for _ in range(self.layers):
            for a, b in self._pairs:
                gates.append(GateOp("ry", (a,), (params[k],)))
                gates.append(GateOp("ry", (b,), (params[k + 1],)))
                gates.append(GateOp("cnot", (a, b)))
                k += 2
        return gates


def ansatz_circuit(state: Statevector, spec: AnsatzSpec,
                   params: np.ndarray) -> Statevector:
    amps = apply_gates_batch(state.amplitudes[None, :], spec.gates(params),
                             state.n_qubits)[0]
    return Statevector(state.n_qubits, amps)


def circuit_dump(gates: Sequence[GateOp]) -> list:
    """JSON-ready gate list for debugging and cross-checking circuits."""
    return [g.as_dict() for g in gates]


_SIGN_CACHE: dict = {}


def _z_signs(n_qubits: int, wire: int) -> np.ndarray:
    key = (n_qubits, wire)
    if key not in _SIGN_CACHE:
        idx = np.arange(1 << n_qubits)
        bit = (idx >> (n_qubits - 1 - wire)) & 1
        _SIGN_CACHE[key] = 1.0 - 2.0 * bit
    return _SIGN_CACHE[key]


def _z_sign_matrix(n_qubits: int) -> np.ndarray:
    key = (n_qubits, "all")
    if key not in _SIGN_CACHE:
        _SIGN_CACHE[key] = np.stack(
            [_z_signs(n_qubits, w) for w in range(n_qubits)], axis=1)
    return _SIGN_CACHE[key]


def expval_z(state: Statevector, wire: int) -> float:
    if wire < 0 or wire >= state.n_qubits:
        raise CircuitError(f"wire {wire} out of range")
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ _z_signs(state.n_qubits, wire))


def expval_z_batch(states: np.ndarray, n_qubits: int) -> np.ndarray:
    """All-wire Pauli-Z expectations: (batch, 2^n) -> (batch, n)."""
    probs = states.real ** 2 + states.imag ** 2
    return probs @ _z_sign_matrix(n_qubits)


def class_probabilities(state: Statevector) -> tuple:
    """(P(0), P(1)) read from qubit 0."""
    probs = np.abs(state.amplitudes) ** 2
    signs = _z_signs(state.n_qubits, 0)
    p1 = float(probs[signs < 0].sum())
    return 1.0 - p1, p1


class QuantumBlock:
    """Embedding -> strongly entangling layers -> per-wire Z expectations.

    ``embedding="amplitude"`` consumes 2^n inputs (normalized, optional
    RY(pi/2) template); ``embedding="angle"`` consumes n inputs as RY
    rotation angles.  Weight gradients use the parameter-shift rule
    (every parameterized gate is Pauli-generated); input gradients use
    central differences through the embedding for the amplitude case and
    the shift rule for the angle case.
    """

    def __init__(self, n_qubits: int = 4, layers: int = 1, r: int = 1,
                 ry_template: bool = True, embedding: str = "amplitude"):
        if embedding not in ("amplitude", "angle"):
            raise EmbeddingError(f"unknown embedding {embedding!r}")
        self.n_qubits = n_qubits
        self.layers = layers
        self.r = r
        self.ry_template = ry_template
        self.embedding = embedding
        self.n_inputs = (1 << n_qubits) if embedding == "amplitude" else n_qubits

    def weight_shape(self) -> tuple:
        return (self.layers, self.n_qubits, 3)

    def _embed(self, inputs: np.ndarray) -> np.ndarray:
        if self.embedding == "amplitude":
            return embed_batch(inputs, self.n_qubits, self.ry_template)
        return angle_embed_batch(inputs, self.n_qubits)

    def forward(self, inputs: np.ndarray, weights: np.ndarray) -> np.ndarray:
        states = self._embed(inputs)
        states = apply_gates_batch(states, sel_gates(weights, self.n_qubits, self.r),
                                   self.n_qubits)
        return expval_z_batch(states, self.n_qubits)

    def weight_jacobian(self, inputs: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Parameter-shift Jacobian, shape weights.shape + (batch, n_qubits)."""
        weights = np.asarray(weights, dtype=np.float64)
        jac = np.zeros(weights.shape + (inputs.shape[0], self.n_qubits))
        flat = weights.ravel().copy()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + np.pi / 2
            plus = self.forward(inputs, flat.reshape(weights.shape))
            flat[i] = orig - np.pi / 2
            minus = self.forward(inputs, flat.reshape(weights.shape))
            flat[i] = orig
            jac.reshape(flat.size, *plus.shape)[i] = (plus - minus) / 2.0
        return jac

    def input_jacobian(self, inputs: np.ndarray, weights: np.ndarray,
                       eps: float = 1e-6) -> np.ndarray:
        """d expvals / d inputs, shape (batch, n_inputs, n_qubits)."""
        if self.embedding == "angle":
            jac = np.zeros((inputs.shape[0], self.n_inputs, self.n_qubits))
            for j in range(self.n_inputs):
                shifted = inputs.copy()
                shifted[:, j] += np.pi / 2
                plus = self.forward(shifted, weights)
                shifted[:, j] -= np.pi
                minus = self.forward(shifted, weights)
                jac[:, j, :] = (plus - minus) / 2.0
            return jac
        jac = np.zeros((inputs.shape[0], inputs.shape[1], self.n_qubits))
        for j in range(inputs.shape[1]):
            shifted = inputs.copy()
            shifted[:, j] += eps
            plus = self.forward(shifted, weights)
            shifted[:, j] -= 2 * eps
            minus = self.forward(shifted, weights)
            jac[:, j, :] = (plus - minus) / (2 * eps)
        return jac

    def backward(self, inputs: np.ndarray, weights: np.ndarray,
                 gy: np.ndarray) -> tuple:
        """(d inputs, d weights) for upstream grad gy of shape (batch, n)."""
        wjac = self.weight_jacobian(inputs, weights)
        gw = np.einsum("...bw,bw->...", wjac, gy)
        ijac = self.input_jacobian(inputs, weights)
        gx = np.einsum("bjw,bw->bj", ijac, gy)
        return gx, gw


def run_quantum_block(inputs, weights, n_qubits: int = 4, layers: int = 1,
                      r: int = 1, ry_template: bool = True) -> np.ndarray:
    """Single-sample convenience wrapper; returns the n_qubits expectations."""
    weights = np.asarray(weights, dtype=np.float64).reshape(layers, n_qubits, 3)
    block = QuantumBlock(n_qubits, layers, r, ry_template)
    return block.forward(np.atleast_2d(np.asarray(inputs, dtype=np.float64)),
                         weights)[0]


def parameter_shift_gradient(inputs, weights, n_qubits: int = 4, layers: int = 1,
                             r: int = 1, ry_template: bool = True,
                             wire: int = 0) -> np.ndarray:
    """Gradient of one wire's expectation w.r.t. the SEL weights."""
    weights = np.asarray(weights, dtype=np.float64).reshape(layers, n_qubits, 3)
    block = QuantumBlock(n_qubits, layers, r, ry_template)
    jac = block.weight_jacobian(
        np.atleast_2d(np.asarray(inputs, dtype=np.float64)), weights)
    return jac[..., 0, wire]
