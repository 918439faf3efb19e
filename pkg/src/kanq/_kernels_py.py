"""Pure NumPy implementations of the hot kernels.

Same contract as the compiled module ``kanq._kernels_cy``:

* B-spline basis evaluation on a uniform extended knot lattice
  (knots t_i = t0 + i*h, i = 0 .. n_bases + degree), by the Cox-de Boor
  recursion with half-open degree-0 indicators.  Outside the extended
  lattice every basis value is zero, which extends each basis function
  smoothly (C^{degree-1}) over the whole real line.
* Single-qubit gate and CNOT application on a batch of statevectors
  stored as a (batch, 2**n_qubits) complex array.  Qubit 0 is the most
  significant bit of the basis-state index.
"""

import numpy as np

NAME = "python"


def bspline_basis(x, t0, h, n_bases, degree):
    """Basis values for a flat array of points; returns (len(x), n_bases)."""
    x = np.asarray(x, dtype=np.float64)
    knots = t0 + h * np.arange(n_bases + degree + 1)
    xs = x[:, None]
    b = ((xs >= knots[:-1]) & (xs < knots[1:])).astype(np.float64)
    for d in range(1, degree + 1):
        left = (xs - knots[: b.shape[1] - 1]) / (d * h) * b[:, :-1]
        right = (knots[d + 1 : d + b.shape[1]] - xs) / (d * h) * b[:, 1:]
        b = left + right
    return b


def bspline_basis_deriv(x, t0, h, n_bases, degree):
    """Basis values and first derivatives; two (len(x), n_bases) arrays."""
    if degree == 0:
        vals = bspline_basis(x, t0, h, n_bases, degree)
        return vals, np.zeros_like(vals)
    x = np.asarray(x, dtype=np.float64)
    knots = t0 + h * np.arange(n_bases + degree + 1)
    xs = x[:, None]
    b = ((xs >= knots[:-1]) & (xs < knots[1:])).astype(np.float64)
    for d in range(1, degree):
        left = (xs - knots[: b.shape[1] - 1]) / (d * h) * b[:, :-1]
        right = (knots[d + 1 : d + b.shape[1]] - xs) / (d * h) * b[:, 1:]
        b = left + right
    # b now holds the degree-1 lower level with n_bases + 1 columns
    deriv = (b[:, :-1] - b[:, 1:]) / h
    d = degree
    left = (xs - knots[: b.shape[1] - 1]) / (d * h) * b[:, :-1]
    right = (knots[d + 1 : d + b.shape[1]] - xs) / (d * h) * b[:, 1:]
    vals = left + right
    return vals, deriv


def apply_1q(states, gate, wire, n_qubits):
    """Apply a 2x2 gate to one wire of a (batch, 2**n) statevector array."""
    batch = states.shape[0]
    s = states.reshape((batch,) + (2,) * n_qubits)
    axis = 1 + wire
    s = np.moveaxis(s, axis, -1)
    s = s @ gate.T
    s = np.moveaxis(s, -1, axis)
    return np.ascontiguousarray(s.reshape(batch, -1))


def apply_cnot(states, control, target, n_qubits):
    """Apply CNOT(control -> target) to a batch of statevectors."""
    dim = 1 << n_qubits
    cbit = 1 << (n_qubits - 1 - control)
    tbit = 1 << (n_qubits - 1 - target)
    idx = np.arange(dim)
    src = np.where(idx & cbit, idx ^ tbit, idx)
    return np.ascontiguousarray(states[:, src])
