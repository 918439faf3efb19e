"""Kolmogorov-Arnold layers on B-spline edge functions.

Every edge carries phi(x) = w_base * SiLU(x) + w_spline * sum_k a_k B_k(x)
with B_k a cubic B-spline basis on a uniform knot lattice; a unit output
is the sum of its incoming edge functions.  The lattice can grow during
training: when activations leave the domain the knot grid is extended in
whole steps, and because uniform-lattice basis functions are translates
of one cardinal spline the old coefficients carry over as an index shift
that preserves the represented edge functions exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndcore
from .backend import kernels
from .rng import RngStream


@dataclass
class SplineGrid:
    """Uniform extended knot lattice over [t_min, t_max]."""

    t_min: float = -1.0
    t_max: float = 1.0
    grid_size: int = 3
    degree: int = 3

    def __post_init__(self):
        if self.grid_size < 1 or self.degree < 0:
            raise ValueError("grid_size must be >= 1 and degree >= 0")
        if not self.t_max > self.t_min:
            raise ValueError("empty spline domain")

    @property
    def h(self) -> float:
        return (self.t_max - self.t_min) / self.grid_size

    @property
    def n_bases(self) -> int:
        return self.grid_size + self.degree

    @property
    def t0(self) -> float:
        return self.t_min - self.degree * self.h


def bspline_basis(x, grid: SplineGrid) -> np.ndarray:
    """Basis values for scalar or array x; last axis has grid.n_bases entries."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = kernels.bspline_basis(arr.ravel(), grid.t0, grid.h, grid.n_bases, grid.degree)
    return out.reshape(arr.shape + (grid.n_bases,))


def bspline_basis_deriv(x, grid: SplineGrid):
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    vals, derivs = kernels.bspline_basis_deriv(arr.ravel(), grid.t0, grid.h,
                                               grid.n_bases, grid.degree)
    shape = arr.shape + (grid.n_bases,)
    return vals.reshape(shape), derivs.reshape(shape)


class DenseKANLayer:
    """Fully connected layer whose weights are learnable edge functions."""

    def __init__(self, in_dim: int, out_dim: int, grid: SplineGrid | None = None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.grid = grid or SplineGrid()
        nb = self.grid.n_bases
        self.coeff = np.zeros((out_dim, in_dim, nb))
        self.w_base = np.zeros((out_dim, in_dim))
        self.w_spline = np.ones((out_dim, in_dim))
        self._act_lo = np.inf
        self._act_hi = -np.inf

    def init(self, rng: RngStream, sigma: float = 0.1) -> "DenseKANLayer":
        self.coeff = rng.normal(0.0, sigma, self.coeff.shape)
        bound = np.sqrt(6.0 / self.in_dim)
        self.w_base = (rng.uniform01(self.w_base.shape) * 2 - 1) * bound
        self.w_spline = np.ones_like(self.w_spline)
        return self

    def params(self):
        return {"coeff": self.coeff, "w_base": self.w_base, "w_spline": self.w_spline}

    def set_params(self, p):
        self.coeff = p["coeff"]
        self.w_base = p["w_base"]
        self.w_spline = p["w_spline"]

    def forward(self, x: np.ndarray, want_cache: bool = True):
        """x: (batch, in_dim) -> (batch, out_dim); caches basis values for backward."""
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ndcore.ShapeError(f"expected (*, {self.in_dim}), got {x.shape}")
        if want_cache:
            bas, dbas = bspline_basis_deriv(x, self.grid)
            self._act_lo = min(self._act_lo, float(x.min())) if x.size else self._act_lo
            self._act_hi = max(self._act_hi, float(x.max())) if x.size else self._act_hi
        else:
            bas = bspline_basis(x, self.grid)
            dbas = None
        aws = self.coeff * self.w_spline[:, :, None]
        sig = ndcore.sigmoid(x)
        y = (x * sig) @ self.w_base.T
        y += bas.reshape(x.shape[0], -1) @ aws.reshape(self.out_dim, -1).T
        cache = (x, sig, bas, dbas) if want_cache else None
        return y, cache

    def backward(self, cache, gy: np.ndarray):
        if cache is None:
            raise ValueError("backward needs a forward cache from train mode")
        x, sig, bas, dbas = cache
        # d/d coeff is linear: shared contraction of upstream grad with bases
        g2 = np.tensordot(gy.T, bas, axes=([1], [0]))  # (out, in, nb)
        d_coeff = g2 * self.w_spline[:, :, None]
        d_wspline = (g2 * self.coeff).sum(axis=-1)
        d_wbase = gy.T @ (x * sig)
        aws = self.coeff * self.w_spline[:, :, None]
        t1 = np.tensordot(gy, aws, axes=([1], [0]))  # (batch, in, nb)
        silu_slope = sig * (1.0 + x * (1.0 - sig))
        gx = silu_slope * (gy @ self.w_base) + (t1 * dbas).sum(axis=-1)
        return gx, {"coeff": d_coeff, "w_base": d_wbase, "w_spline": d_wspline}

    def edge_values(self, x: np.ndarray) -> np.ndarray:
        """phi_ij(x_j) for probes x: (batch, in_dim) -> (batch, out, in)."""
        bas = bspline_basis(x, self.grid)
        spline = np.einsum("bjk,ijk->bij", bas, self.coeff * self.w_spline[:, :, None])
        return spline + ndcore.silu(x)[:, None, :] * self.w_base[None, :, :]

    def observed_range(self):
        return self._act_lo, self._act_hi

    def reset_observed_range(self):
        self._act_lo = np.inf
        self._act_hi = -np.inf


def init_kan(layer: DenseKANLayer, rng: RngStream, sigma: float = 0.1) -> DenseKANLayer:
    return layer.init(rng, sigma)


def densekan_forward(x: np.ndarray, layer: DenseKANLayer) -> np.ndarray:
    y, _ = layer.forward(x, want_cache=False)
    return y


def grid_update(layer: DenseKANLayer, activations: np.ndarray):
    """Extend the knot lattice to cover out-of-domain activations.

    Returns None when nothing changed, else (left_shift, old_n_bases): the
    old coefficient block now lives at slot offset ``left_shift`` of the
    widened basis axis (optimizer moments must be shifted the same way).
    """
    acts = np.asarray(activations, dtype=np.float64).ravel()
    if acts.size == 0:
        raise ValueError("empty activation sample")
    lo, hi = float(acts.min()), float(acts.max())
    if hi == lo:
        return None
    g = layer.grid
    if lo >= g.t_min and hi <= g.t_max:
        return None
    margin = 0.1 * (hi - lo)
    want_lo, want_hi = min(lo - margin, g.t_min), max(hi + margin, g.t_max)
    h = g.h
    add_left = int(np.ceil(max(0.0, g.t_min - want_lo) / h - 1e-12))
    add_right = int(np.ceil(max(0.0, want_hi - g.t_max) / h - 1e-12))
    if add_left == 0 and add_right == 0:
        return None
    old_nb = g.n_bases
    new_grid = SplineGrid(g.t_min - add_left * h, g.t_max + add_right * h,
                          g.grid_size + add_left + add_right, g.degree)
    coeff = np.zeros((layer.out_dim, layer.in_dim, new_grid.n_bases))
    coeff[:, :, add_left:add_left + old_nb] = layer.coeff
    layer.grid = new_grid
    layer.coeff = coeff
    return add_left, old_nb


class Conv1DKANLayer:
    """1-D valid convolution whose kernel taps are KAN edge functions."""

    def __init__(self, in_channels: int, filters: int, kernel_size: int,
                 stride: int = 1, grid: SplineGrid | None = None):
        if kernel_size < 1 or stride < 1:
            raise ValueError("kernel_size and stride must be positive")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        self.edges = DenseKANLayer(kernel_size * in_channels, filters, grid)

    @property
    def grid(self):
        return self.edges.grid

    def init(self, rng: RngStream, sigma: float = 0.1) -> "Conv1DKANLayer":
        self.edges.init(rng, sigma)
        return self

    def params(self):
        return self.edges.params()

    def set_params(self, p):
        self.edges.set_params(p)

    def out_length(self, length: int) -> int:
        if length < self.kernel_size:
            raise ndcore.ShapeError(
                f"input length {length} shorter than kernel {self.kernel_size}")
        return (length - self.kernel_size) // self.stride + 1

    def _window_starts(self, length: int) -> np.ndarray:
        return np.arange(self.out_length(length)) * self.stride

    def forward(self, x: np.ndarray, want_cache: bool = True):
        """x: (batch, length, channels) -> (batch, out_length, filters)."""
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ndcore.ShapeError(f"expected (*, L, {self.in_channels}), got {x.shape}")
        batch, length, _ = x.shape
        starts = self._window_starts(length)
        idx = starts[:, None] + np.arange(self.kernel_size)[None, :]
        windows = x[:, idx, :]  # (batch, out_len, K, C)
        flat = windows.reshape(batch * starts.size, -1)
        y, inner_cache = self.edges.forward(flat, want_cache)
        cache = (inner_cache, x.shape, idx) if want_cache else None
        return y.reshape(batch, starts.size, self.filters), cache

    def backward(self, cache, gy: np.ndarray):
        inner_cache, x_shape, idx = cache
        batch, length, channels = x_shape
        out_len = idx.shape[0]
        g_flat, grads = self.edges.backward(inner_cache, gy.reshape(batch * out_len, -1))
        g_windows = g_flat.reshape(batch, out_len, self.kernel_size, channels)
        gx = np.zeros(x_shape)
        np.add.at(gx, (slice(None), idx, slice(None)), g_windows)
        return gx, grads


def conv1dkan_forward(x: np.ndarray, layer: Conv1DKANLayer) -> np.ndarray:
    y, _ = layer.forward(x, want_cache=False)
    return y
