"""LSTM cell and bidirectional wrapper.

Gate equations, with z_t = [h_{t-1}, x_t]:

    f_t = sigmoid(W_f z_t + b_f)          forget
    i_t = sigmoid(W_i z_t + b_i)          input
    c_t = f_t * c_{t-1} + i_t * tanh(W_c z_t + b_c)
    o_t = sigmoid(W_o z_t + b_o)          output
    h_t = o_t * tanh(c_t)

The bidirectional layer runs one cell left-to-right and a second cell
right-to-left and concatenates per step, forward half first.
"""

from __future__ import annotations

import numpy as np

from . import ndcore
from .rng import RngStream

_GATES = ("f", "i", "c", "o")


class LstmCell:
    """Single LSTM cell; weights are (units, units + in_dim) per gate."""

    def __init__(self, in_dim: int, units: int):
        self.in_dim = in_dim
        self.units = units
        self.w = {g: np.zeros((units, units + in_dim)) for g in _GATES}
        self.b = {g: np.zeros(units) for g in _GATES}

    def init(self, rng: RngStream) -> "LstmCell":
        bound = np.sqrt(6.0 / (self.units + self.in_dim))
        for g in _GATES:
            self.w[g] = (rng.uniform01(self.w[g].shape) * 2 - 1) * bound
        return self

    def params(self):
        out = {f"w_{g}": self.w[g] for g in _GATES}
        out.update({f"b_{g}": self.b[g] for g in _GATES})
        return out

    def set_params(self, p):
        for g in _GATES:
            self.w[g] = p[f"w_{g}"]
            self.b[g] = p[f"b_{g}"]

    def step(self, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
        if x_t.shape[1] != self.in_dim or h_prev.shape[1] != self.units:
            raise ndcore.ShapeError(
                f"lstm step got x {x_t.shape}, h {h_prev.shape} for "
                f"in_dim={self.in_dim}, units={self.units}")
        z = np.concatenate([h_prev, x_t], axis=1)
        f = ndcore.sigmoid(z @ self.w["f"].T + self.b["f"])
        i = ndcore.sigmoid(z @ self.w["i"].T + self.b["i"])
        g = np.tanh(z @ self.w["c"].T + self.b["c"])
        o = ndcore.sigmoid(z @ self.w["o"].T + self.b["o"])
        c_t = f * c_prev + i * g
        h_t = o * np.tanh(c_t)
        return h_t, c_t, (z, f, i, g, o, c_prev, c_t)

    def run(self, x: np.ndarray):
        """x: (batch, T, in_dim) -> outputs (batch, T, units) plus caches."""
        batch, steps, _ = x.shape
        h = np.zeros((batch, self.units))
        c = np.zeros((batch, self.units))
        outs = np.zeros((batch, steps, self.units))
        caches = []
        for t in range(steps):
            h, c, cache = self.step(x[:, t, :], h, c)
            outs[:, t, :] = h
            caches.append(cache)
        return outs, caches

    def backward(self, caches, gy: np.ndarray):
        """gy: (batch, T, units) upstream grads on every h_t (reverse-time
        accumulation); returns (gx, param grads)."""
        batch, steps, _ = gy.shape
        gw = {g: np.zeros_like(self.w[g]) for g in _GATES}
        gb = {g: np.zeros_like(self.b[g]) for g in _GATES}
        gx = np.zeros((batch, steps, self.in_dim))
        dh_next = np.zeros((batch, self.units))
        dc_next = np.zeros((batch, self.units))
        for t in range(steps - 1, -1, -1):
            z, f, i, g, o, c_prev, c_t = caches[t]
            dh = gy[:, t, :] + dh_next
            tc = np.tanh(c_t)
            do = dh * tc
            dc = dc_next + dh * o * (1 - tc * tc)
            df = dc * c_prev
            di = dc * g
            dg = dc * i
            dc_next = dc * f
            da = {
                "f": df * f * (1 - f),
                "i": di * i * (1 - i),
                "c": dg * (1 - g * g),
                "o": do * o * (1 - o),
            }
            dz = np.zeros((batch, self.units + self.in_dim))
            for name in _GATES:
                gw[name] += da[name].T @ z
                gb[name] += da[name].sum(axis=0)
                dz += da[name] @ self.w[name]
            dh_next = dz[:, :self.units]
            gx[:, t, :] = dz[:, self.units:]
        grads = {f"w_{g}": gw[g] for g in _GATES}
        grads.update({f"b_{g}": gb[g] for g in _GATES})
        return gx, grads


def lstm_step(cell: LstmCell, x_t, h_prev, c_prev):
    h, c, _ = cell.step(np.atleast_2d(x_t), np.atleast_2d(h_prev), np.atleast_2d(c_prev))
    return h, c


class BiLstmLayer:
    """Concatenates a left-to-right and a right-to-left LSTM pass."""

    def __init__(self, in_dim: int, units: int, return_sequences: bool = True):
        self.units = units
        self.return_sequences = return_sequences
        self.fwd = LstmCell(in_dim, units)
        self.bwd = LstmCell(in_dim, units)

    def init(self, rng: RngStream) -> "BiLstmLayer":
        self.fwd.init(rng.child(0))
        self.bwd.init(rng.child(1))
        return self

    def params(self):
        out = {f"fwd_{k}": v for k, v in self.fwd.params().items()}
        out.update({f"bwd_{k}": v for k, v in self.bwd.params().items()})
        return out

    def set_params(self, p):
        self.fwd.set_params({k[4:]: v for k, v in p.items() if k.startswith("fwd_")})
        self.bwd.set_params({k[4:]: v for k, v in p.items() if k.startswith("bwd_")})

    def forward(self, x: np.ndarray, want_cache: bool = True):
        if x.ndim != 3:
            raise ndcore.ShapeError(f"expected (batch, T, features), got {x.shape}")
        if x.shape[1] < 1:
            raise ndcore.ShapeError("empty sequence")
        out_f, cache_f = self.fwd.run(x)
        out_b_rev, cache_b = self.bwd.run(x[:, ::-1, :])
        out_b = out_b_rev[:, ::-1, :]
        if self.return_sequences:
            y = np.concatenate([out_f, out_b], axis=2)
        else:
            y = np.concatenate([out_f[:, -1, :], out_b[:, 0, :]], axis=1)
        cache = (cache_f, cache_b, x.shape) if want_cache else None
        return y, cache

    def backward(self, cache, gy: np.ndarray):
        if cache is None:
            raise ValueError("backward needs a forward cache")
        cache_f, cache_b, x_shape = cache
        batch, steps, _ = x_shape
        if not self.return_sequences:
            full = np.zeros((batch, steps, 2 * self.units))
            full[:, -1, :self.units] = gy[:, :self.units]
            full[:, 0, self.units:] = gy[:, self.units:]
            gy = full
        gx_f, grads_f = self.fwd.backward(cache_f, gy[:, :, :self.units])
        gx_b_rev, grads_b = self.bwd.backward(cache_b, gy[:, ::-1, self.units:])
        gx = gx_f + gx_b_rev[:, ::-1, :]
        grads = {f"fwd_{k}": v for k, v in grads_f.items()}
        grads.update({f"bwd_{k}": v for k, v in grads_b.items()})
        return gx, grads


def bilstm_forward(layer: BiLstmLayer, x: np.ndarray) -> np.ndarray:
    y, _ = layer.forward(x, want_cache=False)
    return y
