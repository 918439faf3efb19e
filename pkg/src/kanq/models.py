"""Model assembly: layer wrappers with a shared forward/backward contract,
the three hybrid stacks, the dual-channel classifier, its ablation
variants, tensor-network VQC baselines, and a logistic baseline.

Every model maps (batch, features[, 1]) float64 input to a (batch, 2)
array of independent sigmoid outputs (class-0 and class-1 scores); the
class-1 probability used for ranking and conformal scores is
out1 / (out0 + out1).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, asdict

import numpy as np

from . import kan, ndcore, qsim, recurrent
from .rng import RngStream


@dataclass
class Hyperparams:
    """Widths and rates of the reference architecture."""

    input_features: int = 12
    lstm_units: int = 64
    dense_units: int = 320
    kan_units_1: int = 256
    kan_units_2: int = 32
    qdense_units_1: int = 112
    qdense_units_2: int = 176
    qdense_units_out: int = 112
    conv_filters: int = 96
    dropout_rate: float = 0.20
    n_qubits: int = 4
    quantum_layers: int = 1
    grid_size: int = 3
    join_units: int = 64
    entangle_range: int = 1
    ry_template: bool = True

    def validate(self) -> "Hyperparams":
        ints = ["input_features", "lstm_units", "dense_units", "kan_units_1",
                "kan_units_2", "qdense_units_1", "qdense_units_2",
                "qdense_units_out", "conv_filters", "n_qubits",
                "quantum_layers", "grid_size", "join_units", "entangle_range"]
        for name in ints:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        return self

    def pre_quantum_width(self, embedding: str = "amplitude") -> int:
        per_block = (1 << self.n_qubits) if embedding == "amplitude" else self.n_qubits
        return 3 * per_block


def _grid(hp: Hyperparams) -> kan.SplineGrid:
    return kan.SplineGrid(grid_size=hp.grid_size)


# --- layer wrappers -------------------------------------------------------

class DenseLayer:
    kind = "dense"

    def __init__(self, in_dim, units, act="relu"):
        self.in_dim, self.units, self.act = in_dim, units, act
        self.w = np.zeros((units, in_dim))
        self.b = np.zeros(units)

    def init(self, rng):
        bound = np.sqrt(6.0 / self.in_dim)
        self.w = (rng.uniform01(self.w.shape) * 2 - 1) * bound

    def params(self):
        return {"w": self.w, "b": self.b}

    def set_params(self, p):
        self.w, self.b = p["w"], p["b"]

    def forward(self, x, train, rng):
        shape3 = x.shape if x.ndim == 3 else None
        flat = x.reshape(-1, x.shape[-1])
        if flat.shape[1] != self.in_dim:
            raise ndcore.ShapeError(f"dense expected {self.in_dim} features, got {flat.shape[1]}")
        pre = flat @ self.w.T + self.b
        y = ndcore.activation(pre, self.act) if self.act != "none" else pre
        if shape3 is not None:
            y = y.reshape(shape3[0], shape3[1], self.units)
        return y, (flat, pre, shape3) if train else None

    def backward(self, cache, gy):
        flat, pre, shape3 = cache
        g = gy.reshape(-1, self.units)
        if self.act != "none":
            g = g * ndcore.activation_grad(pre, self.act)
        grads = {"w": g.T @ flat, "b": g.sum(axis=0)}
        gx = g @ self.w
        if shape3 is not None:
            gx = gx.reshape(shape3)
        return gx, grads


class DenseKanLayer:
    kind = "densekan"

    def __init__(self, in_dim, units, grid):
        self.inner = kan.DenseKANLayer(in_dim, units, grid)
        self.units = units

    def init(self, rng):
        self.inner.init(rng)

    def params(self):
        return self.inner.params()

    def set_params(self, p):
        self.inner.set_params(p)

    def forward(self, x, train, rng):
        shape3 = x.shape if x.ndim == 3 else None
        flat = x.reshape(-1, x.shape[-1])
        y, cache = self.inner.forward(flat, want_cache=train)
        if shape3 is not None:
            y = y.reshape(shape3[0], shape3[1], self.units)
        return y, (cache, shape3) if train else None

    def backward(self, cache, gy):
        inner_cache, shape3 = cache
        gx, grads = self.inner.backward(inner_cache, gy.reshape(-1, self.units))
        if shape3 is not None:
            gx = gx.reshape(shape3)
        return gx, grads


class ConvKanLayer:
    kind = "conv1dkan"

    def __init__(self, in_channels, filters, kernel_size, stride, grid):
        self.inner = kan.Conv1DKANLayer(in_channels, filters, kernel_size, stride, grid)

    def init(self, rng):
        self.inner.init(rng)

    def params(self):
        return self.inner.params()

    def set_params(self, p):
        self.inner.set_params(p)

    def forward(self, x, train, rng):
        return self.inner.forward(x, want_cache=train)

    def backward(self, cache, gy):
        return self.inner.backward(cache, gy)


class BiLstmWrap:
    kind = "bilstm"

    def __init__(self, in_dim, units, return_sequences=True):
        self.inner = recurrent.BiLstmLayer(in_dim, units, return_sequences)

    def init(self, rng):
        self.inner.init(rng)

    def params(self):
        return self.inner.params()

    def set_params(self, p):
        self.inner.set_params(p)

    def forward(self, x, train, rng):
        return self.inner.forward(x, want_cache=train)

    def backward(self, cache, gy):
        return self.inner.backward(cache, gy)


class LstmWrap:
    """Unidirectional variant used by the BiLSTM-replacement ablation."""

    kind = "lstm"

    def __init__(self, in_dim, units):
        self.cell = recurrent.LstmCell(in_dim, units)

    def init(self, rng):
        self.cell.init(rng)

    def params(self):
        return self.cell.params()

    def set_params(self, p):
        self.cell.set_params(p)

    def forward(self, x, train, rng):
        outs, caches = self.cell.run(x)
        return outs, caches if train else None

    def backward(self, cache, gy):
        return self.cell.backward(cache, gy)


class DropoutLayer:
    kind = "dropout"

    def __init__(self, rate):
        self.rate = rate

    def init(self, rng):
        pass

    def params(self):
        return {}

    def set_params(self, p):
        pass

    def forward(self, x, train, rng):
        if not train or self.rate <= 0.0:
            return x, None
        keep = (rng.uniform01(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * keep, keep

    def backward(self, cache, gy):
        if cache is None:
            return gy, {}
        return gy * cache, {}


class FlattenLayer:
    kind = "flatten"

    def init(self, rng):
        pass

    def params(self):
        return {}

    def set_params(self, p):
        pass

    def forward(self, x, train, rng):
        return x.reshape(x.shape[0], -1), x.shape if train else None

    def backward(self, cache, gy):
        return gy.reshape(cache), {}


class QuantumTriple:
    """Split the incoming features into three equal segments, run each
    through its own quantum block, concatenate the Z expectations."""

    kind = "quantum"

    def __init__(self, n_qubits, layers, r=1, ry_template=True, embedding="amplitude"):
        self.block = qsim.QuantumBlock(n_qubits, layers, r, ry_template, embedding)
        self.seg = self.block.n_inputs
        self.weights = [np.zeros(self.block.weight_shape()) for _ in range(3)]

    def init(self, rng):
        for i in range(3):
            self.weights[i] = rng.uniform01(self.block.weight_shape()) * 2 * np.pi

    def params(self):
        return {f"q{i}_w": w for i, w in enumerate(self.weights)}

    def set_params(self, p):
        self.weights = [p[f"q{i}_w"] for i in range(3)]

    def forward(self, x, train, rng):
        if x.shape[1] != 3 * self.seg:
            raise ndcore.ShapeError(
                f"quantum split expects {3 * self.seg} features, got {x.shape[1]}")
        outs = []
        segs = []
        for i in range(3):
            seg = x[:, i * self.seg:(i + 1) * self.seg]
            segs.append(seg)
            outs.append(self.block.forward(seg, self.weights[i]))
        return np.concatenate(outs, axis=1), segs if train else None

    def backward(self, cache, gy):
        n = self.block.n_qubits
        gxs, grads = [], {}
        for i, seg in enumerate(cache):
            gseg, gw = self.block.backward(seg, self.weights[i],
                                           gy[:, i * n:(i + 1) * n])
            gxs.append(gseg)
            grads[f"q{i}_w"] = gw
        return np.concatenate(gxs, axis=1), grads


class TwoColumnLayer:
    """Expand a single sigmoid score p into the (1-p, p) pair."""

    kind = "twocol"

    def init(self, rng):
        pass

    def params(self):
        return {}

    def set_params(self, p):
        pass

    def forward(self, x, train, rng):
        return np.concatenate([1.0 - x, x], axis=1), True if train else None

    def backward(self, cache, gy):
        return gy[:, 1:2] - gy[:, 0:1], {}


class VqcLayer:
    """Amplitude embedding, tensor-network ansatz, qubit-0 readout mapped
    to p = (1 - <Z>)/2, emitted as the (1-p, p) pair."""

    kind = "vqc"

    def __init__(self, spec: qsim.AnsatzSpec, ry_template: bool = False):
        self.spec = spec
        self.ry_template = ry_template
        self.angles = np.zeros(spec.param_count())

    def init(self, rng):
        self.angles = rng.uniform01((self.spec.param_count(),)) * 2 * np.pi

    def params(self):
        return {"angles": self.angles}

    def set_params(self, p):
        self.angles = p["angles"]

    def _z0(self, embedded, angles):
        states = qsim.apply_gates_batch(embedded, self.spec.gates(angles),
                                        self.spec.n_qubits)
        return qsim.expval_z_batch(states, self.spec.n_qubits)[:, 0]

    def forward(self, x, train, rng):
        embedded = qsim.embed_batch(x, self.spec.n_qubits, self.ry_template)
        p1 = (1.0 - self._z0(embedded, self.angles)) / 2.0
        probs = np.stack([1.0 - p1, p1], axis=1)
        return probs, embedded if train else None

    def backward(self, cache, gy):
        embedded = cache
        gp1 = gy[:, 1] - gy[:, 0]
        grad = np.zeros_like(self.angles)
        for i in range(self.angles.size):
            shifted = self.angles.copy()
            shifted[i] += np.pi / 2
            zp = self._z0(embedded, shifted)
            shifted[i] -= np.pi
            zm = self._z0(embedded, shifted)
            # dp1/dtheta = -(1/2) dz/dtheta with the +-pi/2 shift rule
            grad[i] = float(gp1 @ (-(zp - zm) / 4.0))
        return np.zeros((gy.shape[0], 1)), {"angles": grad}


class Sequential:
    def __init__(self, layers):
        self.layers = layers  # list of (name, layer)

    def init(self, rng):
        for i, (_, layer) in enumerate(self.layers):
            layer.init(rng.child(i))

    def params(self):
        out = {}
        for name, layer in self.layers:
            for k, v in layer.params().items():
                out[f"{name}/{k}"] = v
        return out

    def set_params(self, flat):
        for name, layer in self.layers:
            own = {k[len(name) + 1:]: v for k, v in flat.items()
                   if k.startswith(name + "/")}
            if own:
                layer.set_params(own)

    def forward(self, x, train, rng):
        caches = []
        for _, layer in self.layers:
            x, cache = layer.forward(x, train, rng)
            caches.append(cache)
        return x, caches

    def backward(self, caches, gy):
        grads = {}
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            gy, layer_grads = layer.backward(cache, gy)
            for k, v in layer_grads.items():
                grads[f"{name}/{k}"] = v
        return gy, grads


class ParallelChannels:
    """Two stacks over the same input, outputs concatenated."""

    kind = "parallel"

    def __init__(self, ch1: Sequential, ch2: Sequential, ch1_out: int):
        self.ch1, self.ch2, self.ch1_out = ch1, ch2, ch1_out

    def init(self, rng):
        self.ch1.init(rng.child(0))
        self.ch2.init(rng.child(1))

    def params(self):
        out = {f"ch1/{k}": v for k, v in self.ch1.params().items()}
        out.update({f"ch2/{k}": v for k, v in self.ch2.params().items()})
        return out

    def set_params(self, flat):
        self.ch1.set_params({k[4:]: v for k, v in flat.items() if k.startswith("ch1/")})
        self.ch2.set_params({k[4:]: v for k, v in flat.items() if k.startswith("ch2/")})

    def forward(self, x, train, rng):
        y1, c1 = self.ch1.forward(x, train, rng.child(0) if rng else None)
        y2, c2 = self.ch2.forward(x, train, rng.child(1) if rng else None)
        return np.concatenate([y1, y2], axis=1), (c1, c2) if train else None

    def backward(self, cache, gy):
        c1, c2 = cache
        gx1, g1 = self.ch1.backward(c1, gy[:, :self.ch1_out])
        gx2, g2 = self.ch2.backward(c2, gy[:, self.ch1_out:])
        grads = {f"ch1/{k}": v for k, v in g1.items()}
        grads.update({f"ch2/{k}": v for k, v in g2.items()})
        return gx1 + gx2, grads


# --- the model object -----------------------------------------------------

class Model:
    def __init__(self, kind: str, root: Sequential, hp: Hyperparams,
                 meta: dict | None = None, sequence_input: bool = True):
        self.kind = kind
        self.root = root
        self.hp = hp
        self.meta = meta or {}
        self.sequence_input = sequence_input

    def _canon(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.sequence_input:
            if x.ndim == 2:
                x = x[:, :, None]
        elif x.ndim == 3:
            x = x.reshape(x.shape[0], -1)
        return x

    def init(self, rng: RngStream):
        self.root.init(rng)
        return self

    def params(self):
        return self.root.params()

    def set_params(self, flat):
        self.root.set_params(flat)

    def param_count(self) -> int:
        return int(sum(v.size for v in self.params().values()))

    def forward(self, x, mode: str = "infer", rng: RngStream | None = None):
        if mode not in ("train", "infer"):
            raise ValueError(f"unknown mode {mode!r}")
        train = mode == "train"
        if train and rng is None:
            raise ValueError("train mode needs an RngStream for dropout")
        probs, caches = self.root.forward(self._canon(x), train, rng)
        return probs, caches if train else None

    def backward(self, cache, dprobs):
        if cache is None:
            raise ValueError("backward needs the cache from a train-mode forward")
        _, grads = self.root.backward(cache, dprobs)
        return grads

    def clone_params(self):
        return {k: v.copy() for k, v in self.params().items()}

    def kan_layers(self):
        """(param prefix, kan layer) pairs across the whole tree."""
        out = []

        def walk(seq, prefix):
            for name, layer in seq.layers:
                if isinstance(layer, DenseKanLayer):
                    out.append((f"{prefix}{name}", layer.inner))
                elif isinstance(layer, ConvKanLayer):
                    out.append((f"{prefix}{name}", layer.inner.edges))
                elif isinstance(layer, ParallelChannels):
                    walk(layer.ch1, f"{prefix}{name}/ch1/")
                    walk(layer.ch2, f"{prefix}{name}/ch2/")

        walk(self.root, "")
        return out

    def update_grids(self, adam: ndcore.AdamState | None = None,
                     shadow_params: tuple = ()) -> int:
        """Extend KAN knot lattices that saw out-of-domain activations.

        Optimizer moments and any shadow parameter dicts (weight snapshots)
        are padded with the same index shift, which preserves the functions
        they represent on the widened lattice.  Returns the number of
        layers whose grid changed.
        """
        changed = 0
        for prefix, layer in self.kan_layers():
            lo, hi = layer.observed_range()
            if not np.isfinite(lo) or not np.isfinite(hi):
                continue
            result = kan.grid_update(layer, np.array([lo, hi]))
            layer.reset_observed_range()
            if result is None:
                continue
            changed += 1
            offset, old_nb = result
            new_nb = layer.grid.n_bases

            def pad(mom, offset=offset, old_nb=old_nb, new_nb=new_nb):
                fresh = np.zeros(mom.shape[:-1] + (new_nb,))
                fresh[..., offset:offset + old_nb] = mom
                return fresh

            key = f"{prefix}/coeff"
            if adam is not None:
                adam.remap(key, pad)
            for shadow in shadow_params:
                if key in shadow:
                    shadow[key] = pad(shadow[key])
        return changed

    def grid_states(self) -> dict:
        return {prefix: [layer.grid.t_min, layer.grid.t_max,
                         layer.grid.grid_size, layer.grid.degree]
                for prefix, layer in self.kan_layers()}

    def set_grid_states(self, states: dict) -> None:
        for prefix, layer in self.kan_layers():
            if prefix not in states:
                continue
            t_min, t_max, grid_size, degree = states[prefix]
            layer.grid = kan.SplineGrid(t_min, t_max, int(grid_size), int(degree))
            layer.coeff = np.zeros((layer.out_dim, layer.in_dim, layer.grid.n_bases))

    def save(self, path, extra_meta: dict | None = None):
        manifest = {"kind": self.kind, "hyperparams": asdict(self.hp),
                    "meta": {**self.meta, **(extra_meta or {})},
                    "grids": self.grid_states(),
                    "sequence_input": self.sequence_input}
        ndcore.save_tensors(path, self.params(), manifest)

    @staticmethod
    def load(path) -> "Model":
        tensors, manifest = ndcore.load_tensors(path)
        hp = Hyperparams(**manifest["hyperparams"])
        meta = manifest["meta"]
        model = build(manifest["kind"], hp, rng=None,
                      n_features=meta.get("n_features"),
                      variant=meta.get("variant"),
                      ansatz=meta.get("ansatz"))
        model.meta = meta
        model.set_grid_states(manifest.get("grids", {}))
        model.set_params(tensors)
        return model


def predict_labels(probs: np.ndarray, tau: float = 0.5) -> np.ndarray:
    return (class_one_score(probs) > tau).astype(np.int64)


def class_one_score(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    total = probs.sum(axis=1)
    total = np.where(total == 0, 1.0, total)
    return probs[:, 1] / total


def vqc_predict(model: Model, x) -> np.ndarray:
    if model.kind != "vqc":
        raise ValueError("vqc_predict needs a vqc model")
    probs, _ = model.forward(x, "infer")
    return probs[:, 1]


# --- builders -------------------------------------------------------------

def _channel_classical(hp, n_features, kan_on=True, bilstm_layers=2,
                       cell="bilstm", mult=1.0, dropout=True):
    """BiLSTM front end, wide dense layer, two edge-function layers."""
    rate = hp.dropout_rate if dropout else 0.0
    layers = []
    feat_dim = 1
    idx = 0

    def add(layer):
        nonlocal idx
        layers.append((f"{idx:02d}_{layer.kind}", layer))
        idx += 1

    for _ in range(bilstm_layers):
        if cell == "bilstm":
            add(BiLstmWrap(feat_dim, hp.lstm_units, return_sequences=True))
            feat_dim = 2 * hp.lstm_units
        else:
            add(LstmWrap(feat_dim, hp.lstm_units))
            feat_dim = hp.lstm_units
    add(FlattenLayer())
    width = n_features * feat_dim
    add(DenseLayer(width, hp.dense_units, "relu"))
    add(DropoutLayer(rate))
    u1, u2 = _scaled(hp.kan_units_1, mult), _scaled(hp.kan_units_2, mult)
    add(_edge_layer(kan_on, hp.dense_units, u1, hp))
    add(DropoutLayer(rate))
    add(_edge_layer(kan_on, u1, u2, hp))
    add(DropoutLayer(rate))
    return layers, u2


def _channel_quantum(hp, n_features, kan_on=True, quantum=True,
                     embedding="amplitude", mult=1.0, dropout=True):
    """Edge-function stack dressing three quantum blocks."""
    rate = hp.dropout_rate if dropout else 0.0
    layers = []
    idx = 0

    def add(layer):
        nonlocal idx
        layers.append((f"{idx:02d}_{layer.kind}", layer))
        idx += 1

    u1 = _scaled(hp.qdense_units_1, mult)
    u2 = _scaled(hp.qdense_units_2, mult)
    u_out = _scaled(hp.qdense_units_out, mult)
    u_last = _scaled(hp.kan_units_2, mult)
    add(_edge_layer(kan_on, 1, u1, hp))  # applied per feature step
    add(FlattenLayer())
    add(DropoutLayer(rate))
    add(_edge_layer(kan_on, n_features * u1, u2, hp))
    add(DropoutLayer(rate))
    if quantum:
        pre_q = hp.pre_quantum_width(embedding)
        add(_edge_layer(kan_on, u2, pre_q, hp))
        add(QuantumTriple(hp.n_qubits, hp.quantum_layers, hp.entangle_range,
                          hp.ry_template, embedding))
        post_in = 3 * hp.n_qubits
    else:
        pre_q = hp.pre_quantum_width("amplitude")
        add(_edge_layer(kan_on, u2, pre_q, hp))
        post_in = pre_q
    add(_edge_layer(kan_on, post_in, u_out, hp))
    add(DropoutLayer(rate))
    add(_edge_layer(kan_on, u_out, u_last, hp))
    add(DropoutLayer(rate))
    return layers, u_last


def _edge_layer(kan_on: bool, in_dim: int, units: int, hp: Hyperparams):
    if kan_on:
        return DenseKanLayer(in_dim, units, _grid(hp))
    return DenseLayer(in_dim, units, "relu")


def _scaled(units: int, mult: float) -> int:
    return max(1, int(round(units * mult)))


def _head(in_dim: int, start_idx: int):
    return [(f"{start_idx:02d}_dense", DenseLayer(in_dim, 2, "sigmoid"))]


_VARIANTS = ("mlp", "lstm_for_bilstm", "wo_one_bilstm", "wo_all_bilstm",
             "wo_classical_kan", "wo_quantum_kan", "wo_quantum_layers",
             "wo_dropout", "angle_embedding")


def _dual_channel(hp, n_features, variant=None, mlp_mult=1.0):
    kan1 = kan2 = True
    bilstm_layers, cell = 2, "bilstm"
    quantum, dropout, embedding = True, True, "amplitude"
    mult = 1.0
    if variant == "mlp":
        kan1 = kan2 = False
        mult = mlp_mult
    elif variant == "lstm_for_bilstm":
        cell = "lstm"
    elif variant == "wo_one_bilstm":
        bilstm_layers = 1
    elif variant == "wo_all_bilstm":
        bilstm_layers = 0
    elif variant == "wo_classical_kan":
        kan1 = False
    elif variant == "wo_quantum_kan":
        kan2 = False
    elif variant == "wo_quantum_layers":
        quantum = False
    elif variant == "wo_dropout":
        dropout = False
    elif variant == "angle_embedding":
        embedding = "angle"
    elif variant is not None:
        raise ValueError(f"unknown ablation variant {variant!r}")
    ch1_layers, ch1_out = _channel_classical(hp, n_features, kan1, bilstm_layers,
                                             cell, mult, dropout)
    ch2_layers, ch2_out = _channel_quantum(hp, n_features, kan2, quantum,
                                           embedding, mult, dropout)
    par = ParallelChannels(Sequential(ch1_layers), Sequential(ch2_layers), ch1_out)
    layers = [("00_parallel", par),
              ("01_dense", DenseLayer(ch1_out + ch2_out, hp.join_units, "relu")),
              ("02_dense", DenseLayer(hp.join_units, 2, "sigmoid"))]
    return Sequential(layers)


def _match_mlp_multiplier(hp, n_features) -> float:
    """Width multiplier for the dense-for-KAN swap that keeps the total
    parameter count within 5% of the reference model's."""
    target = Model("kacq_dcnn", _dual_channel(hp, n_features), hp).param_count()

    def count(mult):
        return Model("kacq_mlp", _dual_channel(hp, n_features, "mlp", mult),
                     hp).param_count()

    lo, hi = 0.5, 8.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        c = count(mid)
        if abs(c - target) / target < 0.02:
            return mid
        if c < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build(kind: str, hp: Hyperparams | None = None, rng: RngStream | None = None,
          n_features: int | None = None, variant: str | None = None,
          ansatz: str | None = None) -> Model:
    """Construct a model; rng=None leaves parameters at their zero init
    (useful for parameter counting and checkpoint loading)."""
    hp = (hp or Hyperparams()).validate()
    n_features = n_features or hp.input_features
    meta = {"n_features": n_features, "variant": variant, "ansatz": ansatz}

    if kind == "bilstm_kannet":
        layers, out = _channel_classical(hp, n_features)
        model = Model(kind, Sequential(layers + _head(out, len(layers))), hp, meta)
    elif kind == "qdense_kannet":
        layers, out = _channel_quantum(hp, n_features)
        model = Model(kind, Sequential(layers + _head(out, len(layers))), hp, meta)
    elif kind == "qc_kannet":
        layers = []
        idx = 0

        def add(layer):
            nonlocal idx
            layers.append((f"{idx:02d}_{layer.kind}", layer))
            idx += 1

        add(ConvKanLayer(1, hp.conv_filters, 3, 2, _grid(hp)))
        len1 = (n_features - 3) // 2 + 1
        add(ConvKanLayer(hp.conv_filters, hp.conv_filters, 2, 2, _grid(hp)))
        len2 = (len1 - 2) // 2 + 1
        add(FlattenLayer())
        pre_q = hp.pre_quantum_width()
        add(DenseKanLayer(len2 * hp.conv_filters, pre_q, _grid(hp)))
        add(QuantumTriple(hp.n_qubits, hp.quantum_layers, hp.entangle_range,
                          hp.ry_template))
        add(DenseKanLayer(3 * hp.n_qubits, hp.kan_units_1, _grid(hp)))
        add(DropoutLayer(hp.dropout_rate))
        add(DenseKanLayer(hp.kan_units_1, hp.kan_units_2, _grid(hp)))
        add(DropoutLayer(hp.dropout_rate))
        add(DenseLayer(hp.kan_units_2, 2, "sigmoid"))
        model = Model(kind, Sequential(layers), hp, meta)
    elif kind == "kacq_dcnn":
        model = Model(kind, _dual_channel(hp, n_features, variant), hp, meta)
    elif kind == "kacq_mlp":
        mult = _match_mlp_multiplier(hp, n_features)
        meta["mlp_multiplier"] = mult
        model = Model(kind, _dual_channel(hp, n_features, "mlp", mult), hp, meta)
    elif kind == "vqc":
        spec = qsim.AnsatzSpec(ansatz or "mps", layers=hp.quantum_layers,
                               entangle_range=hp.entangle_range,
                               n_qubits=hp.n_qubits)
        model = Model(kind, Sequential([("00_vqc", VqcLayer(spec))]), hp, meta,
                      sequence_input=False)
    elif kind == "logistic":
        layers = [("00_dense", DenseLayer(n_features, 1, "sigmoid")),
                  ("01_twocol", TwoColumnLayer())]
        model = Model(kind, Sequential(layers), hp, meta, sequence_input=False)
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    if rng is not None:
        model.init(rng)
    return model


def build_ablation(variant: str, hp: Hyperparams | None = None,
                   rng: RngStream | None = None,
                   n_features: int | None = None) -> Model:
    """One of the named modifications of the dual-channel reference model."""
    if variant == "kan":
        return build("kacq_dcnn", hp, rng, n_features)
    if variant == "mlp":
        return build("kacq_mlp", hp, rng, n_features)
    if variant not in _VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    hp2 = copy.deepcopy(hp or Hyperparams())
    model = build("kacq_dcnn", hp2, None, n_features, variant=variant)
    model.kind = "kacq_dcnn"
    if rng is not None:
        model.init(rng)
    return model


ABLATION_VARIANTS = ("kan", "mlp", "lstm_for_bilstm", "wo_one_bilstm",
                     "wo_all_bilstm", "wo_classical_kan", "wo_quantum_kan",
                     "wo_quantum_layers", "wo_dropout", "angle_embedding")
