import numpy as np
import pytest

from kanq import ndcore, recurrent
from kanq.rng import RngStream


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-8)


class TestLstmStep:
    def test_zero_network_zero_output(self):
        cell = recurrent.LstmCell(2, 3)  # weights start at zero
        h, c = recurrent.lstm_step(cell, np.zeros((1, 2)), np.zeros((1, 3)),
                                   np.zeros((1, 3)))
        # gates are sigmoid(0)=0.5, candidate tanh(0)=0 -> h = 0.5*tanh(0) = 0
        assert np.all(h == 0.0) and np.all(c == 0.0)

    def test_scalar_trace_oracle(self):
        # 1-unit cell traced against a direct transcription of the five
        # gate equations with hand-picked weights
        cell = recurrent.LstmCell(1, 1)
        wf, wi, wc, wo = 0.5, -0.3, 0.8, 0.2
        uf, ui, uc, uo = 0.1, 0.4, -0.6, 0.7
        bf, bi, bc, bo = 0.05, -0.1, 0.2, 0.0
        cell.w["f"] = np.array([[uf, wf]])  # [h, x] concatenation order
        cell.w["i"] = np.array([[ui, wi]])
        cell.w["c"] = np.array([[uc, wc]])
        cell.w["o"] = np.array([[uo, wo]])
        cell.b = {"f": np.array([bf]), "i": np.array([bi]),
                  "c": np.array([bc]), "o": np.array([bo])}

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        h, c = 0.0, 0.0
        xs = [0.3, -1.2, 0.7]
        for x in xs:
            f = sig(uf * h + wf * x + bf)
            i = sig(ui * h + wi * x + bi)
            g = np.tanh(uc * h + wc * x + bc)
            o = sig(uo * h + wo * x + bo)
            c = f * c + i * g
            h = o * np.tanh(c)
        outs, _ = cell.run(np.array(xs).reshape(1, 3, 1))
        assert abs(outs[0, -1, 0] - h) < 1e-12

    def test_forget_gate_saturation(self):
        cell = recurrent.LstmCell(1, 1)
        cell.b["f"] = np.array([50.0])  # f ~ 1
        c_prev = np.array([[0.8]])
        h, c = recurrent.lstm_step(cell, np.array([[0.5]]), np.zeros((1, 1)), c_prev)
        i_gate = 0.5  # sigmoid(0)
        g = np.tanh(0.0)
        assert abs(c[0, 0] - (0.8 + i_gate * g)) < 1e-12

    def test_shape_validation(self):
        cell = recurrent.LstmCell(2, 3)
        with pytest.raises(ndcore.ShapeError):
            cell.step(np.zeros((1, 5)), np.zeros((1, 3)), np.zeros((1, 3)))

    def test_hidden_state_bounded(self):
        rng = RngStream(1)
        cell = recurrent.LstmCell(3, 4).init(rng)
        outs, _ = cell.run(rng.normal(0, 5, (2, 20, 3)))
        assert np.abs(outs).max() <= 1.0


class TestBiLstm:
    def test_single_step_output_dim(self):
        layer = recurrent.BiLstmLayer(3, 5).init(RngStream(2))
        y, _ = layer.forward(RngStream(3).normal(0, 1, (2, 1, 3)), want_cache=False)
        assert y.shape == (2, 1, 10)

    def test_stacked_paper_shape(self):
        rng = RngStream(4)
        l1 = recurrent.BiLstmLayer(1, 64).init(rng.child(0))
        l2 = recurrent.BiLstmLayer(128, 64).init(rng.child(1))
        x = rng.normal(0, 1, (3, 12, 1))
        h1, _ = l1.forward(x, want_cache=False)
        h2, _ = l2.forward(h1, want_cache=False)
        assert h2.shape == (3, 12, 128)

    def test_empty_sequence_rejected(self):
        layer = recurrent.BiLstmLayer(2, 2)
        with pytest.raises(ndcore.ShapeError):
            layer.forward(np.zeros((1, 0, 2)))

    def test_reversal_symmetry_with_tied_cells(self):
        # with both directions sharing weights, reversing the input
        # reverses time and swaps the two halves; asserts concat order
        layer = recurrent.BiLstmLayer(2, 3).init(RngStream(5))
        params = layer.params()
        tied = dict(params)
        for key in params:
            if key.startswith("bwd_"):
                tied[key] = params["fwd_" + key[4:]].copy()
        layer.set_params(tied)
        x = RngStream(6).normal(0, 1, (2, 5, 2))
        y, _ = layer.forward(x, want_cache=False)
        y_rev, _ = layer.forward(x[:, ::-1, :], want_cache=False)
        swapped = np.concatenate([y_rev[:, ::-1, 3:], y_rev[:, ::-1, :3]], axis=2)
        assert np.abs(y - swapped).max() < 1e-12

    def test_gradient_contract(self):
        rng = RngStream(7)
        layer = recurrent.BiLstmLayer(2, 2).init(rng)
        x = rng.normal(0, 1, (2, 3, 2))
        gy = rng.normal(0, 1, (2, 3, 4))
        _, cache = layer.forward(x)
        gx, grads = layer.backward(cache, gy)

        def loss_of_x(xv):
            out, _ = layer.forward(xv.reshape(x.shape), want_cache=False)
            return float((out * gy).sum())

        fd = ndcore.finite_diff_gradient(loss_of_x, x.ravel()).reshape(x.shape)
        assert rel_err(gx, fd) < 1e-5

        for key in ("fwd_w_c", "bwd_w_o", "fwd_b_i"):
            orig = layer.params()[key].copy()

            def loss_of_p(pv, key=key, orig=orig):
                p = dict(layer.params())
                p[key] = pv.reshape(orig.shape)
                layer.set_params(p)
                out, _ = layer.forward(x, want_cache=False)
                p[key] = orig
                layer.set_params(p)
                return float((out * gy).sum())

            fd_p = ndcore.finite_diff_gradient(loss_of_p, orig.ravel()).reshape(orig.shape)
            assert rel_err(grads[key], fd_p) < 1e-5, key

    def test_zero_upstream_grad(self):
        layer = recurrent.BiLstmLayer(2, 2).init(RngStream(8))
        x = RngStream(9).normal(0, 1, (1, 3, 2))
        _, cache = layer.forward(x)
        gx, grads = layer.backward(cache, np.zeros((1, 3, 4)))
        assert np.all(gx == 0)
        assert all(np.all(g == 0) for g in grads.values())

    def test_backward_deterministic(self):
        rng = RngStream(10)
        layer = recurrent.BiLstmLayer(2, 2).init(rng)
        x = rng.normal(0, 1, (2, 4, 2))
        gy = rng.normal(0, 1, (2, 4, 4))

        def run():
            _, cache = layer.forward(x)
            return layer.backward(cache, gy)

        gx1, g1 = run()
        gx2, g2 = run()
        assert np.array_equal(gx1, gx2)
        assert all(np.array_equal(g1[k], g2[k]) for k in g1)

    def test_missing_cache(self):
        layer = recurrent.BiLstmLayer(2, 2)
        with pytest.raises(ValueError):
            layer.backward(None, np.zeros((1, 1, 4)))

    def test_last_step_mode(self):
        layer = recurrent.BiLstmLayer(2, 3, return_sequences=False).init(RngStream(11))
        x = RngStream(12).normal(0, 1, (2, 4, 2))
        y, cache = layer.forward(x)
        assert y.shape == (2, 6)
        seq_layer = recurrent.BiLstmLayer(2, 3)
        seq_layer.set_params(layer.params())
        full, _ = seq_layer.forward(x, want_cache=False)
        expected = np.concatenate([full[:, -1, :3], full[:, 0, 3:]], axis=1)
        assert np.abs(y - expected).max() < 1e-12
        # gradient path through the reduced output
        gy = RngStream(13).normal(0, 1, (2, 6))
        gx, _ = layer.backward(cache, gy)

        def loss_of_x(xv):
            out, _ = layer.forward(xv.reshape(x.shape), want_cache=False)
            return float((out * gy).sum())

        fd = ndcore.finite_diff_gradient(loss_of_x, x.ravel()).reshape(x.shape)
        assert rel_err(gx, fd) < 1e-5
