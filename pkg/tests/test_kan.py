import numpy as np
import pytest

from kanq import kan, ndcore
from kanq.rng import RngStream


def rel_err(a, b):
    scale = max(np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / scale


class TestBsplineBasis:
    def test_partition_of_unity(self):
        grid = kan.SplineGrid()
        xs = RngStream(1).uniform01((1000,)) * 2 - 1
        basis = kan.bspline_basis(xs, grid)
        assert np.abs(basis.sum(axis=1) - 1.0).max() < 1e-10
        assert basis.min() >= 0.0

    def test_degree_zero_one_hot(self):
        grid = kan.SplineGrid(0.0, 1.0, grid_size=4, degree=0)
        basis = kan.bspline_basis(np.array([0.1, 0.3, 0.6, 0.9]), grid)
        expected = np.eye(4)
        assert np.array_equal(basis, expected)

    def test_basis_count(self):
        grid = kan.SplineGrid(grid_size=3, degree=3)
        assert grid.n_bases == 6
        assert kan.bspline_basis(np.zeros(1), grid).shape == (1, 6)

    def test_derivative_vs_finite_difference(self):
        grid = kan.SplineGrid()
        xs = RngStream(2).uniform01((50,)) * 1.8 - 0.9
        _, deriv = kan.bspline_basis_deriv(xs, grid)
        eps = 1e-6
        fd = (kan.bspline_basis(xs + eps, grid) - kan.bspline_basis(xs - eps, grid)) / (2 * eps)
        assert np.abs(deriv - fd).max() < 1e-6

    def test_out_of_domain_smooth_decay(self):
        grid = kan.SplineGrid()
        far = kan.bspline_basis(np.array([5.0, -5.0]), grid)
        assert np.all(far == 0.0)
        near = kan.bspline_basis(np.array([1.0 + 1e-9]), grid)
        inside = kan.bspline_basis(np.array([1.0 - 1e-9]), grid)
        assert np.abs(near - inside).max() < 1e-6  # continuous across the edge

    def test_continuity_slope_bound(self):
        grid = kan.SplineGrid()
        xs = RngStream(3).uniform01((100,)) * 2 - 1
        delta = 1e-8
        a = kan.bspline_basis(xs, grid)
        b = kan.bspline_basis(xs + delta, grid)
        # |B(x+d) - B(x)| <= sup|B'| * d; derivative of cubics on h=2/3 is O(1/h)
        assert np.abs(a - b).max() < 10.0 * delta


class TestInit:
    def test_sigma_zero_all_zero(self):
        layer = kan.DenseKANLayer(4, 3).init(RngStream(1), sigma=0.0)
        assert np.all(layer.coeff == 0.0)

    def test_empirical_std(self):
        layer = kan.DenseKANLayer(100, 170)  # 100*170*6 > 1e5 coefficients
        layer.init(RngStream(5))
        assert abs(layer.coeff.std() - 0.1) < 0.005
        assert abs(layer.coeff.mean()) < 0.005

    def test_same_seed_identical(self):
        a = kan.DenseKANLayer(3, 2).init(RngStream(7))
        b = kan.DenseKANLayer(3, 2).init(RngStream(7))
        assert np.array_equal(a.coeff, b.coeff)
        assert np.array_equal(a.w_base, b.w_base)

    def test_spline_scales_start_at_one(self):
        layer = kan.DenseKANLayer(3, 2).init(RngStream(7))
        assert np.all(layer.w_spline == 1.0)


class TestDenseKanForward:
    def test_all_zero_parameters_zero_output(self):
        layer = kan.DenseKANLayer(3, 2)
        layer.w_spline = np.zeros_like(layer.w_spline)
        y = kan.densekan_forward(RngStream(1).normal(0, 1, (4, 3)), layer)
        assert np.all(y == 0.0)

    def test_scalar_formula_oracle(self):
        # 1-in 1-out layer evaluated against a direct transcription of
        # phi(x) = w_b silu(x) + w_s sum_k a_k B_k(x)
        layer = kan.DenseKANLayer(1, 1).init(RngStream(3))
        x = np.array([[0.37]])
        y = kan.densekan_forward(x, layer)[0, 0]
        basis = kan.bspline_basis(np.array([0.37]), layer.grid)[0]
        silu = 0.37 / (1 + np.exp(-0.37)) * 1.0
        expected = (layer.w_base[0, 0] * silu
                    + layer.w_spline[0, 0] * float(layer.coeff[0, 0] @ basis))
        assert abs(y - expected) < 1e-12

    def test_zero_spline_scale_reduces_to_silu_map(self):
        layer = kan.DenseKANLayer(3, 2).init(RngStream(4))
        layer.w_spline = np.zeros_like(layer.w_spline)
        x = RngStream(5).normal(0, 1, (6, 3))
        y = kan.densekan_forward(x, layer)
        expected = ndcore.silu(x) @ layer.w_base.T
        assert rel_err(y, expected) < 1e-12

    def test_shape_mismatch(self):
        layer = kan.DenseKANLayer(3, 2)
        with pytest.raises(ndcore.ShapeError):
            layer.forward(np.zeros((4, 5)))


class TestDenseKanBackward:
    def test_gradient_contract(self):
        rng = RngStream(6)
        layer = kan.DenseKANLayer(3, 2).init(rng)
        x = rng.normal(0, 0.5, (4, 3))
        gy = rng.normal(0, 1, (4, 2))
        _, cache = layer.forward(x)
        gx, grads = layer.backward(cache, gy)

        def loss_of_x(xv):
            out, _ = layer.forward(xv.reshape(4, 3), want_cache=False)
            return float((out * gy).sum())

        fd = ndcore.finite_diff_gradient(loss_of_x, x.ravel()).reshape(x.shape)
        assert rel_err(gx, fd) < 1e-5

        for name in ("coeff", "w_base", "w_spline"):
            orig = layer.params()[name].copy()

            def loss_of_p(pv, name=name, orig=orig):
                p = dict(layer.params())
                p[name] = pv.reshape(orig.shape)
                layer.set_params(p)
                out, _ = layer.forward(x, want_cache=False)
                p[name] = orig
                layer.set_params(p)
                return float((out * gy).sum())

            fd_p = ndcore.finite_diff_gradient(loss_of_p, orig.ravel()).reshape(orig.shape)
            assert rel_err(grads[name], fd_p) < 1e-5, name

    def test_zero_upstream_grad(self):
        layer = kan.DenseKANLayer(3, 2).init(RngStream(8))
        x = RngStream(9).normal(0, 1, (4, 3))
        _, cache = layer.forward(x)
        gx, grads = layer.backward(cache, np.zeros((4, 2)))
        assert np.all(gx == 0)
        assert all(np.all(g == 0) for g in grads.values())

    def test_coeff_grad_independent_of_coeff(self):
        rng = RngStream(10)
        layer = kan.DenseKANLayer(2, 2).init(rng)
        x = rng.normal(0, 1, (3, 2))
        gy = rng.normal(0, 1, (3, 2))
        _, cache = layer.forward(x)
        _, g1 = layer.backward(cache, gy)
        layer.coeff = layer.coeff * 5.0 + 1.0
        _, cache = layer.forward(x)
        _, g2 = layer.backward(cache, gy)
        assert np.allclose(g1["coeff"], g2["coeff"], atol=1e-12)

    def test_missing_cache(self):
        layer = kan.DenseKANLayer(2, 2)
        with pytest.raises(ValueError):
            layer.backward(None, np.zeros((1, 2)))


class TestGridUpdate:
    def _edge_probe(self, layer, xs):
        return layer.edge_values(np.tile(xs[:, None], (1, layer.in_dim)))

    def test_inside_domain_noop(self):
        layer = kan.DenseKANLayer(2, 2).init(RngStream(11))
        assert kan.grid_update(layer, np.array([-0.5, 0.5])) is None

    def test_constant_activations_noop(self):
        layer = kan.DenseKANLayer(2, 2).init(RngStream(11))
        assert kan.grid_update(layer, np.full(10, 3.3)) is None

    def test_domain_growth_preserves_functions(self):
        layer = kan.DenseKANLayer(2, 3).init(RngStream(12))
        probes = np.linspace(-1, 1, 101)
        before = self._edge_probe(layer, probes)
        result = kan.grid_update(layer, np.array([-2.0, 2.0]))
        assert result is not None
        after = self._edge_probe(layer, probes)
        rms = float(np.sqrt(np.mean((after - before) ** 2)))
        assert rms < 1e-6
        assert layer.grid.t_min <= -2.0 and layer.grid.t_max >= 2.0

    def test_domain_never_shrinks(self):
        layer = kan.DenseKANLayer(1, 1).init(RngStream(13))
        kan.grid_update(layer, np.array([-3.0, 3.0]))
        t_min, t_max = layer.grid.t_min, layer.grid.t_max
        kan.grid_update(layer, np.array([-0.1, 0.1]))
        assert layer.grid.t_min == t_min and layer.grid.t_max == t_max

    def test_empty_sample_rejected(self):
        layer = kan.DenseKANLayer(1, 1)
        with pytest.raises(ValueError):
            kan.grid_update(layer, np.array([]))

    def test_forward_consistent_after_growth(self):
        rng = RngStream(14)
        layer = kan.DenseKANLayer(3, 2).init(rng)
        x = rng.normal(0, 0.4, (8, 3))
        before = kan.densekan_forward(x, layer)
        kan.grid_update(layer, np.array([-4.0, 4.0]))
        after = kan.densekan_forward(x, layer)
        assert rel_err(after, before) < 1e-9


class TestConv1DKan:
    def test_output_length_formula(self):
        layer = kan.Conv1DKANLayer(1, 4, kernel_size=3, stride=2)
        assert layer.out_length(12) == 5
        y, _ = layer.forward(np.zeros((2, 12, 1)), want_cache=False)
        assert y.shape == (2, 5, 4)

    def test_too_short_input(self):
        layer = kan.Conv1DKANLayer(1, 4, kernel_size=3, stride=2)
        with pytest.raises(ndcore.ShapeError):
            layer.forward(np.zeros((1, 2, 1)))

    def test_zero_parameters_zero_output(self):
        layer = kan.Conv1DKANLayer(2, 3, kernel_size=2, stride=1)
        layer.edges.w_spline = np.zeros_like(layer.edges.w_spline)
        y = kan.conv1dkan_forward(RngStream(1).normal(0, 1, (2, 5, 2)), layer)
        assert np.all(y == 0)

    def test_hand_expanded_window_sum(self):
        # one filter, K=2, C=1: output t = phi_0(x_t) + phi_1(x_{t+1})
        rng = RngStream(15)
        layer = kan.Conv1DKANLayer(1, 1, kernel_size=2, stride=1).init(rng)
        x = rng.normal(0, 0.5, (1, 4, 1))
        y = kan.conv1dkan_forward(x, layer)
        edges = layer.edges
        for t in range(3):
            window = np.array([[x[0, t, 0], x[0, t + 1, 0]]])
            expected = kan.densekan_forward(window, edges)[0, 0]
            assert abs(y[0, t, 0] - expected) < 1e-12

    def test_gradient_contract(self):
        rng = RngStream(16)
        layer = kan.Conv1DKANLayer(2, 2, kernel_size=2, stride=2).init(rng)
        x = rng.normal(0, 0.5, (2, 5, 2))
        gy = rng.normal(0, 1, (2, 2, 2))
        _, cache = layer.forward(x)
        gx, grads = layer.backward(cache, gy)

        def loss_of_x(xv):
            out, _ = layer.forward(xv.reshape(x.shape), want_cache=False)
            return float((out * gy).sum())

        fd = ndcore.finite_diff_gradient(loss_of_x, x.ravel()).reshape(x.shape)
        assert rel_err(gx, fd) < 1e-5

        orig = layer.params()["coeff"].copy()

        def loss_of_c(cv):
            p = dict(layer.params())
            p["coeff"] = cv.reshape(orig.shape)
            layer.set_params(p)
            out, _ = layer.forward(x, want_cache=False)
            p["coeff"] = orig
            layer.set_params(p)
            return float((out * gy).sum())

        fd_c = ndcore.finite_diff_gradient(loss_of_c, orig.ravel()).reshape(orig.shape)
        assert rel_err(grads["coeff"], fd_c) < 1e-5
