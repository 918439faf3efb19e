import numpy as np
import pytest

from kanq import ndcore
from kanq.rng import RngStream


class TestMatmul:
    def test_identity(self):
        a = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(ndcore.matmul(np.eye(2), a), a)

    def test_hand_example(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0], [6.0]])
        assert np.array_equal(ndcore.matmul(a, b), [[17.0], [39.0]])

    def test_zero_annihilates(self):
        a = np.ones((3, 3))
        assert np.all(ndcore.matmul(np.zeros((2, 3)), a) == 0)

    def test_shape_mismatch(self):
        with pytest.raises(ndcore.ShapeError):
            ndcore.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_associativity(self):
        rng = RngStream(1)
        for i in range(20):
            a = rng.normal(0, 1, (4, 5))
            b = rng.normal(0, 1, (5, 6))
            c = rng.normal(0, 1, (6, 3))
            left = ndcore.matmul(ndcore.matmul(a, b), c)
            right = ndcore.matmul(a, ndcore.matmul(b, c))
            assert np.abs(left - right).max() <= 1e-9 * max(1.0, np.abs(left).max())


class TestActivations:
    def test_silu_zero(self):
        assert ndcore.activation(np.array([0.0]), "silu")[0] == 0.0

    def test_sigmoid_zero(self):
        assert ndcore.activation(np.array([0.0]), "sigmoid")[0] == 0.5

    def test_relu(self):
        out = ndcore.activation(np.array([-3.0, 3.0]), "relu")
        assert out.tolist() == [0.0, 3.0]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ndcore.activation(np.zeros(1), "mish")

    @pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh", "silu"])
    def test_grad_matches_fd(self, kind):
        rng = RngStream(2)
        x = rng.normal(0, 2, (11,))
        x = x[np.abs(x) > 1e-3]  # keep away from the relu kink
        analytic = ndcore.activation_grad(x, kind)
        fd = np.array([
            (ndcore.activation(np.array([v + 1e-6]), kind)[0]
             - ndcore.activation(np.array([v - 1e-6]), kind)[0]) / 2e-6
            for v in x])
        assert np.abs(analytic - fd).max() < 1e-6


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        state = ndcore.AdamState()
        params = {"w": np.array([1.0, -2.0])}
        out = ndcore.adam_step(state, params, {"w": np.zeros(2)})
        assert np.array_equal(out["w"], [1.0, -2.0])

    def test_zero_learning_rate(self):
        state = ndcore.AdamState(learning_rate=0.0)
        params = {"w": np.array([3.0])}
        out = ndcore.adam_step(state, params, {"w": np.array([5.0])})
        assert out["w"][0] == 3.0

    def test_single_step_hand_computed(self):
        # f(w) = w^2 at w=1: g=2; m=0.1*2*... one step of the published formula
        lr, b1, b2, eps = 0.001, 0.9, 0.999, 1e-8
        g = 2.0
        m = (1 - b1) * g
        v = (1 - b2) * g * g
        mhat = m / (1 - b1)
        vhat = v / (1 - b2)
        expected = 1.0 - lr * mhat / (np.sqrt(vhat) + eps)
        state = ndcore.AdamState(learning_rate=lr)
        out = ndcore.adam_step(state, {"w": np.array([1.0])}, {"w": np.array([g])})
        assert abs(out["w"][0] - expected) < 1e-15
        assert abs(out["w"][0]) < 1.0  # |w| decreased

    def test_moment_shape_mismatch(self):
        state = ndcore.AdamState()
        ndcore.adam_step(state, {"w": np.zeros(3)}, {"w": np.zeros(3)})
        with pytest.raises(ndcore.ShapeError):
            ndcore.adam_step(state, {"w": np.zeros(4)}, {"w": np.zeros(4)})

    def test_deterministic(self):
        def run():
            state = ndcore.AdamState()
            p = {"w": np.array([1.0, 2.0])}
            for i in range(5):
                p = ndcore.adam_step(state, p, {"w": np.array([0.1, -0.2]) * (i + 1)})
            return p["w"].copy()

        assert np.array_equal(run(), run())


class TestNesterov:
    def test_zero_momentum_is_gradient_descent(self):
        state = ndcore.NesterovState(learning_rate=0.1, momentum=0.0)
        out = ndcore.nesterov_step(state, {"w": np.array([1.0])}, {"w": np.array([2.0])})
        assert abs(out["w"][0] - 0.8) < 1e-15

    def test_two_steps_match_scalar_recurrence(self):
        # f(w) = w^2, grad(w) = 2w, evaluated at the lookahead point
        lr, mu = 0.1, 0.9
        w, v = 1.0, 0.0
        state = ndcore.NesterovState(learning_rate=lr, momentum=mu)
        params = {"w": np.array([w])}
        for _ in range(2):
            look = w + mu * v
            g = 2 * look
            v = mu * v - lr * g
            w = w + v
            ahead = state.lookahead(params)
            params = ndcore.nesterov_step(state, params, {"w": 2 * ahead["w"]})
        assert abs(params["w"][0] - w) < 1e-14

    def test_rest_state_stays(self):
        state = ndcore.NesterovState()
        out = ndcore.nesterov_step(state, {"w": np.array([5.0])}, {"w": np.zeros(1)})
        assert out["w"][0] == 5.0


class TestFiniteDiff:
    def test_quadratic(self):
        grad = ndcore.finite_diff_gradient(lambda x: float((x ** 2).sum()),
                                           np.array([1.0, 2.0]))
        assert np.abs(grad - [2.0, 4.0]).max() < 1e-8

    def test_constant(self):
        grad = ndcore.finite_diff_gradient(lambda x: 7.0, np.array([1.0, 2.0, 3.0]))
        assert np.all(grad == 0)

    def test_product(self):
        grad = ndcore.finite_diff_gradient(lambda x: float(x[0] * x[1]),
                                           np.array([3.0, 5.0]))
        assert np.abs(grad - [5.0, 3.0]).max() < 1e-8

    def test_nonfinite_rejected(self):
        with pytest.raises(ndcore.NonFiniteError):
            ndcore.finite_diff_gradient(lambda x: float("nan"), np.ones(1))


class TestRngStream:
    def test_same_seed_same_sequence(self):
        a = RngStream(42, 7).uniform01((100,))
        b = RngStream(42, 7).uniform01((100,))
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = RngStream(42, 0).uniform01((100,))
        b = RngStream(42, 1).uniform01((100,))
        assert not np.array_equal(a, b)

    def test_degenerate_normal(self):
        out = RngStream(1).normal(3.5, 0.0, (10,))
        assert np.all(out == 3.5)

    def test_permutation_is_bijection(self):
        perm = RngStream(3).permutation(3)
        assert sorted(perm.tolist()) == [0, 1, 2]

    def test_normal_law_of_large_numbers(self):
        draws = RngStream(9).normal(0.0, 0.1, (100_000,))
        assert abs(draws.mean()) < 0.005
        assert abs(draws.std() - 0.1) < 0.005

    def test_child_streams_independent(self):
        parent = RngStream(5, 1)
        a = parent.child(0).uniform01((50,))
        b = parent.child(1).uniform01((50,))
        assert not np.array_equal(a, b)


class TestSerialization:
    def test_blob_round_trip_bitwise(self, tmp_path):
        rng = RngStream(11)
        tensors = {"a": rng.normal(0, 1, (3, 4)), "b": rng.uniform01((7,)),
                   "scalar": np.array(2.5)}
        path = tmp_path / "blob.bin"
        ndcore.save_tensors(path, tensors, {"note": 1})
        loaded, manifest = ndcore.load_tensors(path)
        assert manifest == {"note": 1}
        for k, v in tensors.items():
            assert np.array_equal(loaded[k], v)
            assert loaded[k].dtype == np.float64

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"nope")
        with pytest.raises(ValueError):
            ndcore.load_tensors(path)
