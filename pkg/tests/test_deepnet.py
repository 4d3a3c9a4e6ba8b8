"""Layer-wise decomposition: synthetic labels, row problems, balancedness."""

import numpy as np
import pytest

from reluflow.deepnet import (
    DeepNet,
    MultiOutputDataset,
    backprop_labels,
    balancedness_drift,
    forward_trace,
    multi_gradient,
    multi_loss,
    network_gradients,
    row_decompose,
)
from reluflow.errors import StructuralError
from reluflow.landscape import gradient as single_gradient
from reluflow.landscape import loss as single_loss

from oracles import deep_forward, deep_gradients, fd_layer_gradient


def scaled_net(rng, dims):
    weights = tuple(
        rng.normal(size=(dims[i + 1], dims[i])) / np.sqrt(dims[i])
        for i in range(len(dims) - 1)
    )
    return DeepNet(weights=weights)


class TestForwardTrace:
    def test_depth_one_is_linear(self, rng):
        w = rng.normal(size=(2, 3))
        net = DeepNet(weights=(w,))
        x = rng.normal(size=3)
        trace = forward_trace(net, x)
        np.testing.assert_allclose(trace[0][1], w @ x)  # no rectifier on output

    def test_positive_everything_is_a_plain_product_chain(self):
        w1 = np.array([[1.0, 2.0], [0.5, 1.0]])
        w2 = np.array([[1.0, 1.0]])
        net = DeepNet(weights=(w1, w2))
        x = np.array([1.0, 2.0])
        trace = forward_trace(net, x)
        np.testing.assert_allclose(trace[-1][1], w2 @ (w1 @ x))

    def test_matches_direct_evaluation(self, rng):
        net = scaled_net(rng, [4, 6, 5, 2])
        x = rng.normal(size=4)
        _, acts = deep_forward(net.weights, x)
        trace = forward_trace(net, x)
        np.testing.assert_allclose(trace[-1][1], acts[-1], rtol=1e-12)

    def test_shape_mismatch_is_rejected(self, rng):
        net = scaled_net(rng, [4, 3, 2])
        with pytest.raises(StructuralError):
            forward_trace(net, rng.normal(size=5))
        with pytest.raises(StructuralError):
            DeepNet(weights=(rng.normal(size=(3, 4)), rng.normal(size=(2, 5))))


class TestBackpropLabels:
    def test_depth_one_label_is_the_target(self, rng):
        net = DeepNet(weights=(rng.normal(size=(2, 3)),))
        x, y = rng.normal(size=3), rng.normal(size=2)
        (problem,) = backprop_labels(net, x, y)
        np.testing.assert_allclose(problem.backprop_label, y)
        assert problem.is_output

    def test_gradients_match_direct_chain_rule(self, rng):
        for _ in range(100):
            depth = int(rng.integers(1, 5))
            dims = [int(rng.integers(1, 9)) for _ in range(depth + 1)]
            net = scaled_net(rng, dims)
            x, y = rng.normal(size=dims[0]), rng.normal(size=dims[-1])
            ours = [p.weight_gradient() for p in backprop_labels(net, x, y)]
            oracle = deep_gradients(net.weights, x, y)
            for a, b in zip(ours, oracle):
                assert np.max(np.abs(a - b), initial=0.0) <= 1e-10

    def test_gradients_match_finite_differences(self, rng):
        net = scaled_net(rng, [3, 4, 2])
        x, y = rng.normal(size=3), rng.normal(size=2)
        grads = network_gradients(net, x, y)
        for layer in range(net.depth):
            fd = fd_layer_gradient(net.weights, x, y, layer)
            np.testing.assert_allclose(grads[layer], fd, atol=1e-6)

    def test_per_layer_problem_reproduces_its_own_gradient(self, rng):
        # each intermediate problem, treated as a stand-alone single-layer
        # network on its (input, synthetic label) pair, yields the same
        # weight gradient row by row
        net = scaled_net(rng, [3, 4, 2])
        x, y = rng.normal(size=3), rng.normal(size=2)
        problems = backprop_labels(net, x, y)
        for m, p in enumerate(problems[:-1]):
            ds = MultiOutputDataset(
                x=p.input.reshape(-1, 1), y=p.backprop_label.reshape(-1, 1)
            )
            np.testing.assert_allclose(
                multi_gradient(net.weights[m], ds), p.weight_gradient(), atol=1e-12
            )

    def test_dead_layer_kills_all_upstream_gradients(self):
        w1 = np.array([[-1.0, -1.0]])  # forces a zero rectified output
        w2 = np.array([[2.0]])
        net = DeepNet(weights=(w1, w2))
        x = np.array([1.0, 1.0])
        problems = backprop_labels(net, x, np.array([1.0]))
        np.testing.assert_array_equal(problems[0].delta, [0.0])
        np.testing.assert_array_equal(problems[0].weight_gradient(), [[0.0, 0.0]])

    def test_dead_residual_propagates_down_the_whole_stack(self, rng):
        # a vanished residual at one layer zeroes every earlier layer too
        w1 = rng.normal(size=(3, 2))
        w2 = np.array([[-1.0, -1.0, -1.0], [-0.5, -0.5, -0.5]])  # dead outputs
        w3 = rng.normal(size=(1, 2))
        net = DeepNet(weights=(w1, w2, w3))
        x = np.abs(rng.normal(size=2)) + 0.1
        problems = backprop_labels(net, x, np.array([1.0]))
        assert np.all(problems[1].delta == 0.0)
        assert np.all(problems[0].delta == 0.0)

    def test_net_json_round_trip(self, rng):
        net = scaled_net(rng, [2, 3, 1])
        clone = DeepNet.from_json(net.to_json())
        for a, b in zip(net.weights, clone.weights):
            np.testing.assert_array_equal(a, b)


class TestRowDecomposition:
    def test_single_output_is_identity(self, rng):
        x = rng.uniform(0.1, 1.0, size=(3, 4))
        y = rng.uniform(0.1, 1.0, size=(1, 4))
        ds = MultiOutputDataset(x=x, y=y)
        ((w_row, row_ds),) = row_decompose(rng.normal(size=(1, 3)), ds)
        np.testing.assert_array_equal(row_ds.y, y[0])
        np.testing.assert_array_equal(row_ds.x, x)

    def test_losses_add_and_gradients_stack(self, rng):
        x = rng.uniform(0.1, 1.0, size=(3, 5))
        y = rng.normal(size=(3, 5))
        ds = MultiOutputDataset(x=x, y=y)
        w = rng.normal(size=(3, 3))
        rows = row_decompose(w, ds)
        total = sum(single_loss(row_ds, w_row) for w_row, row_ds in rows)
        assert abs(total - multi_loss(w, ds)) <= 1e-12 * max(1.0, total)
        stacked = np.stack([single_gradient(row_ds, w_row) for w_row, row_ds in rows])
        np.testing.assert_allclose(stacked, multi_gradient(w, ds), atol=1e-12)

    def test_zero_label_row_is_flagged_not_rejected(self, rng):
        x = rng.uniform(0.1, 1.0, size=(2, 4))
        y = np.vstack([rng.uniform(0.1, 1.0, 4), np.zeros(4)])
        rows = row_decompose(rng.normal(size=(2, 2)), MultiOutputDataset(x=x, y=y))
        assert "A2" in rows[0][1].assumptions
        assert "A2" not in rows[1][1].assumptions


class TestBalancedness:
    def test_interpolating_net_never_drifts(self):
        w1 = np.array([[1.0, 0.0], [0.0, 1.0]])
        w2 = np.array([[1.0, 1.0]])
        net = DeepNet(weights=(w1, w2))
        x = np.array([1.0, 2.0])
        y = np.array([3.0])  # already fit exactly: zero gradient
        result = balancedness_drift(net, x, y, step=1e-3, iters=50)
        assert result.max_drift == 0.0
        assert not result.diverged

    def test_halving_the_step_roughly_halves_the_drift(self, rng):
        net = scaled_net(rng, [3, 4, 2])
        x, y = rng.normal(size=3), rng.normal(size=2)
        coarse = balancedness_drift(net, x, y, step=1e-3, iters=40)
        fine = balancedness_drift(net, x, y, step=5e-4, iters=80)
        assert coarse.max_drift > 0.0
        ratio = coarse.max_drift / fine.max_drift
        assert 2.0 / 1.5 <= ratio <= 2.0 * 1.5

    def test_single_layer_has_no_pairs(self, rng):
        net = DeepNet(weights=(rng.normal(size=(2, 3)),))
        result = balancedness_drift(net, rng.normal(size=3), rng.normal(size=2), 1e-3, 10)
        assert result.drift.shape == (10, 0)
        assert result.max_drift == 0.0

    def test_divergence_is_flagged(self):
        # a step far beyond 2/curvature makes plain descent oscillate and blow up
        net = DeepNet(weights=(np.array([[1.0]]),))
        result = balancedness_drift(net, np.array([1.0]), np.array([0.0]), 10.0, 60)
        assert result.diverged
        assert result.losses[-1] > 1e12
