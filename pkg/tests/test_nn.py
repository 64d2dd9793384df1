import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuelgan.errors import ConfigError, DimensionError, StateError
from fuelgan.nn import (
    AdamState,
    DenseLayer,
    DropoutSpec,
    Network,
    SgdState,
    adam_step,
    backward,
    bce_grad,
    bce_loss,
    dense_forward,
    dropout_forward,
    make_rng,
    sgd_step,
)

from gradcheck import bce, max_rel_error, numeric_grads, replay_forward

# sigmoid(2), -(ln 0.9 + ln 0.9)/2: evaluated with mpmath at 30 digits
SIGMOID_2 = 0.880797077977882444
BCE_09 = 0.105360515657826301


def random_network(rng, widths, activations, dropout=0.0):
    layers = []
    for i, act in enumerate(activations):
        layers.append(DenseLayer.init(widths[i], widths[i + 1], act, rng))
        layers[-1].biases[:] = rng.normal(0, 0.1, widths[i + 1])
        if dropout and i < len(activations) - 1:
            layers.append(DropoutSpec(dropout))
    return Network(layers)


class TestDenseForward:
    def test_identity(self):
        layer = DenseLayer(np.eye(2), [0, 0], "identity")
        np.testing.assert_array_equal(dense_forward(np.array([[1.0, 2.0]]), layer), [[1, 2]])

    def test_tanh_zero(self):
        assert dense_forward(np.array([[0.0]]), DenseLayer([[5.0]], [0.0], "tanh"))[0, 0] == 0.0

    def test_sigmoid(self):
        out = dense_forward(np.array([[1.0]]), DenseLayer([[1.0]], [1.0], "sigmoid"))
        assert out[0, 0] == pytest.approx(SIGMOID_2, abs=1e-5)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(1, 3\).*\(2, 2\)"):
            dense_forward(np.ones((1, 3)), DenseLayer(np.eye(2), [0, 0]))

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            DenseLayer(np.eye(2), [0, 0], "relu6")


class TestDropout:
    def test_zero_rate_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        out, mask = dropout_forward(x, DropoutSpec(0.0), True, make_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_inference_passthrough(self):
        out, mask = dropout_forward(np.array([[2.0, 4.0]]), DropoutSpec(0.5), False, None)
        np.testing.assert_array_equal(out, [[2, 4]])
        np.testing.assert_array_equal(mask, np.ones((1, 2)))

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            DropoutSpec(1.0)
        with pytest.raises(ConfigError):
            DropoutSpec(-0.1)

    def test_law_of_large_numbers(self):
        rng = make_rng(7)
        x = rng.uniform(0.5, 1.5, size=(1000, 100))
        out, mask = dropout_forward(x, DropoutSpec(0.5), True, rng)
        zeroed = np.mean(out == 0)
        assert 0.49 <= zeroed <= 0.51
        assert abs(out.mean() - x.mean()) / abs(x.mean()) <= 0.02

    def test_training_needs_rng(self):
        with pytest.raises(StateError):
            dropout_forward(np.ones((2, 2)), DropoutSpec(0.5), True, None)


class TestBce:
    def test_half(self):
        assert bce_loss(np.array([[0.5]]), np.array([[1.0]])) == pytest.approx(np.log(2), abs=1e-12)

    def test_perfect(self):
        assert bce_loss(np.array([[1 - 1e-7]]), np.array([[1.0]])) <= 1.01e-7

    def test_pair(self):
        p = np.array([[0.9], [0.1]])
        t = np.array([[1.0], [0.0]])
        assert bce_loss(p, t) == pytest.approx(BCE_09, abs=1e-5)

    def test_empty(self):
        with pytest.raises(ValueError):
            bce_loss(np.zeros((0, 1)), np.zeros((0, 1)))

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20), st.data())
    def test_nonnegative_finite(self, ps, data):
        ts = data.draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=len(ps), max_size=len(ps)))
        loss = bce_loss(np.array(ps)[:, None], np.array(ts)[:, None])
        assert np.isfinite(loss) and loss >= 0


class TestBackward:
    def test_single_identity_layer(self):
        net = Network([DenseLayer([[0.3]], [0.0], "identity")])
        out, cache = net.forward(np.array([[1.0]]))
        dw, db = backward(net, cache, np.ones_like(out))
        np.testing.assert_array_equal(dw, [[1.0]])
        np.testing.assert_array_equal(db, [1.0])

    def test_zero_upstream(self):
        rng = make_rng(3)
        net = random_network(rng, [4, 5, 3, 1], ["tanh", "leaky_relu", "sigmoid"], dropout=0.2)
        out, cache = net.forward(rng.normal(size=(6, 4)), training=True, rng=rng)
        for g in backward(net, cache, np.zeros_like(out)):
            assert not g.any()

    def test_missing_cache(self):
        net = Network([DenseLayer([[1.0]], [0.0])])
        with pytest.raises(StateError):
            backward(net, None, np.ones((1, 1)))

    def test_finite_differences_4_5_1(self):
        rng = make_rng(11)
        net = random_network(rng, [4, 5, 1], ["tanh", "sigmoid"])
        x = rng.normal(size=(8, 4))
        t = rng.integers(0, 2, size=(8, 1)).astype(float)
        out, cache = net.forward(x)
        analytic = backward(net, cache, bce_grad(out, t))
        numeric = numeric_grads(lambda: bce(replay_forward(net, x, []), t), net.parameters())
        assert max_rel_error(analytic, numeric) <= 1e-4

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_finite_differences_with_frozen_dropout(self, seed):
        rng = make_rng(seed)
        depth = int(rng.integers(2, 5))
        widths = [int(w) for w in rng.integers(1, 17, size=depth)] + [1]
        acts = [str(a) for a in rng.choice(["tanh", "leaky_relu", "sigmoid"], size=depth - 1)] + ["sigmoid"]
        net = random_network(rng, widths, acts, dropout=0.3)
        x = rng.normal(size=(5, widths[0]))
        t = rng.integers(0, 2, size=(5, 1)).astype(float)
        out, cache = net.forward(x, training=True, rng=rng)
        masks = [e for l, e in zip(net.layers, cache.entries) if isinstance(l, DropoutSpec)]
        analytic = backward(net, cache, bce_grad(out, t))
        numeric = numeric_grads(lambda: bce(replay_forward(net, x, masks), t), net.parameters())
        assert max_rel_error(analytic, numeric) <= 1e-4


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        def run():
            rng = make_rng(5)
            net = random_network(rng, [3, 8, 1], ["leaky_relu", "sigmoid"], dropout=0.5)
            x = rng.normal(size=(4, 3))
            out, cache = net.forward(x, training=True, rng=rng)
            grads = backward(net, cache, bce_grad(out, np.ones_like(out)))
            adam_step(net.parameters(), grads, AdamState())
            return [p.copy() for p in net.parameters()] + [out]

        for a, b in zip(run(), run()):
            assert np.array_equal(a, b)


class TestAdam:
    def test_zero_grad(self):
        p = [np.array([1.5, -2.0])]
        adam_step(p, [np.zeros(2)], AdamState())
        np.testing.assert_array_equal(p[0], [1.5, -2.0])

    def test_first_step(self):
        # bias-corrected m_hat / sqrt(v_hat) = 1 on step 1
        p = [np.array([1.0])]
        state = AdamState(learning_rate=0.001)
        adam_step(p, [np.array([1.0])], state)
        assert p[0][0] == pytest.approx(1.0 - 0.001, abs=1e-10)
        assert state.step == 1

    def test_monotone_descent(self):
        p = [np.array([1.0])]
        state = AdamState()
        adam_step(p, [np.array([1.0])], state)
        first = p[0][0]
        adam_step(p, [np.array([1.0])], state)
        assert state.step == 2
        assert p[0][0] < first < 1.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState())


class TestSgd:
    def test_zero_grad(self):
        p = [np.array([1.0])]
        sgd_step(p, [np.zeros(1)], SgdState(0.1))
        assert p[0][0] == 1.0

    @pytest.mark.parametrize("direction, expected", [("descend", 0.95), ("ascend", 1.05)])
    def test_direction(self, direction, expected):
        p = [np.array([1.0])]
        sgd_step(p, [np.array([0.5])], SgdState(0.1), direction)
        assert p[0][0] == pytest.approx(expected, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sgd_step([np.zeros((2, 2))], [np.zeros(4)], SgdState(0.1))
