import numpy as np
import pytest

from shape_gradient_fields.exceptions import DataError, NumericError
from shape_gradient_fields.nnet import (
    AdamState,
    CondBatchNorm,
    LinearLayer,
    ResBlock,
    ScoreNetwork,
    adam_step,
    backward,
    forward,
    read_tensors,
    write_tensors,
)
from shape_gradient_fields.nnet.layers import MIN_TRAIN_BATCH
from tests.conftest import (
    array_digest,
    assert_gradient_matches,
    randomize,
)


class TestLinearLayer:
    def test_gradients(self, rng):
        layer = LinearLayer(4, 3, rng=rng)
        x = rng.standard_normal((6, 4))
        weights = rng.standard_normal((6, 3))

        def loss():
            return float(np.sum(layer.forward(x)[0] * weights))

        out, cache = layer.forward(x)
        grad_x, grads = layer.backward(cache, weights)
        assert_gradient_matches(loss, layer.weight, grads["weight"], rng)
        assert_gradient_matches(loss, layer.bias, grads["bias"], rng)
        assert_gradient_matches(loss, x, grad_x, rng)

    def test_rejects_wrong_width(self, rng):
        layer = LinearLayer(4, 3, rng=rng)
        with pytest.raises(ValueError, match="'sample'"):
            layer.forward(np.zeros((2, 5)), "sample")

    def test_zero_init(self):
        layer = LinearLayer(3, 2, zero_init=True)
        out, _ = layer.forward(np.ones((4, 3)))
        np.testing.assert_array_equal(out, 0.0)


class TestCondBatchNorm:
    @pytest.mark.parametrize("train_mode", [True, False])
    def test_gradients(self, rng, train_mode):
        layer = CondBatchNorm(5, 3)
        randomize(layer.parameters(), rng)
        layer.running_mean[:] = rng.standard_normal(5)
        layer.running_var[:] = rng.uniform(0.5, 2.0, 5)
        x = rng.standard_normal((8, 5))
        cond = rng.standard_normal((8, 3))
        weights = rng.standard_normal((8, 5))

        def loss():
            out, _ = layer.forward(x, cond, train_mode)
            return float(np.sum(out * weights))

        _, cache = layer.forward(x, cond, train_mode)
        grad_x, grad_cond, grads = layer.backward(cache, weights)
        params = layer.parameters()
        for name, value in params.items():
            assert_gradient_matches(loss, value, grads[name], rng)
        assert_gradient_matches(loss, x, grad_x, rng)
        assert_gradient_matches(loss, cond, grad_cond, rng)

    def test_train_mode_normalizes_the_batch(self, rng):
        layer = CondBatchNorm(4, 2)
        x = 3.0 + 2.0 * rng.standard_normal((64, 4))
        out, _ = layer.forward(x, rng.standard_normal((64, 2)), True)
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=0), 1.0, rtol=1e-4)

    def test_running_statistics_are_updated(self, rng):
        layer = CondBatchNorm(2, 1, momentum=0.5)
        x = np.array([[1.0, 2.0], [3.0, 6.0]])
        layer.forward(x, np.zeros((2, 1)), train_mode=True)
        np.testing.assert_allclose(layer.running_mean, [1.0, 2.0])
        # unbiased variance of each column is (2, 8)
        np.testing.assert_allclose(layer.running_var, [1.5, 4.5])

    def test_train_mode_needs_a_batch(self):
        layer = CondBatchNorm(2, 1)
        with pytest.raises(ValueError, match=str(MIN_TRAIN_BATCH)):
            layer.forward(np.ones((1, 2)), np.ones((1, 1)), train_mode=True)

    def test_eval_mode_accepts_a_single_row(self):
        layer = CondBatchNorm(2, 1)
        out, _ = layer.forward(np.ones((1, 2)), np.ones((1, 1)), False)
        assert out.shape == (1, 2)


class TestResBlock:
    def test_starts_as_identity(self, rng):
        block = ResBlock(6, 2, rng=rng)
        x = rng.standard_normal((10, 6))
        out, _ = block.forward(x, rng.standard_normal((10, 2)), True)
        np.testing.assert_array_equal(out, x)

    def test_gradients(self, rng):
        block = ResBlock(6, 2, rng=rng)
        randomize(block.parameters(), rng)
        x = rng.standard_normal((10, 6))
        cond = rng.standard_normal((10, 2))
        weights = rng.standard_normal((10, 6))

        def loss():
            out, _ = block.forward(x, cond, True)
            return float(np.sum(out * weights))

        _, cache = block.forward(x, cond, True)
        grad_x, grad_cond, grads = block.backward(cache, weights)
        for name, value in block.parameters().items():
            assert_gradient_matches(loss, value, grads[name], rng, 5)
        assert_gradient_matches(loss, x, grad_x, rng)
        assert_gradient_matches(loss, cond, grad_cond, rng)


def small_network(rng, **kwargs):
    network = ScoreNetwork(
        in_features=3, out_features=2, hidden=8, n_blocks=2, seed=7, **kwargs
    )
    randomize(network.parameters(), rng, scale=0.3)
    return network


class TestScoreNetwork:
    @pytest.mark.parametrize("train_mode", [True, False])
    def test_gradients(self, rng, train_mode):
        network = small_network(rng, cond_features=4)
        x = rng.standard_normal((12, 3))
        cond = rng.standard_normal((12, 4))
        weights = rng.standard_normal((12, 2))

        def loss():
            out, _ = network.forward(x, cond, train_mode)
            return float(np.sum(out * weights))

        _, tape = forward(network, x, cond, train_mode)
        grads = backward(tape, weights)
        for name, value in network.parameters().items():
            assert_gradient_matches(loss, value, grads.params[name], rng, 4)
        assert_gradient_matches(loss, x, grads.input, rng)
        assert_gradient_matches(loss, cond, grads.cond, rng)

    def test_input_doubles_as_condition(self, rng):
        network = small_network(rng)
        x = rng.standard_normal((12, 3))
        weights = rng.standard_normal((12, 2))

        def loss():
            out, _ = network.forward(x, train_mode=True)
            return float(np.sum(out * weights))

        _, tape = network.forward(x, train_mode=True)
        grads = network.backward(tape, weights)
        assert_gradient_matches(loss, x, grads.total_input(), rng)

    def test_zero_output(self, rng):
        network = ScoreNetwork(3, 2, hidden=8, n_blocks=1, zero_output=True)
        out, _ = network.forward(rng.standard_normal((4, 3)))
        np.testing.assert_array_equal(out, 0.0)

    def test_forward_is_frozen(self, golden):
        network = ScoreNetwork(3, 2, hidden=8, n_blocks=2, seed=3)
        x = np.random.default_rng(0).standard_normal((6, 3))
        outputs = [
            network.forward(x, train_mode=train_mode)[0]
            for train_mode in (False, True)
        ]
        golden("score_network_forward", array_digest(np.stack(outputs)))

    def test_same_seed_same_weights(self):
        first = ScoreNetwork(3, 2, hidden=8, n_blocks=2, seed=3)
        second = ScoreNetwork(3, 2, hidden=8, n_blocks=2, seed=3)
        for name, value in first.state_dict().items():
            np.testing.assert_array_equal(value, second.state_dict()[name])

    def test_backward_rejects_foreign_tape(self, rng):
        first = small_network(rng)
        second = small_network(rng)
        out, tape = first.forward(rng.standard_normal((4, 3)))
        with pytest.raises(ValueError, match="different network"):
            second.backward(tape, np.ones_like(out))

    def test_state_dict_round_trip(self, rng):
        source = small_network(rng)
        target = ScoreNetwork(3, 2, hidden=8, n_blocks=2, seed=11)
        target.load_state_dict(source.state_dict())
        x = rng.standard_normal((5, 3))
        np.testing.assert_array_equal(
            source.forward(x)[0], target.forward(x)[0]
        )

    def test_state_dict_mismatch(self, rng):
        network = small_network(rng)
        state = network.state_dict()
        state.pop("fc_in.bias")
        with pytest.raises(ValueError, match="fc_in.bias"):
            network.load_state_dict(state)

    def test_state_dict_is_a_copy(self, rng):
        network = small_network(rng)
        state = network.state_dict()
        state["fc_out.bias"][:] = 100.0
        assert not np.any(network.fc_out.bias == 100.0)


def torch_forward(torch, network, params, x, cond):
    def linear(prefix, h):
        return h @ params[f"{prefix}.weight"].T + params[f"{prefix}.bias"]

    def cbn(prefix, h, layer):
        gamma = linear(f"{prefix}.gamma_map", cond)
        beta = linear(f"{prefix}.beta_map", cond)
        mean = h.mean(dim=0)
        var = h.var(dim=0, unbiased=False)
        return gamma * (h - mean) / torch.sqrt(var + layer.eps) + beta

    h = linear("fc_in", x)
    for idx, block in enumerate(network.blocks):
        prefix = f"blocks.{idx}"
        t = torch.relu(cbn(f"{prefix}.bn_0", h, block.bn_0))
        t = linear(f"{prefix}.fc_0", t)
        t = torch.relu(cbn(f"{prefix}.bn_1", t, block.bn_1))
        h = h + linear(f"{prefix}.fc_1", t)
    h = torch.relu(cbn("bn_out", h, network.bn_out))
    return linear("fc_out", h)


def test_gradients_match_autograd(rng):
    torch = pytest.importorskip("torch")
    network = small_network(rng, cond_features=4)
    x = rng.standard_normal((16, 3))
    cond = rng.standard_normal((16, 4))
    weights = rng.standard_normal((16, 2))

    out, tape = network.forward(x, cond, train_mode=True)
    grads = network.backward(tape, weights)

    params = {
        name: torch.tensor(value, dtype=torch.float64, requires_grad=True)
        for name, value in network.parameters().items()
    }
    x_t = torch.tensor(x, requires_grad=True)
    cond_t = torch.tensor(cond, requires_grad=True)
    out_t = torch_forward(torch, network, params, x_t, cond_t)
    (out_t * torch.tensor(weights)).sum().backward()

    np.testing.assert_allclose(out, out_t.detach().numpy(), rtol=1e-10)
    for name, value in params.items():
        np.testing.assert_allclose(
            grads.params[name], value.grad.numpy(), rtol=1e-8, atol=1e-10
        )
    np.testing.assert_allclose(
        grads.input, x_t.grad.numpy(), rtol=1e-8, atol=1e-10
    )
    np.testing.assert_allclose(
        grads.cond, cond_t.grad.numpy(), rtol=1e-8, atol=1e-10
    )


class TestAdam:
    def test_first_step_moves_by_the_learning_rate(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        state = AdamState.for_parameters(params, lr=0.1)
        adam_step(state, params, {"w": np.array([0.5, -4.0, 1e-3])})
        np.testing.assert_allclose(
            params["w"], [0.9, -1.9, 2.9], rtol=1e-6
        )
        assert state.step == 1

    def test_minimizes_a_quadratic(self):
        params = {"w": np.array([3.0, -1.0])}
        state = AdamState.for_parameters(params, lr=0.01)
        for _ in range(2000):
            adam_step(state, params, {"w": 2 * params["w"]})
        np.testing.assert_allclose(params["w"], 0.0, atol=0.05)

    def test_non_finite_gradient_raises(self):
        params = {"w": np.zeros(2)}
        state = AdamState.for_parameters(params, lr=0.1)
        with pytest.raises(NumericError, match="'w'"):
            adam_step(state, params, {"w": np.array([np.nan, 0.0])})
        assert state.step == 0
        np.testing.assert_array_equal(params["w"], 0.0)

    def test_name_mismatch_raises(self):
        params = {"w": np.zeros(2)}
        state = AdamState.for_parameters(params, lr=0.1)
        with pytest.raises(ValueError):
            adam_step(state, params, {"v": np.zeros(2)})

    def test_invalid_hyper_parameters(self):
        with pytest.raises(ValueError):
            AdamState(lr=-1.0)
        with pytest.raises(ValueError):
            AdamState(beta_1=1.0)


class TestSerialization:
    def test_round_trip(self, tmp_path, rng):
        tensors = {
            "weights": rng.standard_normal((3, 4)),
            "scalar": np.array(2.5),
            "empty": np.zeros((0, 2)),
            "cube": rng.standard_normal((2, 2, 2)),
        }
        path = tmp_path / "params.bin"
        write_tensors(path, tensors)
        restored = read_tensors(path)

        assert list(restored) == list(tensors)
        for name, value in tensors.items():
            assert restored[name].shape == value.shape
            np.testing.assert_array_equal(restored[name], value)

    def test_header_is_readable_text(self, tmp_path):
        path = tmp_path / "params.bin"
        write_tensors(path, {"a": np.ones(2)})
        header = path.read_bytes().split(b"end_header\n")[0].decode()
        assert header.splitlines() == [
            "SGFTENSORS 1",
            "count 1",
            "a f8le 2 0 16",
        ]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "params.bin"
        path.write_bytes(b"NOPE 1\ncount 0\nend_header\n")
        with pytest.raises(DataError, match="line 1"):
            read_tensors(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "params.bin"
        write_tensors(path, {"a": np.ones(4)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DataError, match="line 3"):
            read_tensors(path)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "params.bin"
        header = b"SGFTENSORS 1\ncount 2\na f8le - 0 8\nend_header\n"
        path.write_bytes(header + bytes(8))
        with pytest.raises(DataError, match="count"):
            read_tensors(path)

    def test_missing_end_header(self, tmp_path):
        path = tmp_path / "params.bin"
        path.write_bytes(b"SGFTENSORS 1\ncount 0\n")
        with pytest.raises(DataError, match="end_header"):
            read_tensors(path)

    def test_names_must_not_contain_spaces(self, tmp_path):
        with pytest.raises(ValueError):
            write_tensors(tmp_path / "p.bin", {"a b": np.ones(1)})
