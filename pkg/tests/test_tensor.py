import numpy as np
import pytest

from adventurer import tensor as T
from adventurer.errors import ContractError, DimensionError
from adventurer.rng import Rng
from adventurer.tensor import Graph, Tensor
from adventurer.utils import fit_loglog_slope, rel_err


def _leaf(values, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=True, dtype=dtype)


class TestTensor:

    def test_defaults_to_float32(self):
        t = Tensor([1.0, 2.0])
        assert t.dtype == np.float32
        assert t.data.flags["C_CONTIGUOUS"]
        assert t.grad is None and t.node is None

    def test_precision_switch_is_scoped(self):
        with T.precision(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32

    def test_rank_above_four_rejected(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((1, 1, 1, 1, 1)))

    def test_no_grad_records_nothing(self):
        a = _leaf([1.0, 2.0])
        with T.no_grad():
            b = T.exp(a)
        assert b.node is None
        assert not b.requires_grad
        assert T.exp(a).node is not None


class TestBackward:

    def test_matmul_gradients(self):
        a = _leaf(np.arange(6.0).reshape(2, 3))
        b = _leaf(np.arange(12.0).reshape(3, 4))
        T.backward(T.sum_(T.matmul(a, b)))
        ones = np.ones((2, 4))
        np.testing.assert_allclose(a.grad, ones @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ ones)

    def test_broadcast_add_sums_gradient(self):
        a = _leaf(np.zeros((3, 4)))
        bias = _leaf(np.zeros(4))
        T.backward(T.sum_(a + bias))
        np.testing.assert_allclose(bias.grad, np.full(4, 3.0))
        np.testing.assert_allclose(a.grad, np.ones((3, 4)))

    def test_shared_subexpression_accumulates(self):
        x = _leaf([0.5, -2.0, 3.0])
        y = x * x + x
        T.backward(T.sum_(y))
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_repeated_backward_accumulates_into_leaves(self):
        x = _leaf([1.0, 2.0])
        T.backward(T.sum_(x * 3.0))
        T.backward(T.sum_(x * 3.0))
        np.testing.assert_allclose(x.grad, [6.0, 6.0])
        x.zero_grad()
        assert x.grad is None

    def test_non_scalar_loss_rejected(self):
        x = _leaf([1.0, 2.0])
        with pytest.raises(ContractError):
            T.backward(x * 2.0)

    def test_graph_order_puts_operands_first(self):
        x = _leaf([1.0])
        y = T.exp(x)
        z = T.sum_(y * y)
        nodes = Graph(z).nodes
        assert [n.op for n in nodes] == ["exp", "mul", "sum"]

    def test_cumsum_gradient_is_reverse_cumsum(self):
        x = _leaf(np.zeros(4))
        w = Tensor(np.array([1.0, 2.0, 3.0, 4.0]), dtype=np.float64)
        T.backward(T.sum_(T.cumsum(x, axis=0) * w))
        np.testing.assert_allclose(x.grad, [10.0, 9.0, 7.0, 4.0])

    @pytest.mark.parametrize("op", ["exp", "silu", "softplus", "sigmoid", "gelu"])
    def test_unary_gradients_match_finite_differences(self, op):
        fn = getattr(T, op)
        values = np.array([-1.3, -0.2, 0.4, 2.1])
        x = _leaf(values)
        T.backward(T.sum_(fn(x)))
        eps = 1e-6
        with T.no_grad():
            plus = fn(Tensor(values + eps, dtype=np.float64)).data
            minus = fn(Tensor(values - eps, dtype=np.float64)).data
        np.testing.assert_allclose(
            x.grad, (plus - minus) / (2 * eps), rtol=1e-6, atol=1e-9
        )


class TestOps:

    def test_matmul_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_add_incompatible_shapes(self):
        with pytest.raises(DimensionError):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))

    def test_axis_out_of_range(self):
        with pytest.raises(DimensionError):
            T.mean(Tensor(np.zeros((2, 3))), axis=2)

    def test_elementwise_dispatch(self):
        a = Tensor([1.0, -1.0])
        np.testing.assert_allclose(T.elementwise("neg", a).data, [-1.0, 1.0])
        np.testing.assert_allclose(T.elementwise("add", a, a).data, [2.0, -2.0])
        with pytest.raises(ContractError):
            T.elementwise("add", a)
        with pytest.raises(ContractError):
            T.elementwise("tanh", a)

    def test_reduce_max_index(self):
        a = Tensor(np.array([[0.1, 0.9, 0.3], [2.0, -1.0, 0.0]]))
        np.testing.assert_array_equal(T.reduce("max-index", a, axis=1).data, [1, 0])

    def test_softmax_mask_zeroes_hidden_positions(self):
        scores = Tensor(np.zeros((3, 3)))
        where = np.tril(np.ones((3, 3), dtype=bool))
        probs = T.softmax(scores, axis=-1, where=where).data
        np.testing.assert_allclose(probs[0], [1.0, 0.0, 0.0])
        np.testing.assert_allclose(probs[2], [1 / 3, 1 / 3, 1 / 3], rtol=1e-6)
        assert np.all(probs[~where] == 0.0)

    def test_cross_entropy_of_uniform_logits(self):
        logits = Tensor(np.zeros((4, 5)))
        loss = T.cross_entropy(logits, [0, 1, 2, 3])
        assert loss.item() == pytest.approx(np.log(5.0), rel=1e-6)

    def test_cross_entropy_gradient(self):
        logits = _leaf(np.array([[2.0, 0.0], [0.0, 1.0]]))
        T.backward(T.cross_entropy(logits, [0, 1]))
        p = np.exp(logits.data) / np.exp(logits.data).sum(axis=1, keepdims=True)
        p[[0, 1], [0, 1]] -= 1.0
        np.testing.assert_allclose(logits.grad, p / 2)

    def test_unfold_patches_raster_order(self):
        image = Tensor(np.arange(16.0).reshape(1, 4, 4))
        patches = T.unfold_patches(image, 2).data
        assert patches.shape == (4, 4)
        np.testing.assert_array_equal(patches[0], [0, 1, 4, 5])
        np.testing.assert_array_equal(patches[1], [2, 3, 6, 7])
        np.testing.assert_array_equal(patches[3], [10, 11, 14, 15])

    def test_unfold_patches_rejects_uneven_image(self):
        with pytest.raises(DimensionError):
            T.unfold_patches(Tensor(np.zeros((3, 6, 6))), 4)

    def test_slice_flip_concat_roundtrip_gradient(self):
        x = _leaf(np.arange(5.0))
        head = T.slice_axis(x, 0, 0, 2)
        tail = T.flip(T.slice_axis(x, 0, 2, 5), axis=0)
        y = T.concat([tail, head], axis=0)
        np.testing.assert_array_equal(y.data, [4, 3, 2, 0, 1])
        w = Tensor(np.arange(1.0, 6.0), dtype=np.float64)
        T.backward(T.sum_(y * w))
        np.testing.assert_allclose(x.grad, [4.0, 5.0, 3.0, 2.0, 1.0])

    def test_transpose_is_contiguous(self):
        a = Tensor(np.arange(6.0).reshape(2, 3))
        b = T.transpose(a, (1, 0))
        assert b.data.flags["C_CONTIGUOUS"]
        np.testing.assert_array_equal(b.data, a.data.T)


class TestCounting:

    def test_matmul_macs(self):
        with T.count_ops() as counter:
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
        assert counter.macs == 2 * 3 * 4
        assert counter.ops["matmul"] == 1

    def test_counter_is_scoped(self):
        with T.count_ops() as outer:
            T.exp(Tensor([1.0]))
        T.exp(Tensor([1.0]))
        assert outer.ops["exp"] == 1

    def test_fingerprint_is_deterministic(self):
        def run():
            with T.count_ops() as counter:
                x = Tensor(np.ones((3, 3)))
                T.softmax(T.matmul(x, x))
            return counter.fingerprint()

        assert run() == run()


class TestRngAndUtils:

    def test_named_streams_are_reproducible(self):
        a = Rng(3).split("weights").normal((4,))
        b = Rng(3).split("weights").normal((4,))
        c = Rng(3).split("other").normal((4,))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_truncated_normal_bounds(self):
        values = Rng(0).truncated_normal((1000,), std=0.02)
        assert np.all(np.abs(values) <= 0.04 + 1e-6)

    def test_rel_err_and_slope(self):
        assert rel_err([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rel_err([1.0, 2.2], [1.0, 2.0]) == pytest.approx(0.1)
        xs = [1.0, 2.0, 4.0, 8.0]
        assert fit_loglog_slope(xs, [x**2 for x in xs]) == pytest.approx(2.0)
