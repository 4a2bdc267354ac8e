import numpy as np
import pytest

from adventurer import tensor as T
from adventurer.errors import ContractError, DimensionError
from adventurer.layers import ssd_scan_chunked, ssd_scan_recurrent
from adventurer.rng import Rng
from adventurer.tensor import Tensor

LENGTH, HEADS, HEAD_DIM, STATE = 9, 2, 3, 4


def _inputs(seed: int = 0, groups: int = 1, length: int = LENGTH):
    rng = Rng(seed)
    d_inner = HEADS * HEAD_DIM

    def leaf(values):
        return Tensor(values, requires_grad=True, dtype=np.float64)

    return dict(
        x=leaf(rng.split("x").normal((length, d_inner), dtype=np.float64)),
        dt=leaf(rng.split("dt").uniform(0.05, 0.5, (length, HEADS), np.float64)),
        B=leaf(rng.split("B").normal((length, groups, STATE), dtype=np.float64)),
        C=leaf(rng.split("C").normal((length, groups, STATE), dtype=np.float64)),
        a=leaf(-rng.split("a").uniform(0.5, 2.0, (HEADS,), np.float64)),
        D=leaf(rng.split("D").normal((d_inner,), dtype=np.float64)),
    )


class TestScanEquivalence:

    @pytest.mark.parametrize("chunk_len", [1, 2, 4, LENGTH, 16])
    def test_chunked_matches_recurrent(self, chunk_len):
        args = _inputs()
        recurrent = ssd_scan_recurrent(**args).data
        chunked = ssd_scan_chunked(**args, chunk_len=chunk_len).data
        np.testing.assert_allclose(chunked, recurrent, rtol=1e-9, atol=1e-10)

    def test_per_head_projections(self):
        args = _inputs(seed=1, groups=HEADS)
        np.testing.assert_allclose(
            ssd_scan_chunked(**args, chunk_len=4).data,
            ssd_scan_recurrent(**args).data,
            rtol=1e-9,
            atol=1e-10,
        )

    def test_gradients_agree(self):
        grads = []
        for scan in ("recurrent", "chunked"):
            args = _inputs(seed=2)
            if scan == "recurrent":
                y = ssd_scan_recurrent(**args)
            else:
                y = ssd_scan_chunked(**args, chunk_len=4)
            T.backward(T.sum_(y * y))
            grads.append({k: t.grad for k, t in args.items()})
        for name in grads[0]:
            np.testing.assert_allclose(
                grads[1][name], grads[0][name], rtol=1e-8, atol=1e-10
            )

    def test_single_position(self):
        args = _inputs(length=1)
        out = ssd_scan_chunked(**args, chunk_len=4).data
        x, dt = args["x"].data, args["dt"].data
        B, C, D = args["B"].data, args["C"].data, args["D"].data
        bc = float(B[0, 0] @ C[0, 0])
        expected = x[0] * (np.repeat(dt[0], HEAD_DIM) * bc + D)
        np.testing.assert_allclose(out[0], expected, rtol=1e-12)

    def test_causal_prefix(self):
        args = _inputs(seed=3)
        base = ssd_scan_chunked(**args, chunk_len=4).data
        x = args["x"].numpy()
        x[6:] += 5.0
        args["x"] = Tensor(x, dtype=np.float64)
        moved = ssd_scan_chunked(**args, chunk_len=4).data
        np.testing.assert_allclose(base[:6], moved[:6], rtol=1e-12, atol=1e-12)


class TestUnitDecay:

    def test_reduces_to_prefix_sum(self):
        length = 6
        x = Tensor(np.arange(1.0, 7.0).reshape(length, 1), dtype=np.float64)
        ones = np.ones((length, 1, 1))
        args = dict(
            x=x,
            dt=Tensor(np.ones((length, 1)), dtype=np.float64),
            B=Tensor(ones, dtype=np.float64),
            C=Tensor(ones, dtype=np.float64),
            a=Tensor(np.zeros(1), dtype=np.float64),
            D=Tensor(np.zeros(1), dtype=np.float64),
        )
        expected = np.cumsum(np.arange(1.0, 7.0)).reshape(length, 1)
        np.testing.assert_allclose(
            ssd_scan_recurrent(**args, unit_decay=True).data, expected
        )
        np.testing.assert_allclose(
            ssd_scan_chunked(**args, chunk_len=4, unit_decay=True).data, expected
        )


class TestScanContracts:

    def test_non_positive_step(self):
        args = _inputs()
        dt = args["dt"].numpy()
        dt[3, 0] = 0.0
        args["dt"] = Tensor(dt, dtype=np.float64)
        with pytest.raises(ContractError):
            ssd_scan_recurrent(**args)
        with pytest.raises(ContractError):
            ssd_scan_chunked(**args, chunk_len=4)

    def test_non_negative_decay(self):
        args = _inputs()
        args["a"] = Tensor(np.array([-1.0, 0.0]), dtype=np.float64)
        with pytest.raises(ContractError):
            ssd_scan_chunked(**args, chunk_len=4)

    def test_chunk_length_must_be_positive(self):
        with pytest.raises(ContractError):
            ssd_scan_chunked(**_inputs(), chunk_len=0)

    def test_shape_mismatch(self):
        args = _inputs()
        args["D"] = Tensor(np.ones(HEADS * HEAD_DIM + 1), dtype=np.float64)
        with pytest.raises(DimensionError):
            ssd_scan_recurrent(**args)
