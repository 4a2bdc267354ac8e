"""
Selective state-space token mixing (minimal SSD formulation).

Per head, with H_0 = 0:

    alpha_t = exp(dt_t * a)
    H_t     = alpha_t * H_{t-1} + dt_t * (B_t outer x_t)
    y_t     = C_t^T H_t + D * x_t

`ssd_scan_recurrent` evaluates this position by position. `ssd_scan_chunked`
evaluates the same map chunk by chunk: inside a chunk the output is a
decay-weighted matrix product, across chunks a [heads, d_state, head_dim] state
is carried. B and C are shared by all heads (a single group) when their head
axis has extent 1.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from adventurer import tensor as T
from adventurer.errors import ContractError, DimensionError
from adventurer.layers.abc import ParamRecord, prefixed
from adventurer.layers.linear import Linear
from adventurer.rng import Rng
from adventurer.sequence import TokenSequence
from adventurer.tensor import Tensor

logger = logging.getLogger(__name__)

EXPAND = 2
CONV_WIDTH = 4
DT_MIN, DT_MAX = 1e-3, 1e-1
A_INIT_RANGE = (1.0, 16.0)


def _check_scan_args(x, dt, B, C, a, D, unit_decay) -> Tuple[int, int, int, int]:
    if x.ndim != 2 or dt.ndim != 2 or B.ndim != 3 or C.ndim != 3:
        raise DimensionError(
            f"scan expects x [L, d_inner], dt [L, H], B/C [L, H, N]; got "
            f"{x.shape}, {dt.shape}, {B.shape}, {C.shape}"
        )
    length, d_inner = x.shape
    heads = dt.shape[1]
    n = B.shape[2]
    if (
        dt.shape[0] != length
        or B.shape[0] != length
        or C.shape != B.shape
        or B.shape[1] not in (1, heads)
        or a.shape != (heads,)
        or D.shape != (d_inner,)
        or d_inner % heads
    ):
        raise DimensionError(
            f"Inconsistent scan shapes: x {x.shape}, dt {dt.shape}, B {B.shape}, "
            f"C {C.shape}, a {a.shape}, D {D.shape}"
        )
    if not np.all(dt.data > 0):
        raise ContractError("scan requires dt > 0 at every position")
    if not unit_decay and not np.all(a.data < 0):
        raise ContractError("scan requires a < 0 for every head")
    return length, heads, n, d_inner // heads


def _log_decay(dt: Tensor, a: Tensor, unit_decay: bool) -> Tensor:
    if unit_decay:
        return Tensor(np.zeros(dt.shape), dtype=dt.dtype)
    return dt * a


def ssd_scan_recurrent(
    x: Tensor,
    dt: Tensor,
    B: Tensor,
    C: Tensor,
    a: Tensor,
    D: Tensor,
    *,
    unit_decay: bool = False,
) -> Tensor:
    """
    Evaluate the scan one position at a time.

    Args:
        x: [L, d_inner] inputs.
        dt: [L, H] positive step sizes.
        B, C: [L, H, N] or [L, 1, N] input/output projections of the state.
        a: [H] negative per-head decay rates.
        D: [d_inner] skip weights.
        unit_decay: Force alpha_t = 1 (test hook; the scan becomes a prefix sum).

    Returns:
        Tensor: [L, d_inner].

    Raises:
        ContractError: If any dt <= 0, or any a >= 0 without `unit_decay`.
    """
    length, heads, n, p = _check_scan_args(x, dt, B, C, a, D, unit_decay)
    groups = B.shape[1]
    xs = T.reshape(x, (length, heads, p))
    alpha = T.exp(_log_decay(dt, a, unit_decay))
    state: Optional[Tensor] = None
    rows = []
    for t in range(length):
        x_t = T.reshape(T.slice_axis(xs, 0, t, t + 1), (heads, 1, p))
        dt_t = T.reshape(T.slice_axis(dt, 0, t, t + 1), (heads, 1, 1))
        b_t = T.reshape(T.slice_axis(B, 0, t, t + 1), (groups, n, 1))
        c_t = T.reshape(T.slice_axis(C, 0, t, t + 1), (groups, 1, n))
        inject = b_t * x_t * dt_t
        if state is None:
            state = inject
        else:
            decay = T.reshape(T.slice_axis(alpha, 0, t, t + 1), (heads, 1, 1))
            state = state * decay + inject
        rows.append(T.reshape(T.matmul(c_t, state), (1, heads * p)))
    return T.concat(rows, axis=0) + x * D


def ssd_scan_chunked(
    x: Tensor,
    dt: Tensor,
    B: Tensor,
    C: Tensor,
    a: Tensor,
    D: Tensor,
    chunk_len: int,
    *,
    unit_decay: bool = False,
) -> Tensor:
    """
    Evaluate the scan in chunks of `chunk_len` positions.

    Same arguments and result as `ssd_scan_recurrent`; the last chunk may be
    shorter.

    Raises:
        ContractError: If `chunk_len` < 1, any dt <= 0, or any a >= 0.
    """
    if chunk_len < 1:
        raise ContractError(f"chunk_len must be >= 1, got {chunk_len}")
    length, heads, n, p = _check_scan_args(x, dt, B, C, a, D, unit_decay)
    xs = T.reshape(x, (length, heads, p))
    log_decay = _log_decay(dt, a, unit_decay)
    state: Optional[Tensor] = None
    outs = []
    for start in range(0, length, chunk_len):
        stop = min(start + chunk_len, length)
        q = stop - start
        x_c = T.transpose(T.slice_axis(xs, 0, start, stop), (1, 0, 2))  # [H, q, P]
        dt_c = T.transpose(T.slice_axis(dt, 0, start, stop), (1, 0))  # [H, q]
        b_c = T.transpose(T.slice_axis(B, 0, start, stop), (1, 0, 2))  # [G, q, N]
        c_c = T.transpose(T.slice_axis(C, 0, start, stop), (1, 0, 2))  # [G, q, N]
        ld = T.transpose(T.slice_axis(log_decay, 0, start, stop), (1, 0))  # [H, q]

        # seg[h, t, s] = sum of ld over (s, t], zero on and above the diagonal
        strict = np.tril(np.ones((q, q), dtype=x.dtype), k=-1)
        lower = np.tril(np.ones((q, q), dtype=x.dtype))
        seg = T.cumsum(T.reshape(ld, (heads, q, 1)) * strict, axis=1)
        decay = T.exp(seg) * lower  # [H, q, q]

        b_t = T.transpose(b_c, (0, 2, 1))  # [G, N, q]
        weights = T.matmul(c_c, b_t) * decay * T.reshape(dt_c, (heads, 1, q))
        y_c = T.matmul(weights, x_c)  # [H, q, P]

        cum = T.cumsum(ld, axis=1)  # [H, q]
        if state is not None:
            carried = T.matmul(c_c, state)  # [H, q, P]
            y_c = y_c + carried * T.exp(T.reshape(cum, (heads, q, 1)))

        to_end = T.exp(T.slice_axis(seg, 1, q - 1, q)) * T.reshape(dt_c, (heads, 1, q))
        contrib = T.matmul(b_t * to_end, x_c)  # [H, N, P]
        if state is None:
            state = contrib
        else:
            last = T.slice_axis(cum, 1, q - 1, q)
            chunk_decay = T.exp(T.reshape(last, (heads, 1, 1)))
            state = state * chunk_decay + contrib
        outs.append(T.reshape(T.transpose(y_c, (1, 0, 2)), (q, heads * p)))
    return T.concat(outs, axis=0) + x * D


@dataclass
class SsdLayerParams(ParamRecord):
    """
    Learnable parameters of one SSD token mixer.

    Attributes:
        in_proj (Linear): d -> 2*d_inner + 2*d_state + n_heads, split (z, x, B, C, dt).
        out_proj (Linear): d_inner -> d.
        dt_bias (Tensor): [n_heads], added before softplus.
        a_log (Tensor): [n_heads]; the decay rate is a = -exp(a_log) < 0.
        D (Tensor): [d_inner] skip weights.
        conv_weight (Optional[Tensor]): [d_inner + 2*d_state, CONV_WIDTH] depthwise
            taps.
        conv_bias (Optional[Tensor]): [d_inner + 2*d_state].
    """

    in_proj: Linear
    out_proj: Linear
    dt_bias: Tensor
    a_log: Tensor
    D: Tensor
    d_inner: int
    d_state: int
    head_dim: int
    conv_weight: Optional[Tensor] = None
    conv_bias: Optional[Tensor] = None
    scan_impl: str = "chunked"
    chunk_len: int = 64

    @property
    def n_heads(self) -> int:
        return self.d_inner // self.head_dim

    @property
    def a(self) -> Tensor:
        return -T.exp(self.a_log)

    @staticmethod
    def proj_width(d_inner: int, d_state: int, n_heads: int) -> int:
        return 2 * d_inner + 2 * d_state + n_heads

    @classmethod
    def init(
        cls,
        rng: Rng,
        dim: int,
        d_state: int,
        head_dim: int,
        conv1d: bool = False,
        scan_impl: str = "chunked",
        chunk_len: int = 64,
    ) -> "SsdLayerParams":
        d_inner = EXPAND * dim
        heads = d_inner // head_dim
        log_dt = rng.uniform(np.log(DT_MIN), np.log(DT_MAX), (heads,), dtype=np.float64)
        dt = np.exp(log_dt)
        # inverse softplus, so that softplus(dt_bias) == dt at zero input
        dt_bias = dt + np.log(-np.expm1(-dt))
        a = rng.split("a").uniform(*A_INIT_RANGE, (heads,), dtype=np.float64)
        proj_width = cls.proj_width(d_inner, d_state, heads)
        conv_weight = conv_bias = None
        if conv1d:
            channels = d_inner + 2 * d_state
            bound = 1.0 / np.sqrt(CONV_WIDTH)
            conv_weight = Tensor(
                rng.split("conv").uniform(-bound, bound, (channels, CONV_WIDTH)),
                requires_grad=True,
            )
            conv_bias = Tensor(np.zeros(channels), requires_grad=True)
        return cls(
            in_proj=Linear.init(rng.split("in_proj"), dim, proj_width, bias=False),
            out_proj=Linear.init(rng.split("out_proj"), d_inner, dim, bias=False),
            dt_bias=Tensor(dt_bias, requires_grad=True),
            a_log=Tensor(np.log(a), requires_grad=True),
            D=Tensor(np.ones(d_inner), requires_grad=True),
            d_inner=d_inner,
            d_state=d_state,
            head_dim=head_dim,
            conv_weight=conv_weight,
            conv_bias=conv_bias,
            scan_impl=scan_impl,
            chunk_len=chunk_len,
        )

    @classmethod
    def shapes(
        cls, dim: int, d_state: int, head_dim: int, conv1d: bool = False
    ) -> Dict[str, Tuple[int, ...]]:
        d_inner = EXPAND * dim
        heads = d_inner // head_dim
        out = prefixed(
            "in_proj",
            Linear.shapes(dim, cls.proj_width(d_inner, d_state, heads), bias=False),
        )
        out.update(prefixed("out_proj", Linear.shapes(d_inner, dim, bias=False)))
        out.update({"dt_bias": (heads,), "a_log": (heads,), "D": (d_inner,)})
        if conv1d:
            out["conv_weight"] = (d_inner + 2 * d_state, CONV_WIDTH)
            out["conv_bias"] = (d_inner + 2 * d_state,)
        return out

    def named_tensors(self) -> Dict[str, Tensor]:
        out = prefixed("in_proj", self.in_proj.named_tensors())
        out.update(prefixed("out_proj", self.out_proj.named_tensors()))
        out.update({"dt_bias": self.dt_bias, "a_log": self.a_log, "D": self.D})
        if self.conv_weight is not None:
            out["conv_weight"] = self.conv_weight
            out["conv_bias"] = self.conv_bias
        return out


def causal_conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Depthwise convolution over rows of `x` [L, C] that never looks ahead."""
    length, channels = x.shape
    width = weight.shape[1]
    pad = Tensor(np.zeros((width - 1, channels)), dtype=x.dtype)
    padded = T.concat([pad, x], axis=0)
    out = bias
    for k in range(width):
        tap = T.reshape(T.slice_axis(weight, 1, k, k + 1), (channels,))
        out = out + T.slice_axis(padded, 0, k, k + length) * tap
    return out


def mamba2_tensor(x: Tensor, params: SsdLayerParams) -> Tensor:
    """SSD token mixing over rows of `x` [L, d]."""
    length = x.shape[0]
    di, n, heads = params.d_inner, params.d_state, params.n_heads
    proj = params.in_proj(x)
    z = T.slice_axis(proj, 1, 0, di)
    xbc = T.slice_axis(proj, 1, di, 2 * di + 2 * n)
    dt_raw = T.slice_axis(proj, 1, 2 * di + 2 * n, 2 * di + 2 * n + heads)
    if params.conv_weight is not None:
        xbc = T.silu(causal_conv1d(xbc, params.conv_weight, params.conv_bias))
    xs = T.slice_axis(xbc, 1, 0, di)
    b = T.reshape(T.slice_axis(xbc, 1, di, di + n), (length, 1, n))
    c = T.reshape(T.slice_axis(xbc, 1, di + n, di + 2 * n), (length, 1, n))
    dt = T.softplus(dt_raw + params.dt_bias)
    if params.scan_impl == "recurrent":
        y = ssd_scan_recurrent(xs, dt, b, c, params.a, params.D)
    else:
        y = ssd_scan_chunked(xs, dt, b, c, params.a, params.D, params.chunk_len)
    return params.out_proj(y * T.silu(z))


def mamba2_mixer(seq: TokenSequence, params: SsdLayerParams) -> TokenSequence:
    """
    Mamba-2-style token mixer.

    in_proj splits into (z, x, B, C, dt_raw); dt = softplus(dt_raw + dt_bias);
    y = scan(x, dt, B, C, a, D); output = out_proj(y * silu(z)).
    """
    return seq.with_data(mamba2_tensor(seq.data, params))
