"""
Independent 64-bit reference implementations.

Each oracle works on plain numpy float64 arrays with explicit loops and does not
call the production layers, so agreement between the two is evidence rather
than a tautology.
"""

from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


def _f64(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.array(data, dtype=np.float64)


def oracle_ssd_reference(
    x, dt, B, C, a, D, *, unit_decay: bool = False
) -> np.ndarray:
    """
    Position-by-position, head-by-head SSD recurrence.

    Args:
        x: [L, H * P]; dt: [L, H]; B, C: [L, H or 1, N]; a: [H]; D: [H * P].
    """
    x, dt, B, C, a, D = (_f64(v) for v in (x, dt, B, C, a, D))
    length, d_inner = x.shape
    heads = dt.shape[1]
    p = d_inner // heads
    n = B.shape[2]
    y = np.zeros((length, d_inner))
    for h in range(heads):
        g = h if B.shape[1] == heads else 0
        state = np.zeros((n, p))
        for t in range(length):
            alpha = 1.0 if unit_decay else np.exp(dt[t, h] * a[h])
            x_t = x[t, h * p : (h + 1) * p]
            for i in range(n):
                state[i, :] = alpha * state[i, :] + dt[t, h] * B[t, g, i] * x_t
            for j in range(p):
                acc = 0.0
                for i in range(n):
                    acc += C[t, g, i] * state[i, j]
                y[t, h * p + j] = acc + D[h * p + j] * x_t[j]
    return y


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    out = np.zeros_like(scores)
    for r in range(scores.shape[0]):
        row = scores[r]
        m = np.max(row)
        e = np.exp(row - m)
        out[r] = e / e.sum()
    return out


def oracle_masked_attention(
    x,
    wq,
    bq,
    wk,
    bk,
    wv,
    bv,
    wo,
    bo,
    n_heads: int,
    causal: bool = True,
) -> np.ndarray:
    """Full attention with an explicit additive -inf mask above the diagonal."""
    x, wq, bq, wk, bk, wv, bv, wo, bo = (
        _f64(v) for v in (x, wq, bq, wk, bk, wv, bv, wo, bo)
    )
    length, d = x.shape
    dh = d // n_heads
    q, k, v = x @ wq + bq, x @ wk + bk, x @ wv + bv
    mask = np.zeros((length, length))
    if causal:
        for r in range(length):
            for c in range(r + 1, length):
                mask[r, c] = -np.inf
    ctx = np.zeros((length, d))
    for h in range(n_heads):
        cols = slice(h * dh, (h + 1) * dh)
        scores = q[:, cols] @ k[:, cols].T / np.sqrt(dh) + mask
        ctx[:, cols] = _softmax_rows(scores) @ v[:, cols]
    return ctx @ wo + bo


def oracle_rms_norm(x, scale, eps: float) -> np.ndarray:
    x, scale = _f64(x), _f64(scale)
    out = np.zeros_like(x)
    for r in range(x.shape[0]):
        ms = sum(v * v for v in x[r]) / x.shape[1]
        out[r] = x[r] * scale / np.sqrt(ms + eps)
    return out


def oracle_swiglu(x, w_gate, w_up, w_down) -> np.ndarray:
    """Scalar-loop SwiGLU for rows of `x`."""
    x, w_gate, w_up, w_down = (_f64(v) for v in (x, w_gate, w_up, w_down))
    rows, d = x.shape
    hidden = w_gate.shape[1]
    out = np.zeros((rows, w_down.shape[1]))
    for r in range(rows):
        act = np.zeros(hidden)
        for j in range(hidden):
            g = sum(x[r, i] * w_gate[i, j] for i in range(d))
            u = sum(x[r, i] * w_up[i, j] for i in range(d))
            act[j] = g / (1.0 + np.exp(-g)) * u
        out[r] = act @ w_down
    return out


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def oracle_plain_vit(image, weights: Dict[str, np.ndarray], cfg) -> np.ndarray:
    """
    Textbook pre-norm ViT forward with the class token in front.

    Reads weights named as the model's parameters; the positional row of the
    class token is the last table row. Returns the final sequence reordered to
    [patches..., cls] so it lines up with the model's layout.
    """
    w = {k: _f64(v) for k, v in weights.items()}
    img = _f64(image)
    p, d = cfg.patch_size, cfg.dim
    side = img.shape[1] // p
    patches = []
    for gi in range(side):
        for gj in range(side):
            patch = img[:, gi * p : (gi + 1) * p, gj * p : (gj + 1) * p]
            patches.append(patch.reshape(-1))
    tokens = np.stack(patches) @ w["patch_embed.weight"] + w["patch_embed.bias"]
    n = tokens.shape[0]
    table = w["pos_embed.table"]
    x = np.concatenate([w["cls_token"] + table[n : n + 1], tokens + table[:n]], axis=0)

    def norm(v, key):
        if cfg.norm != "rms":
            return v
        return oracle_rms_norm(v, w[key], cfg.norm_eps)

    heads = cfg.n_attn_heads
    for i in range(cfg.depth):
        pre = f"blocks.{i}."
        tm = pre + "token_mixer."
        h = norm(x, pre + "norm1")
        x = x + oracle_masked_attention(
            h,
            w[tm + "q.weight"],
            w[tm + "q.bias"],
            w[tm + "k.weight"],
            w[tm + "k.bias"],
            w[tm + "v.weight"],
            w[tm + "v.bias"],
            w[tm + "out.weight"],
            w[tm + "out.bias"],
            heads,
            causal=False,
        )
        h = norm(x, pre + "norm2")
        cm = pre + "channel_mixer."
        if cfg.channel_mixer == "plain-mlp":
            hidden = _gelu(h @ w[cm + "up.weight"] + w[cm + "up.bias"])
            x = x + hidden @ w[cm + "down.weight"] + w[cm + "down.bias"]
        elif cfg.channel_mixer == "swiglu":
            g = h @ w[cm + "gate.weight"]
            act = g / (1.0 + np.exp(-g)) * (h @ w[cm + "up.weight"])
            x = x + act @ w[cm + "down.weight"]
    return np.concatenate([x[1:], x[:1]], axis=0)


def oracle_finite_difference(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    coords: Optional[Iterable[Tuple[int, ...]]] = None,
    eps: float = 1e-3,
) -> np.ndarray:
    """
    Central differences of scalar `f` at `x` in float64.

    Args:
        f: Scalar function of an array shaped like `x`.
        x: Evaluation point.
        coords: Indices to differentiate; all indices when None.
        eps: Step size.

    Returns:
        np.ndarray: Derivatives in the order of `coords`.
    """
    x = np.array(x, dtype=np.float64)
    if coords is None:
        coords = list(np.ndindex(*x.shape))
    out: List[float] = []
    for idx in coords:
        orig = x[idx]
        x[idx] = orig + eps
        f_plus = f(x)
        x[idx] = orig - eps
        f_minus = f(x)
        x[idx] = orig
        out.append((f_plus - f_minus) / (2.0 * eps))
    return np.asarray(out)


def rel_errors(
    analytic: Sequence[float], numeric: Sequence[float], floor: float
) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
