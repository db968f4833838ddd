"""Deterministic numeric kernel: layers with forward/backward passes, losses, and Adam.

Conventions used throughout:

- Arrays are ``numpy.float64``. Images are ``(H, W, C)``, token sequences are
  ``(L, d)``, all in row-major (C) order.
- Every differentiable layer comes as a ``*_forward`` returning ``(output, cache)``
  and a ``*_backward`` taking ``(grad_output, cache)`` and returning input and
  parameter gradients. Nothing here mutates its inputs.
- Randomness only enters through explicitly seeded ``numpy.random.Generator``
  objects; the functions themselves are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, ValidationError

INIT_SCALE = 0.05  # trainable weights start uniform in [-INIT_SCALE, INIT_SCALE]
PROB_FLOOR = 1e-12  # clamp for log() in cross entropy


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Weight initializer: uniform in [-0.05, 0.05] from the given generator."""
    return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)


def check_finite(name: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite values")
    return array


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _resolve_padding(padding: int | str, kernel: int) -> int:
    if isinstance(padding, str):
        if padding == "same":
            return (kernel - 1) // 2
        if padding == "valid":
            return 0
        raise ConfigurationError(f"padding must be 'same', 'valid' or an int, got {padding!r}")
    if padding < 0:
        raise ConfigurationError(f"padding must be >= 0, got {padding}")
    return int(padding)


def depthwise_forward(x: np.ndarray, kernels: np.ndarray, stride: int = 1,
                      padding: int | str = "same"):
    """Per-channel spatial convolution.

    x: (H, W, C); kernels: (k, k, C); output: (H', W', C) with
    H' = (H + 2p - k) // stride + 1.
    """
    if x.ndim != 3:
        raise DimensionError(f"input must be (H, W, C), got shape {x.shape}")
    if kernels.ndim != 3 or kernels.shape[0] != kernels.shape[1]:
        raise DimensionError(f"depth kernels must be (k, k, C), got shape {kernels.shape}")
    k = kernels.shape[0]
    if k % 2 == 0:
        raise ConfigurationError(f"kernel size must be odd, got {k}")
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if kernels.shape[2] != x.shape[2]:
        raise DimensionError(
            f"channel mismatch: input has {x.shape[2]} channels, depth kernels have {kernels.shape[2]}"
        )
    p = _resolve_padding(padding, k)
    h, w, c = x.shape
    if h + 2 * p < k or w + 2 * p < k:
        raise DimensionError(f"input {h}x{w} too small for kernel {k} with padding {p}")
    xp = np.pad(x, ((p, p), (p, p), (0, 0))) if p else x
    # windows: (H_out_full, W_out_full, C, k, k), strided view over xp
    windows = sliding_window_view(xp, (k, k), axis=(0, 1))[::stride, ::stride]
    y = np.einsum("hwcij,ijc->hwc", windows, kernels)
    cache = (xp, kernels, stride, p, x.shape)
    return y, cache


def depthwise_backward(gy: np.ndarray, cache):
    xp, kernels, stride, p, x_shape = cache
    k = kernels.shape[0]
    windows = sliding_window_view(xp, (k, k), axis=(0, 1))[::stride, ::stride]
    gkernels = np.einsum("hwcij,hwc->ijc", windows, gy)
    gxp = np.zeros_like(xp)
    h_out, w_out = gy.shape[:2]
    for i in range(k):
        for j in range(k):
            gxp[i:i + stride * h_out:stride, j:j + stride * w_out:stride, :] += gy * kernels[i, j, :]
    h, w, _ = x_shape
    gx = gxp[p:p + h, p:p + w, :] if p else gxp
    return gx, gkernels


def pointwise_forward(x: np.ndarray, kernels: np.ndarray):
    """1x1 channel mixing. x: (H, W, C); kernels: (C, C_out)."""
    if kernels.ndim != 2:
        raise DimensionError(f"point kernels must be (C, C_out), got shape {kernels.shape}")
    if x.shape[2] != kernels.shape[0]:
        raise DimensionError(
            f"channel mismatch: input has {x.shape[2]} channels, point kernels expect {kernels.shape[0]}"
        )
    y = x @ kernels
    return y, (x, kernels)


def pointwise_backward(gy: np.ndarray, cache):
    x, kernels = cache
    gkernels = np.tensordot(x, gy, axes=([0, 1], [0, 1]))
    gx = gy @ kernels.T
    return gx, gkernels


def separable_conv_forward(x: np.ndarray, depth_kernels: np.ndarray, point_kernels: np.ndarray,
                           stride: int = 1, padding: int | str = "same"):
    mid, dcache = depthwise_forward(x, depth_kernels, stride=stride, padding=padding)
    y, pcache = pointwise_forward(mid, point_kernels)
    return y, (dcache, pcache)


def separable_conv_backward(gy: np.ndarray, cache):
    dcache, pcache = cache
    gmid, gpoint = pointwise_backward(gy, pcache)
    gx, gdepth = depthwise_backward(gmid, dcache)
    return gx, gdepth, gpoint


def depthwise_separable_conv(x: np.ndarray, depth_kernels: np.ndarray, point_kernels: np.ndarray,
                             stride: int = 1, padding: int | str = "same") -> np.ndarray:
    """Depthwise spatial filtering followed by pointwise (1x1) channel mixing.

    Equivalent to running the two stages explicitly; factoring a k x k x C x C_out
    convolution this way drops the parameter count from k*k*C*C_out to
    k*k*C + C*C_out.
    """
    y, _ = separable_conv_forward(x, depth_kernels, point_kernels, stride=stride, padding=padding)
    return y


# ---------------------------------------------------------------------------
# elementwise / pooling / dense
# ---------------------------------------------------------------------------

def tanh_forward(x: np.ndarray):
    y = np.tanh(x)
    return y, y


def tanh_backward(gy: np.ndarray, cache):
    y = cache
    return gy * (1.0 - y * y)


def avgpool2_forward(x: np.ndarray):
    """2x2 average pooling with stride 2 on (H, W, C); H and W must be even."""
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    y = x.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))
    return y, x.shape


def avgpool2_backward(gy: np.ndarray, cache):
    h, w, c = cache
    gx = np.repeat(np.repeat(gy, 2, axis=0), 2, axis=1) * 0.25
    return gx


def global_avgpool_forward(x: np.ndarray):
    """(H, W, C) -> (C,) spatial mean."""
    return x.mean(axis=(0, 1)), x.shape


def global_avgpool_backward(gy: np.ndarray, cache):
    h, w, c = cache
    return np.broadcast_to(gy / (h * w), (h, w, c)).copy()


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Affine map: x (n,) @ weight (n, m) + bias (m,)."""
    if x.shape[0] != weight.shape[0]:
        raise DimensionError(f"dense expects input of length {weight.shape[0]}, got {x.shape[0]}")
    return x @ weight + bias, (x, weight)


def dense_backward(gy: np.ndarray, cache):
    x, weight = cache
    gw = np.outer(x, gy)
    gb = gy.copy()
    gx = weight @ gy
    return gx, gw, gb


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

@dataclass
class AttentionParams:
    """Per-head projections (heads, d, d_head) plus output projection (d, d)."""
    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_out: np.ndarray

    @property
    def heads(self) -> int:
        return self.w_query.shape[0]

    def as_list(self) -> list[np.ndarray]:
        return [self.w_query, self.w_key, self.w_value, self.w_out]


def make_attention_params(rng: np.random.Generator, d: int, heads: int) -> AttentionParams:
    if d % heads != 0:
        raise ConfigurationError(f"model dim {d} not divisible by head count {heads}")
    dh = d // heads
    return AttentionParams(
        w_query=init_uniform(rng, (heads, d, dh)),
        w_key=init_uniform(rng, (heads, d, dh)),
        w_value=init_uniform(rng, (heads, d, dh)),
        w_out=init_uniform(rng, (d, d)),
    )


def identity_attention_params(d: int, heads: int = 1) -> AttentionParams:
    """Identity projections; with one head the attention output is softmax-averaged values."""
    if d % heads != 0:
        raise ConfigurationError(f"model dim {d} not divisible by head count {heads}")
    dh = d // heads
    wq = np.zeros((heads, d, dh))
    for h in range(heads):
        wq[h, h * dh:(h + 1) * dh, :] = np.eye(dh)
    return AttentionParams(wq, wq.copy(), wq.copy(), np.eye(d))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def mha_forward(x: np.ndarray, params: AttentionParams):
    """Scaled dot-product multi-head self-attention over (L, d); no positional encoding.

    Returns (output (L, d), cache); ``cache.weights`` rows each sum to 1.
    """
    if x.ndim != 2:
        raise DimensionError(f"attention input must be (L, d), got shape {x.shape}")
    l, d = x.shape
    if l < 1:
        raise ValidationError("attention needs at least one position")
    heads = params.heads
    if d % heads != 0:
        raise ConfigurationError(f"model dim {d} not divisible by head count {heads}")
    if params.w_query.shape[1] != d:
        raise DimensionError(
            f"projection expects dim {params.w_query.shape[1]}, input has dim {d}"
        )
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    q = np.einsum("ld,hde->hle", x, params.w_query)
    k = np.einsum("ld,hde->hle", x, params.w_key)
    v = np.einsum("ld,hde->hle", x, params.w_value)
    scores = np.einsum("hle,hme->hlm", q, k) * scale
    weights = softmax(scores, axis=-1)  # (heads, L, L)
    headed = np.einsum("hlm,hme->hle", weights, v)  # (heads, L, dh)
    concat = headed.transpose(1, 0, 2).reshape(l, d)
    y = concat @ params.w_out
    cache = AttentionCache(x, params, q, k, v, weights, concat, scale)
    return y, cache


@dataclass
class AttentionCache:
    x: np.ndarray
    params: AttentionParams
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    concat: np.ndarray
    scale: float


def mha_backward(gy: np.ndarray, cache: AttentionCache):
    x, params = cache.x, cache.params
    l, d = x.shape
    heads = params.heads
    dh = d // heads
    gw_out = cache.concat.T @ gy
    gconcat = gy @ params.w_out.T
    gheaded = gconcat.reshape(l, heads, dh).transpose(1, 0, 2)
    gweights = np.einsum("hle,hme->hlm", gheaded, cache.v)
    gv = np.einsum("hlm,hle->hme", cache.weights, gheaded)
    # softmax backward, rowwise over the last axis
    dot = np.sum(gweights * cache.weights, axis=-1, keepdims=True)
    gscores = cache.weights * (gweights - dot)
    gq = np.einsum("hlm,hme->hle", gscores, cache.k) * cache.scale
    gk = np.einsum("hlm,hle->hme", gscores, cache.q) * cache.scale
    gw_query = np.einsum("ld,hle->hde", x, gq)
    gw_key = np.einsum("ld,hle->hde", x, gk)
    gw_value = np.einsum("ld,hle->hde", x, gv)
    gx = (np.einsum("hle,hde->ld", gq, params.w_query)
          + np.einsum("hle,hde->ld", gk, params.w_key)
          + np.einsum("hle,hde->ld", gv, params.w_value))
    grads = AttentionParams(gw_query, gw_key, gw_value, gw_out)
    return gx, grads


def multi_head_attention(x: np.ndarray, params: AttentionParams) -> np.ndarray:
    y, _ = mha_forward(x, params)
    return y


def attention_weights(x: np.ndarray, params: AttentionParams) -> np.ndarray:
    """The (heads, L, L) softmax attention matrix; every row sums to 1."""
    _, cache = mha_forward(x, params)
    return cache.weights


# ---------------------------------------------------------------------------
# losses and metrics
# ---------------------------------------------------------------------------

def cross_entropy(predicted_distribution: np.ndarray, true_label: int) -> float:
    """-log p(true_label) with p clamped at 1e-12.

    ``predicted_distribution`` must be a probability vector: entries in [0, 1],
    summing to 1 within 1e-6.
    """
    p = np.asarray(predicted_distribution, dtype=float)
    if p.ndim != 1:
        raise ValidationError(f"distribution must be 1-D, got shape {p.shape}")
    if np.any(p < -1e-9) or np.any(p > 1.0 + 1e-9):
        raise ValidationError("distribution entries must lie in [0, 1]")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"distribution sums to {total}, expected 1 within 1e-6")
    if not isinstance(true_label, (int, np.integer)):
        raise ValidationError(f"label must be an integer index, got {true_label!r}")
    if true_label < 0 or true_label >= p.shape[0]:
        raise IndexError(f"label {true_label} out of range for {p.shape[0]} classes")
    return float(-np.log(max(float(p[true_label]), PROB_FLOOR)))


def softmax_cross_entropy_forward(logits: np.ndarray, label: int):
    """Fused softmax + cross entropy; the loss value equals
    ``cross_entropy(softmax(logits), label)`` exactly."""
    probs = softmax(logits)
    loss = cross_entropy(probs, label)
    return loss, (probs, label)


def softmax_cross_entropy_backward(cache):
    probs, label = cache
    g = probs.copy()
    g[label] -= 1.0
    return g


def mse_forward(predicted: np.ndarray | float, target: np.ndarray | float):
    p = np.atleast_1d(np.asarray(predicted, dtype=float))
    t = np.atleast_1d(np.asarray(target, dtype=float))
    if p.shape != t.shape:
        raise DimensionError(f"mse shape mismatch: {p.shape} vs {t.shape}")
    diff = p - t
    return float(np.mean(diff * diff)), diff


def mse_backward(cache):
    diff = cache
    return 2.0 * diff / diff.size


def mae_in_months(predicted, actual) -> float:
    """Mean absolute error between two month-valued sequences."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.ndim != 1 or a.ndim != 1:
        raise ValidationError("mae_in_months expects flat sequences")
    if p.size == 0:
        raise ValidationError("mae_in_months needs at least one value")
    if p.shape != a.shape:
        raise ValidationError(f"length mismatch: {p.size} predictions vs {a.size} actuals")
    return float(np.mean(np.abs(p - a)))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Optimizer state for one parameter tensor.

    Defaults mirror the standard Keras parameter set: lr 0.001, beta_1 0.9,
    beta_2 0.999, epsilon 1e-07, decay 0.0, amsgrad off.
    """
    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 0.001
    beta_1: float = 0.9
    beta_2: float = 0.999
    epsilon: float = 1e-7
    amsgrad: bool = False
    decay: float = 0.0
    max_second_moment: np.ndarray | None = None


def fresh_adam_state(shape: tuple[int, ...], **hyper) -> AdamState:
    return AdamState(step_count=0, first_moment=np.zeros(shape),
                     second_moment=np.zeros(shape), **hyper)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; pure, returns new (params, state)."""
    if params.shape != grads.shape:
        raise ValidationError(f"shape mismatch: params {params.shape} vs grads {grads.shape}")
    if params.shape != state.first_moment.shape:
        raise ValidationError(
            f"shape mismatch: params {params.shape} vs moments {state.first_moment.shape}"
        )
    if state.step_count < 0:
        raise ValidationError(f"step_count must be >= 0, got {state.step_count}")
    t = state.step_count + 1
    b1, b2 = state.beta_1, state.beta_2
    lr = state.learning_rate
    if state.decay:
        lr = lr / (1.0 + state.decay * state.step_count)
    m = b1 * state.first_moment + (1.0 - b1) * grads
    v = b2 * state.second_moment + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    if state.amsgrad:
        prev = state.max_second_moment if state.max_second_moment is not None else np.zeros_like(v_hat)
        v_max = np.maximum(prev, v_hat)
        denom = np.sqrt(v_max) + state.epsilon
    else:
        v_max = None
        denom = np.sqrt(v_hat) + state.epsilon
    new_params = params - lr * m_hat / denom
    new_state = replace(state, step_count=t, first_moment=m, second_moment=v,
                        max_second_moment=v_max)
    return new_params, new_state


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_param: int
    worst_index: tuple
    analytic_at_worst: float
    numeric_at_worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def numerical_gradient_check(loss_fn, params: list[np.ndarray], tolerance: float = 1e-4,
                             step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(params) -> (loss, grads)`` must be pure and deterministic. The
    per-element error is |analytic - numeric| / max(1, |analytic|, |numeric|);
    the report carries the maximum over all elements, never raises.
    """
    _, analytic = loss_fn(params)
    worst = GradCheckReport(0.0, -1, (), 0.0, 0.0, tolerance)
    for pi, p in enumerate(params):
        grad = analytic[pi]
        for idx in np.ndindex(p.shape):
            bumped = [q.copy() for q in params]
            bumped[pi][idx] += step
            up, _ = loss_fn(bumped)
            bumped[pi][idx] -= 2.0 * step
            down, _ = loss_fn(bumped)
            numeric = (up - down) / (2.0 * step)
            a = float(grad[idx])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if rel > worst.max_relative_error:
                worst = GradCheckReport(rel, pi, idx, a, numeric, tolerance)
    return worst
