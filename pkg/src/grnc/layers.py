"""Differentiable building blocks with explicit backward passes.

Convolution, depth-to-space, generalized divisive normalization (GDN) and
its decoder-side inverse, a convolutional LSTM cell, and the binarizer.
Forward functions are pure; each backward consumes the tensors the caller
saved from the forward pass and returns exact analytic gradients,
validated against central finite differences by the gradcheck suite.

Conventions fixed here:
  * convolution is cross-correlation (no kernel flip),
  * LSTM gates split into four equal channel groups ordered
    [forget, input, candidate, output],
  * the sign binarizer maps 0 to +1 so bitstreams are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import sigmoid

GDN_BETA_FLOOR = 1e-6
BINARIZE_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# 2-D convolution
# ---------------------------------------------------------------------------

@dataclass
class ConvParams:
    """Filter bank (out_ch, in_ch, k, k), per-channel bias, stride, padding."""

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ValueError(f"conv weight must be (out, in, k, k), got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"conv bias shape {self.bias.shape} does not match out channels "
                f"{self.weight.shape[0]}"
            )
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


def conv2d_output_hw(h: int, w: int, kernel: int, stride: int, padding: int) -> tuple[int, int]:
    if h + 2 * padding < kernel or w + 2 * padding < kernel:
        raise ValueError(
            f"kernel {kernel} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    return ((h + 2 * padding - kernel) // stride + 1,
            (w + 2 * padding - kernel) // stride + 1)


def _im2col(x: np.ndarray, kernel: int, stride: int, padding: int):
    """Unfold (B,C,H,W) into a (C*k*k, B*Ho*Wo) patch matrix."""
    b, c, h, w = x.shape
    ho, wo = conv2d_output_hw(h, w, kernel, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    sb, sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(c, kernel, kernel, b, ho, wo),
        strides=(sc, sh, sw, sb, stride * sh, stride * sw),
    )
    return windows.reshape(c * kernel * kernel, b * ho * wo), (ho, wo)


def _col2im(grad_cols: np.ndarray, x_shape, kernel: int, stride: int, padding: int,
            ho: int, wo: int) -> np.ndarray:
    b, c, h, w = x_shape
    grad_windows = grad_cols.reshape(c, kernel, kernel, b, ho, wo)
    hp, wp = h + 2 * padding, w + 2 * padding
    grad_padded = np.zeros((b, c, hp, wp), dtype=grad_cols.dtype)
    for ki in range(kernel):
        for kj in range(kernel):
            grad_padded[:, :, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += \
                grad_windows[:, ki, kj].transpose(1, 0, 2, 3)
    if padding:
        return np.ascontiguousarray(grad_padded[:, :, padding:padding + h, padding:padding + w])
    return grad_padded


def conv2d_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Affine cross-correlation; stride realizes subsampling."""
    if x.ndim != 4:
        raise ValueError(f"conv input must be 4-D (B,C,H,W), got {x.shape}")
    if x.shape[1] != p.in_channels:
        raise ValueError(
            f"conv input has {x.shape[1]} channels, weight expects {p.in_channels}"
        )
    cols, (ho, wo) = _im2col(x, p.kernel, p.stride, p.padding)
    out = p.weight.reshape(p.out_channels, -1) @ cols
    out += p.bias[:, None]
    return np.ascontiguousarray(
        out.reshape(p.out_channels, x.shape[0], ho, wo).transpose(1, 0, 2, 3)
    )


def conv2d_backward(grad_out: np.ndarray, saved_input: np.ndarray, p: ConvParams):
    """Gradients w.r.t. input, weight, bias for a scalar downstream loss."""
    b, c, h, w = saved_input.shape
    ho, wo = conv2d_output_hw(h, w, p.kernel, p.stride, p.padding)
    if grad_out.shape != (b, p.out_channels, ho, wo):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match forward output "
            f"{(b, p.out_channels, ho, wo)}"
        )
    cols, _ = _im2col(saved_input, p.kernel, p.stride, p.padding)
    g = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(p.out_channels, -1)
    grad_weight = (g @ cols.T).reshape(p.weight.shape)
    grad_bias = g.sum(axis=1)
    grad_cols = p.weight.reshape(p.out_channels, -1).T @ g
    grad_input = _col2im(grad_cols, saved_input.shape, p.kernel, p.stride, p.padding, ho, wo)
    return grad_input, grad_weight, grad_bias


# ---------------------------------------------------------------------------
# Depth-to-space rearrangement (exactly invertible decoder upsampling)
# ---------------------------------------------------------------------------

def depth_to_space(x: np.ndarray, block: int) -> np.ndarray:
    b, c, h, w = x.shape
    if c % (block * block) != 0:
        raise ValueError(f"channels {c} not divisible by block^2 = {block * block}")
    co = c // (block * block)
    y = x.reshape(b, co, block, block, h, w).transpose(0, 1, 4, 2, 5, 3)
    return y.reshape(b, co, h * block, w * block)


def space_to_depth(x: np.ndarray, block: int) -> np.ndarray:
    b, c, h, w = x.shape
    if h % block != 0 or w % block != 0:
        raise ValueError(f"spatial dims {h}x{w} not divisible by block {block}")
    ho, wo = h // block, w // block
    y = x.reshape(b, c, ho, block, wo, block).transpose(0, 1, 3, 5, 2, 4)
    return y.reshape(b, c * block * block, ho, wo)


def depth_to_space_backward(grad_out: np.ndarray, block: int) -> np.ndarray:
    return space_to_depth(grad_out, block)


def space_to_depth_backward(grad_out: np.ndarray, block: int) -> np.ndarray:
    return depth_to_space(grad_out, block)


# ---------------------------------------------------------------------------
# Generalized divisive normalization and its decoder-side inverse
# ---------------------------------------------------------------------------

@dataclass
class GdnParams:
    """Per-channel bias beta (C,) and channel-coupling weights gamma (C, C).

    Positivity (beta >= GDN_BETA_FLOOR, gamma >= 0) keeps the normalizer's
    radicand strictly positive; the optimizer re-projects after every step.
    """

    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        if self.beta.ndim != 1:
            raise ValueError(f"beta must be 1-D, got shape {self.beta.shape}")
        c = self.beta.shape[0]
        if self.gamma.shape != (c, c):
            raise ValueError(f"gamma shape {self.gamma.shape} does not match beta ({c},)")

    @property
    def channels(self) -> int:
        return self.beta.shape[0]


def _gdn_check(x: np.ndarray, p: GdnParams, name: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{name} input must be 4-D (B,C,H,W), got {x.shape}")
    if x.shape[1] != p.channels:
        raise ValueError(f"{name}: input has {x.shape[1]} channels, params expect {p.channels}")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name}: non-finite input")


def gdn_denominator_sq(x: np.ndarray, p: GdnParams) -> np.ndarray:
    """beta_i + sum_j gamma_ij * x_j^2, per spatial location; shape of x."""
    b, c, h, w = x.shape
    sq = (x * x).reshape(b, c, h * w)
    s = np.matmul(p.gamma, sq)
    s += p.beta[:, None]
    return s.reshape(x.shape)


def gdn_forward_cached(x: np.ndarray, p: GdnParams):
    _gdn_check(x, p, "gdn")
    s = gdn_denominator_sq(x, p)
    return x / np.sqrt(s), s


def gdn_forward(x: np.ndarray, p: GdnParams) -> np.ndarray:
    """u_i = w_i / sqrt(beta_i + sum_j gamma_ij w_j^2), pointwise per location."""
    return gdn_forward_cached(x, p)[0]


def gdn_backward(grad_out: np.ndarray, saved_x: np.ndarray, p: GdnParams,
                 denom_sq: np.ndarray | None = None):
    """Gradients w.r.t. input, beta, gamma.

    ``denom_sq`` may pass the radicand saved from the forward pass to skip
    recomputing it.
    """
    if grad_out.shape != saved_x.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} vs input {saved_x.shape}")
    b, c, h, w = saved_x.shape
    s = gdn_denominator_sq(saved_x, p) if denom_sq is None else denom_sq
    inv_root = 1.0 / np.sqrt(s)
    # d(out)/d(s) path: out_i = x_i * s_i^(-1/2)
    gs = grad_out * saved_x * (-0.5) * inv_root / s
    gs_flat = gs.reshape(b, c, h * w)
    grad_x = grad_out * inv_root
    grad_x += 2.0 * saved_x * np.matmul(p.gamma.T, gs_flat).reshape(saved_x.shape)
    grad_beta = gs.sum(axis=(0, 2, 3))
    sq_flat = (saved_x * saved_x).reshape(b, c, h * w)
    grad_gamma = np.matmul(gs_flat, sq_flat.transpose(0, 2, 1)).sum(axis=0)
    return grad_x, grad_beta, grad_gamma


def igdn_forward_cached(x: np.ndarray, p: GdnParams):
    _gdn_check(x, p, "igdn")
    s = gdn_denominator_sq(x, p)
    return x * np.sqrt(s), s


def igdn_forward(x: np.ndarray, p: GdnParams) -> np.ndarray:
    """w_i = u_i * sqrt(beta_i + sum_j gamma_ij u_j^2).

    Multiplies by the learned norm; not the pointwise inverse of
    gdn_forward under identical parameters.
    """
    return igdn_forward_cached(x, p)[0]


def igdn_backward(grad_out: np.ndarray, saved_x: np.ndarray, p: GdnParams,
                  denom_sq: np.ndarray | None = None):
    if grad_out.shape != saved_x.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} vs input {saved_x.shape}")
    b, c, h, w = saved_x.shape
    s = gdn_denominator_sq(saved_x, p) if denom_sq is None else denom_sq
    root = np.sqrt(s)
    gs = grad_out * saved_x * 0.5 / root
    gs_flat = gs.reshape(b, c, h * w)
    grad_x = grad_out * root
    grad_x += 2.0 * saved_x * np.matmul(p.gamma.T, gs_flat).reshape(saved_x.shape)
    grad_beta = gs.sum(axis=(0, 2, 3))
    sq_flat = (saved_x * saved_x).reshape(b, c, h * w)
    grad_gamma = np.matmul(gs_flat, sq_flat.transpose(0, 2, 1)).sum(axis=0)
    return grad_x, grad_beta, grad_gamma


# ---------------------------------------------------------------------------
# Convolutional LSTM cell
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """Input-path and hidden-path convolutions producing the stacked gates.

    Both convolutions emit 4*hidden channels, split into equal groups in
    the fixed order [forget, input, candidate, output]. The hidden path is
    a stride-1 1x1 convolution over the previous hidden state.
    """

    input_conv: ConvParams
    hidden_conv: ConvParams

    def __post_init__(self):
        if self.input_conv.out_channels != self.hidden_conv.out_channels:
            raise ValueError("input and hidden convolutions must emit the same channels")
        if self.input_conv.out_channels % 4 != 0:
            raise ValueError("gate channels must be divisible by 4")
        if self.hidden_conv.stride != 1:
            raise ValueError("hidden-path convolution must have stride 1")
        if self.hidden_conv.in_channels != self.hidden_channels:
            raise ValueError(
                f"hidden conv consumes {self.hidden_conv.in_channels} channels, "
                f"cell hidden size is {self.hidden_channels}"
            )

    @property
    def hidden_channels(self) -> int:
        return self.input_conv.out_channels // 4


@dataclass
class LstmState:
    """Hidden and memory tensors carried across iterations."""

    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise ValueError(f"state shapes differ: h {self.h.shape} vs c {self.c.shape}")


@dataclass
class LstmCache:
    """Forward activations saved for the backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


def lstm_state_zeros(p: LstmParams, batch: int, in_h: int, in_w: int, dtype) -> LstmState:
    ic = p.input_conv
    ho, wo = conv2d_output_hw(in_h, in_w, ic.kernel, ic.stride, ic.padding)
    shape = (batch, p.hidden_channels, ho, wo)
    return LstmState(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype))


def _lstm_gates(x: np.ndarray, state: LstmState, p: LstmParams):
    if x.shape[1] != p.input_conv.in_channels:
        raise ValueError(
            f"lstm input has {x.shape[1]} channels, expected {p.input_conv.in_channels}"
        )
    gates = conv2d_forward(x, p.input_conv)
    if state.h.shape != (x.shape[0], p.hidden_channels) + gates.shape[2:]:
        raise ValueError(
            f"lstm state shape {state.h.shape} does not match expected "
            f"{(x.shape[0], p.hidden_channels) + gates.shape[2:]}"
        )
    gates += conv2d_forward(state.h, p.hidden_conv)
    hc = p.hidden_channels
    f = sigmoid(gates[:, :hc])
    i = sigmoid(gates[:, hc:2 * hc])
    g = np.tanh(gates[:, 2 * hc:3 * hc])
    o = sigmoid(gates[:, 3 * hc:])
    return f, i, g, o


def conv_lstm_step(x: np.ndarray, state: LstmState, p: LstmParams):
    """One cell update: gates from conv_in(x) + conv_hidden(h_prev), then
    c = f*c_prev + i*g and h = o*tanh(c). Returns (h, new_state)."""
    f, i, g, o = _lstm_gates(x, state, p)
    c = f * state.c + i * g
    h = o * np.tanh(c)
    return h, LstmState(h, c)


def conv_lstm_step_cached(x: np.ndarray, state: LstmState, p: LstmParams):
    f, i, g, o = _lstm_gates(x, state, p)
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = LstmCache(x, state.h, state.c, f, i, g, o, tanh_c)
    return h, LstmState(h, c), cache


def conv_lstm_backward(grad_h: np.ndarray, grad_state_next: LstmState | None,
                       cache: LstmCache, p: LstmParams):
    """Backward through one cell step.

    ``grad_h`` is the gradient arriving at the cell output; the optional
    ``grad_state_next`` carries contributions flowing back from the
    following step's use of (h, c). Returns (grad_x, grad_state_prev,
    (grad_w_in, grad_b_in, grad_w_hidden, grad_b_hidden)).
    """
    if grad_state_next is not None:
        dh = grad_h + grad_state_next.h
        dc_in = grad_state_next.c
    else:
        dh = grad_h
        dc_in = None
    dc = dh * cache.o * (1.0 - cache.tanh_c * cache.tanh_c)
    if dc_in is not None:
        dc = dc + dc_in
    d_o = dh * cache.tanh_c
    d_f = dc * cache.c_prev
    d_i = dc * cache.g
    d_g = dc * cache.i
    d_gates = np.concatenate(
        [
            d_f * cache.f * (1.0 - cache.f),
            d_i * cache.i * (1.0 - cache.i),
            d_g * (1.0 - cache.g * cache.g),
            d_o * cache.o * (1.0 - cache.o),
        ],
        axis=1,
    )
    grad_x, gw_in, gb_in = conv2d_backward(d_gates, cache.x, p.input_conv)
    grad_h_prev, gw_hid, gb_hid = conv2d_backward(d_gates, cache.h_prev, p.hidden_conv)
    grad_c_prev = dc * cache.f
    return grad_x, LstmState(grad_h_prev, grad_c_prev), (gw_in, gb_in, gw_hid, gb_hid)


# ---------------------------------------------------------------------------
# Binarizer
# ---------------------------------------------------------------------------

def binarize(pre_codes: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Map tanh-range activations to {-1, +1} codes.

    mode 'sign' (inference): deterministic sign with sign(0) = +1.
    mode 'stochastic' (training): +1 with probability (1 + x) / 2, so the
    code is an unbiased sample of the activation.
    'inference_sign' and 'train_stochastic' are accepted aliases.
    """
    mode = {"inference_sign": "sign", "train_stochastic": "stochastic"}.get(mode, mode)
    limit = 1.0 + BINARIZE_TOLERANCE
    peak = float(np.max(np.abs(pre_codes))) if pre_codes.size else 0.0
    if peak > limit:
        raise ValueError(
            f"binarizer input magnitude {peak:.6g} exceeds 1 + {BINARIZE_TOLERANCE:g}; "
            "upstream activation must be tanh-bounded"
        )
    dtype = pre_codes.dtype
    if mode == "sign":
        return np.where(pre_codes >= 0, dtype.type(1), dtype.type(-1))
    if mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic binarization requires a random generator")
        draws = rng.random(pre_codes.shape)
        return np.where(draws < (1.0 + pre_codes) / 2.0, dtype.type(1), dtype.type(-1))
    raise ValueError(f"unknown binarize mode {mode!r} (expected 'sign' or 'stochastic')")


def binarize_backward(grad_out: np.ndarray) -> np.ndarray:
    """Straight-through estimator: the quantizer is identity in the
    backward pass, so the gradient passes through bit-for-bit."""
    return grad_out
