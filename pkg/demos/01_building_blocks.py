#!/usr/bin/env python3
"""Tour of the low-level blocks: convolution, depth-to-space, GDN/iGDN,
a ConvLSTM step, and the binarizer. Everything is plain numpy."""

import numpy as np

from grnc.layers import (
    ConvParams,
    GdnParams,
    LstmParams,
    binarize,
    conv2d_forward,
    depth_to_space,
    gdn_forward,
    igdn_forward,
    conv_lstm_step,
    lstm_state_zeros,
)

rng = np.random.default_rng(0)

# --- convolution ----------------------------------------------------------
# A 3x3 stride-2 conv is the workhorse of the encoder. Shapes follow the
# usual (batch, channels, height, width) layout.
x = rng.standard_normal((1, 3, 32, 32)).astype(np.float32)
conv = ConvParams(weight=rng.standard_normal((16, 3, 3, 3)).astype(np.float32) * 0.1,
                  bias=np.zeros(16, dtype=np.float32), stride=2, padding=1)
y = conv2d_forward(x, conv)
print("conv2d: ", x.shape, "->", y.shape)

# --- depth to space -------------------------------------------------------
# The decoder upsamples by moving channel blocks into 2x2 pixel blocks.
# With block 2, every 4 channels turn into one channel at twice the size.
z = depth_to_space(y, 2)
print("depth_to_space:", y.shape, "->", z.shape)

# A tiny hand example: channels [a, b, c, d] become the 2x2 patch
# [[a, b], [c, d]].
tiny = np.arange(4.0).reshape(1, 4, 1, 1)
print("depth_to_space [0,1,2,3] ->\n", depth_to_space(tiny, 2)[0, 0])

# --- GDN and iGDN ---------------------------------------------------------
# GDN divides each channel by a learned norm over all channels at the same
# pixel: u_i = w_i / sqrt(beta_i + sum_j gamma_ij w_j^2). With gamma = 0 it
# degenerates to a per-channel rescale by 1/sqrt(beta).
w = np.array([[[[3.0]], [[4.0]]]])  # one pixel, two channels
params = GdnParams(beta=np.array([1.0, 1.0]), gamma=np.zeros((2, 2)))
print("gdn, gamma=0:  ", gdn_forward(w, params).ravel(), "(= w / sqrt(1))")

coupled = GdnParams(beta=np.array([1.0, 1.0]), gamma=np.full((2, 2), 0.1))
u = gdn_forward(w, coupled)
print("gdn, coupled:  ", u.ravel())
# iGDN multiplies by the same norm form; it is the decoder-side counterpart
# but not the exact pointwise inverse when applied to already-normalized
# values (the norm is recomputed from its own input).
print("igdn(gdn(w)):  ", igdn_forward(u, coupled).ravel(), "vs w =", w.ravel())

# --- ConvLSTM -------------------------------------------------------------
# The recurrent cell keeps per-pixel state. Gates are convolutions of the
# input plus 1x1 convolutions of the previous hidden map.
cell = LstmParams(
    input_conv=ConvParams(weight=0.1 * rng.standard_normal((4 * 8, 16, 3, 3)).astype(np.float32),
                          bias=np.zeros(4 * 8, dtype=np.float32), stride=2, padding=1),
    hidden_conv=ConvParams(weight=0.1 * rng.standard_normal((4 * 8, 8, 1, 1)).astype(np.float32),
                           bias=np.zeros(4 * 8, dtype=np.float32), stride=1, padding=0),
)
state = lstm_state_zeros(cell, 1, 16, 16, np.float32)
h1, state = conv_lstm_step(y, state, cell)
h2, state = conv_lstm_step(y, state, cell)
print("conv_lstm:", y.shape, "-> hidden", h1.shape)
print("state carries memory: mean|h2 - h1| =", float(np.abs(h2 - h1).mean()))

# --- binarizer ------------------------------------------------------------
# Codes are hard +-1. Inference takes the sign (with sign(0) = +1); training
# samples P(+1) = (1 + x) / 2 so the expectation stays x.
pre = np.array([[[[-0.7]], [[0.0]], [[0.3]]]])
print("sign codes:       ", binarize(pre, mode="sign").ravel())
draws = binarize(np.full((20000, 1, 1, 1), 0.3), mode="stochastic",
                 rng=np.random.default_rng(1))
print("stochastic mean at x=0.3:", round(float(draws.mean()), 3))
