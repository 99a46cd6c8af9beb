#!/usr/bin/env python3
"""Every backward pass in this package is hand-written, so every one of
them is checked against central finite differences. This demo runs the
full oracle suite, then walks one check by hand for a tiny convolution."""

import numpy as np

from grnc.gradcheck import run_suite
from grnc.layers import ConvParams, conv2d_backward, conv2d_forward
from grnc.tensor import finite_difference_grad, rel_error

# --- the full suite -------------------------------------------------------
# Six ops, a handful of random seeds each. Anything above 1e-5 relative
# error would be flagged; a correct implementation lands near 1e-9.
for report in run_suite(seed=0, tolerance=1e-5, seeds_per_op=5):
    print(report.line())

# --- one check by hand ----------------------------------------------------
# The trick that turns a tensor-valued op into a scalar function: project
# the output onto a fixed random direction U, so f(x) = sum(conv(x) * U).
# The analytic gradient of f w.r.t. x is then conv2d_backward(U).
rng = np.random.default_rng(42)
x = rng.standard_normal((1, 2, 6, 6))
p = ConvParams(weight=rng.standard_normal((3, 2, 3, 3)),
               bias=rng.standard_normal(3), stride=2, padding=1)
u = rng.standard_normal(conv2d_forward(x, p).shape)


def scalar_loss(inp):
    return float(np.sum(conv2d_forward(inp, p) * u))


analytic, _, _ = conv2d_backward(u, x, p)
numeric = finite_difference_grad(scalar_loss, x)
print("\nhand-rolled conv check, rel err:", rel_error(analytic, numeric))
