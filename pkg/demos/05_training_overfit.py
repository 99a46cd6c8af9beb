#!/usr/bin/env python3
"""Overfit the small codec on a handful of fixed patches. The point is to
watch the L1 residual loss fall: the network learns to spend its few bits
per iteration on the structure these patches share."""

import numpy as np

from grnc.codec import build_model, compress, desk_config
from grnc.training import TrainConfig, train

# Ten deterministic 32x32 patches: sinusoids and ramps with a little noise,
# the kind of smooth content a codec should learn quickly.
yy, xx = np.mgrid[0:32, 0:32] / 31.0


def make_patch(k):
    rng = np.random.default_rng(100 + k)
    base = np.stack([
        0.5 + 0.35 * np.sin(6.0 * xx + k) * np.cos(4.0 * yy),
        0.5 + 0.3 * (xx - yy) + 0.05 * (k % 3),
        0.4 + 0.3 * np.cos(9.0 * xx * yy + k),
    ]).clip(0.0, 1.0)
    noisy = base + 0.02 * rng.standard_normal((3, 32, 32))
    return noisy.clip(0.0, 1.0).astype(np.float32)


patches = [make_patch(k) for k in range(10)]

# 120 steps is enough to see the trend; the full acceptance run does 500.
# The stochastic binarizer is on during training, so the loss is noisy
# step to step but falls steadily.
model = build_model(desk_config(), seed=0)
config = TrainConfig(learning_rate=0.0005, batch_size=16, patch_size=32,
                     epochs=3, steps_per_epoch=40, iterations=4, seed=7)


def progress(entry):
    if entry.step % 20 == 0 or entry.step == 1:
        print(f"step {entry.step:4d}   loss {entry.loss:.5f}")


result = train(model, patches, config, progress=progress)
losses = [entry.loss for entry in result.history]
print()
print(f"mean loss, first 20 steps: {np.mean(losses[:20]):.5f}")
print(f"mean loss, last 20 steps:  {np.mean(losses[-20:]):.5f}")

# What training bought us, on one of the training patches: residual decay
# across iterations at inference time (hard sign codes now).
trace = compress(model, patches[0][None], iterations=4)
decay = [float(np.abs(r).mean()) for r in trace.residuals]
print("mean |residual| per iteration:", " ".join(f"{d:.4f}" for d in decay))
