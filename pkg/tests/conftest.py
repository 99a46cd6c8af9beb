"""Shared test fixtures: a deterministic image pair with frozen metric
reference values computed by independent implementations."""

import numpy as np

# Independently computed reference for the fixed 256x256 pair below
# (multi-scale SSIM, 5 scales, standard weights, peak 1.0).
MS_SSIM_REFERENCE_256 = 0.6072931290


def metric_pair(size, seed):
    """Deterministic structured image and a 0.1-noised copy, CHW in [0,1]."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / size
    base = np.stack([
        0.5 + 0.35 * np.sin(6.0 * x) * np.cos(4.0 * y),
        0.5 + 0.3 * (x - y),
        0.4 + 0.3 * np.cos(9.0 * x * y),
    ], axis=-1)
    base = np.clip(base, 0.0, 1.0)
    noisy = np.clip(base + 0.1 * rng.standard_normal(base.shape), 0.0, 1.0)
    return base.transpose(2, 0, 1), noisy.transpose(2, 0, 1)
