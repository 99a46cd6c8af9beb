"""Distortion metrics (MSE, PSNR, SSIM, MS-SSIM) and rate-distortion
point assembly.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5), stabilizers
K1=0.01 / K2=0.03, weighted moments without sample-covariance correction,
averaged over valid windows only, per channel then across channels.
MS-SSIM combines contrast/structure at up to five dyadic scales with the
published weights and applies the luminance term at the coarsest scale;
downsampling between scales is 2x2 mean pooling (odd remainders cropped).
Images too small for five scales use fewer scales with the leading
weights renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

RD_CSV_HEADER = "image,iteration,bpp,psnr_db,ms_ssim"


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 100 dB for identical inputs."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    value = 10.0 * np.log10(peak * peak / err)
    return float(min(value, PSNR_CAP_DB))


def _gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    phi = np.exp(-0.5 * (x * x) / (sigma * sigma))
    return phi / phi.sum()


def _filter_valid(plane: np.ndarray, kern: np.ndarray) -> np.ndarray:
    # Separable symmetric kernel, so convolution equals correlation.
    tmp = convolve(plane, kern[None, :], mode="valid")
    return convolve(tmp, kern[:, None], mode="valid")


def _planes(t: np.ndarray) -> np.ndarray:
    """Normalize input to (C, H, W) float64 planes."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 4:
        if t.shape[0] != 1:
            raise ValueError(f"metrics take single images, got batch of {t.shape[0]}")
        t = t[0]
    if t.ndim == 2:
        t = t[None]
    if t.ndim != 3:
        raise ValueError(f"expected (H, W), (C, H, W) or (1, C, H, W), got {t.shape}")
    return t


def _ssim_plane(x: np.ndarray, y: np.ndarray, peak: float):
    """Mean luminance term and mean contrast-structure term over valid
    windows of two single-channel planes."""
    kern = _gaussian_kernel(SSIM_SIGMA, (SSIM_WINDOW - 1) // 2)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    ux = _filter_valid(x, kern)
    uy = _filter_valid(y, kern)
    uxx = _filter_valid(x * x, kern)
    uyy = _filter_valid(y * y, kern)
    uxy = _filter_valid(x * y, kern)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    lum = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1)
    cs = (2.0 * vxy + c2) / (vx + vy + c2)
    return float(np.mean(lum * cs)), float(np.mean(lum)), float(np.mean(cs))


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Single-scale SSIM averaged over valid windows and channels."""
    pa, pb = _planes(a), _planes(b)
    _check_pair(pa, pb)
    if min(pa.shape[1], pa.shape[2]) < SSIM_WINDOW:
        raise ValueError(
            f"image {pa.shape[1]}x{pa.shape[2]} smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    values = [_ssim_plane(pa[c], pb[c], peak)[0] for c in range(pa.shape[0])]
    return float(np.mean(values))


def _downsample(planes: np.ndarray) -> np.ndarray:
    """2x2 mean pooling; odd trailing row/column cropped first."""
    c, h, w = planes.shape
    h2, w2 = h - h % 2, w - w % 2
    x = planes[:, :h2, :w2]
    return x.reshape(c, h2 // 2, 2, w2 // 2, 2).mean(axis=(2, 4))


def max_ms_ssim_scales(height: int, width: int) -> int:
    """Largest dyadic scale count whose coarsest level still fits the window."""
    scales = 0
    m = min(height, width)
    while m >= SSIM_WINDOW:
        scales += 1
        m //= 2
    return scales


def ms_ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0, scales: int = 5,
            weights=MS_SSIM_WEIGHTS) -> float:
    """Multi-scale SSIM, weighted geometric mean across scales."""
    pa, pb = _planes(a), _planes(b)
    _check_pair(pa, pb)
    if scales < 1 or scales > len(weights):
        raise ValueError(f"scales must be in 1..{len(weights)}")
    feasible = max_ms_ssim_scales(pa.shape[1], pa.shape[2])
    if feasible < 1:
        raise ValueError(
            f"image {pa.shape[1]}x{pa.shape[2]} too small for even one "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} scale"
        )
    used = min(scales, feasible)
    w = np.asarray(weights[:used], dtype=np.float64)
    if used < scales:
        w = w / w.sum()

    per_channel = []
    for c in range(pa.shape[0]):
        x, y = pa[c], pb[c]
        cs_terms = []
        lum_cs = 1.0
        for s in range(used):
            lum_cs, _, cs = _ssim_plane(x, y, peak)
            cs_terms.append(cs)
            if s + 1 < used:
                x = _downsample(x[None])[0]
                y = _downsample(y[None])[0]
        # Geometric mean: contrast/structure at every scale, full SSIM
        # (luminance included) only at the coarsest. Negative terms are
        # floored at zero so fractional powers stay real.
        value = max(lum_cs, 0.0) ** w[-1]
        for s in range(used - 1):
            value *= max(cs_terms[s], 0.0) ** w[s]
        per_channel.append(value)
    return float(np.mean(per_channel))


# ---------------------------------------------------------------------------
# Rate-distortion assembly
# ---------------------------------------------------------------------------

@dataclass
class RdPoint:
    iteration: int
    bpp: float
    psnr_db: float
    ms_ssim: float


def rd_points(model, image: np.ndarray, t_max: int, mode: str = "one_shot",
              original_dims: tuple[int, int] | None = None) -> list:
    """Per-iteration rate-distortion points for one padded image.

    Rate charges iterations * code_channels / 256 bits per padded pixel;
    distortion is measured against the original region only (padding
    cropped before PSNR / MS-SSIM).
    """
    from .codec import compress
    from .dataio import crop_to

    if image.ndim != 4 or image.shape[0] != 1:
        raise ValueError(f"expected one padded image (1, 3, H, W), got {image.shape}")
    trace = compress(model, image, t_max, mode=mode)
    per_iter_bpp = model.config.code_channels / 256.0
    dims = original_dims or (image.shape[2], image.shape[3])
    reference = crop_to(image, dims)
    points = []
    for t, xhat in enumerate(trace.reconstructions, start=1):
        cropped = crop_to(xhat, dims)
        points.append(RdPoint(
            iteration=t,
            bpp=t * per_iter_bpp,
            psnr_db=psnr(reference, cropped),
            ms_ssim=ms_ssim(reference, cropped),
        ))
    return points


def rd_csv_rows(image_name: str, points) -> list[str]:
    rows = []
    for p in points:
        rows.append(f"{image_name},{p.iteration},{p.bpp:.6f},{p.psnr_db:.4f},{p.ms_ssim:.6f}")
    return rows


def write_rd_csv(path, named_points) -> None:
    """named_points: iterable of (image_name, list of RdPoint)."""
    lines = [RD_CSV_HEADER]
    for name, points in named_points:
        lines.extend(rd_csv_rows(name, points))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
