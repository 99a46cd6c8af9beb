import numpy as np
import pytest

from grnc.codec import build_model, desk_config
from grnc.metrics import (
    MS_SSIM_WEIGHTS,
    RD_CSV_HEADER,
    max_ms_ssim_scales,
    mse,
    ms_ssim,
    psnr,
    rd_csv_rows,
    rd_points,
    ssim,
    write_rd_csv,
)

from conftest import MS_SSIM_REFERENCE_256, metric_pair


# ---------------------------------------------------------------------------
# PSNR
# ---------------------------------------------------------------------------

def test_psnr_identical_hits_cap():
    a = np.random.default_rng(0).random((3, 16, 16))
    assert psnr(a, a) == 100.0


def test_psnr_constant_offset_value():
    a = np.zeros((3, 8, 8))
    b = np.full((3, 8, 8), 16.0 / 255.0)
    expected = 10.0 * np.log10(255.0 ** 2 / 256.0)
    assert psnr(a, b) == pytest.approx(expected, abs=1e-10)
    assert psnr(a, b) == pytest.approx(24.0485, abs=1e-3)


def test_psnr_unit_error_is_zero_db():
    assert psnr(np.zeros((2, 4, 4)), np.ones((2, 4, 4))) == 0.0


def test_psnr_peak_parameter():
    a = np.zeros((1, 4, 4))
    b = np.full((1, 4, 4), 16.0)
    assert psnr(a, b, peak=255.0) == pytest.approx(10.0 * np.log10(255.0 ** 2 / 256.0))


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((3, 8, 8)), np.zeros((3, 8, 9)))


def test_mse_basic():
    assert mse(np.zeros(4), np.full(4, 2.0)) == 4.0


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def test_ssim_identical_is_one():
    a, _ = metric_pair(32, 0)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)


def test_ssim_symmetric_exactly():
    a, b = metric_pair(48, 1)
    assert ssim(a, b) == ssim(b, a)


def test_ssim_matches_independent_reference():
    skimage_metrics = pytest.importorskip("skimage.metrics")
    a, b = metric_pair(64, 7)
    ref = skimage_metrics.structural_similarity(
        a.transpose(1, 2, 0), b.transpose(1, 2, 0), channel_axis=-1,
        data_range=1.0, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False,
    )
    assert ssim(a, b) == pytest.approx(ref, abs=1e-4)


def test_ssim_rejects_images_smaller_than_window():
    with pytest.raises(ValueError):
        ssim(np.zeros((3, 10, 10)), np.zeros((3, 10, 10)))


def test_ssim_detects_degradation_ordering():
    a, b = metric_pair(64, 3)
    worse = np.clip(b + 0.2 * np.random.default_rng(4).standard_normal(b.shape), 0, 1)
    assert ssim(a, worse) < ssim(a, b) < 1.0


# ---------------------------------------------------------------------------
# MS-SSIM
# ---------------------------------------------------------------------------

def test_ms_ssim_identical_is_one():
    a, _ = metric_pair(176, 0)
    assert ms_ssim(a, a) == pytest.approx(1.0, abs=1e-9)


def test_ms_ssim_symmetric_exactly():
    a, b = metric_pair(176, 2)
    assert ms_ssim(a, b) == ms_ssim(b, a)


def test_ms_ssim_matches_independent_reference():
    a, b = metric_pair(256, 11)
    assert ms_ssim(a, b) == pytest.approx(MS_SSIM_REFERENCE_256, abs=1e-4)


def test_ms_ssim_in_unit_interval_for_natural_inputs():
    a, b = metric_pair(256, 13)
    value = ms_ssim(a, b)
    assert 0.0 <= value <= 1.0


def test_ms_ssim_weights_sum():
    assert len(MS_SSIM_WEIGHTS) == 5
    assert MS_SSIM_WEIGHTS == (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def test_ms_ssim_scale_feasibility():
    assert max_ms_ssim_scales(176, 176) == 5
    assert max_ms_ssim_scales(64, 64) == 3
    assert max_ms_ssim_scales(32, 32) == 2
    assert max_ms_ssim_scales(10, 200) == 0


def test_ms_ssim_small_images_use_fewer_scales():
    a, b = metric_pair(32, 5)
    value = ms_ssim(a, b)  # only 2 scales feasible; weights renormalized
    assert 0.0 <= value <= 1.0
    assert ms_ssim(a, a) == pytest.approx(1.0, abs=1e-9)


def test_ms_ssim_too_small_image():
    with pytest.raises(ValueError):
        ms_ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


def test_ms_ssim_shape_mismatch():
    a, _ = metric_pair(64, 0)
    with pytest.raises(ValueError):
        ms_ssim(a, a[:, :32, :])


# ---------------------------------------------------------------------------
# RD points and CSV
# ---------------------------------------------------------------------------

def test_rd_points_structure():
    model = build_model(desk_config(), seed=0)
    image = np.random.default_rng(1).random((1, 3, 32, 32)).astype(np.float32)
    points = rd_points(model, image, 4)
    assert len(points) == 4
    assert [p.iteration for p in points] == [1, 2, 3, 4]
    bpps = [p.bpp for p in points]
    assert all(b2 > b1 for b1, b2 in zip(bpps, bpps[1:]))
    assert bpps[0] == pytest.approx(8 / 256.0)
    for p in points:
        assert 0.0 <= p.ms_ssim <= 1.0
        assert np.isfinite(p.psnr_db)


def test_rd_points_crop_to_original_dims():
    model = build_model(desk_config(), seed=0)
    rng = np.random.default_rng(2)
    image = rng.random((1, 3, 48, 48)).astype(np.float32)
    padded = np.pad(image, ((0, 0), (0, 0), (0, 16), (0, 16)), mode="edge")
    points = rd_points(model, padded, 1, original_dims=(48, 48))
    direct = rd_points(model, padded, 1)
    # Same stream rate, but distortion measured on different pixel sets.
    assert points[0].bpp == direct[0].bpp
    assert points[0].psnr_db != direct[0].psnr_db


def test_rd_csv_format(tmp_path):
    model = build_model(desk_config(), seed=0)
    image = np.random.default_rng(3).random((1, 3, 32, 32)).astype(np.float32)
    points = rd_points(model, image, 2)
    rows = rd_csv_rows("patch.ppm", points)
    assert len(rows) == 2
    assert rows[0].startswith("patch.ppm,1,")
    assert RD_CSV_HEADER == "image,iteration,bpp,psnr_db,ms_ssim"
    out = tmp_path / "rd.csv"
    write_rd_csv(out, [("patch.ppm", points)])
    lines = out.read_text().strip().split("\n")
    assert lines[0] == RD_CSV_HEADER
    assert len(lines) == 3
