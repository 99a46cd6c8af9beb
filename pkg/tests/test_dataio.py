import numpy as np
import pytest

from grnc.dataio import (
    ImageBuffer,
    PpmError,
    crop_to,
    load_ppm,
    load_ppm_file,
    pad_to_multiple,
    save_ppm,
    save_ppm_file,
    to_image,
    to_tensor,
)

# P6 2x2 fixture with 12 known payload bytes.
FIXTURE_SAMPLES = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30])
FIXTURE = b"P6\n2 2\n255\n" + FIXTURE_SAMPLES


def test_load_ppm_known_fixture():
    img = load_ppm(FIXTURE)
    assert (img.width, img.height) == (2, 2)
    np.testing.assert_array_equal(img.samples[0, 0], [255, 0, 0])
    np.testing.assert_array_equal(img.samples[0, 1], [0, 255, 0])
    np.testing.assert_array_equal(img.samples[1, 0], [0, 0, 255])
    np.testing.assert_array_equal(img.samples[1, 1], [10, 20, 30])
    assert img.samples.tobytes() == FIXTURE_SAMPLES


def test_load_ppm_tolerates_comments_and_whitespace():
    data = b"P6 # binary pixmap\n# full-line comment\n 2\t2 # dims\n255\n" + FIXTURE_SAMPLES
    img = load_ppm(data)
    assert img == load_ppm(FIXTURE)


def test_load_ppm_bad_magic():
    with pytest.raises(PpmError, match="magic"):
        load_ppm(b"P5\n2 2\n255\n" + FIXTURE_SAMPLES)


def test_load_ppm_unsupported_maxval():
    with pytest.raises(PpmError, match="unsupported maxval"):
        load_ppm(b"P6\n2 2\n65535\n" + bytes(24))


def test_load_ppm_truncated():
    with pytest.raises(PpmError, match="truncated"):
        load_ppm(FIXTURE[:-1])
    with pytest.raises(PpmError, match="truncated"):
        load_ppm(b"P6\n2 2")


def test_load_ppm_non_numeric_field():
    with pytest.raises(PpmError):
        load_ppm(b"P6\nwide 2\n255\n" + FIXTURE_SAMPLES)


def test_save_load_roundtrip_byte_identical():
    assert save_ppm(load_ppm(FIXTURE)) == FIXTURE
    rng = np.random.default_rng(0)
    img = ImageBuffer(5, 3, rng.integers(0, 256, (3, 5, 3), dtype=np.uint8))
    assert load_ppm(save_ppm(img)) == img
    assert save_ppm(load_ppm(save_ppm(img))) == save_ppm(img)


def test_ppm_file_roundtrip(tmp_path):
    path = tmp_path / "img.ppm"
    img = load_ppm(FIXTURE)
    save_ppm_file(img, path)
    assert path.read_bytes() == FIXTURE
    assert load_ppm_file(path) == img


def test_image_buffer_shape_validation():
    with pytest.raises(ValueError):
        ImageBuffer(2, 2, np.zeros((2, 3, 3), dtype=np.uint8))


# ---------------------------------------------------------------------------
# Tensor conversion
# ---------------------------------------------------------------------------

def test_to_tensor_values_and_layout():
    img = load_ppm(FIXTURE)
    t = to_tensor(img)
    assert t.shape == (1, 3, 2, 2)
    assert t.dtype == np.float32
    assert t[0, 0, 0, 0] == 1.0      # sample 255, red channel
    assert t[0, 1, 0, 1] == 1.0      # green pixel
    assert t[0, 2, 0, 0] == 0.0      # zero sample
    assert t[0, 2, 1, 1] == np.float32(30 / 255.0)


def test_to_image_roundtrip_exhaustive_over_all_byte_values():
    samples = np.arange(256, dtype=np.uint8).reshape(16, 16)
    img = ImageBuffer(16, 16, np.stack([samples] * 3, axis=-1))
    again = to_image(to_tensor(img))
    assert again == img


def test_to_image_rounds_half_up():
    # 0.5/255 scaled back is exactly 127.5 -> rounds up to 128.
    t = np.full((1, 3, 1, 1), 127.5 / 255.0, dtype=np.float64)
    assert to_image(t).samples[0, 0, 0] == 128
    t = np.full((1, 3, 1, 1), 126.4999 / 255.0, dtype=np.float64)
    assert to_image(t).samples[0, 0, 0] == 126


def test_to_image_clips_out_of_range():
    t = np.array([[-0.5]], dtype=np.float64).reshape(1, 1, 1, 1)
    t = np.repeat(t, 3, axis=1)
    img = to_image(t)
    assert img.samples[0, 0, 0] == 0
    img = to_image(np.full((1, 3, 1, 1), 1.7))
    assert img.samples[0, 0, 0] == 255


def test_to_image_rejects_batches_and_bad_shapes():
    with pytest.raises(ValueError):
        to_image(np.zeros((2, 3, 4, 4)))
    with pytest.raises(ValueError):
        to_image(np.zeros((4, 4)))


# ---------------------------------------------------------------------------
# Padding
# ---------------------------------------------------------------------------

def test_pad_already_legal_dims_unchanged():
    t = np.random.default_rng(0).random((1, 3, 32, 32)).astype(np.float32)
    padded, dims = pad_to_multiple(t)
    assert dims == (32, 32)
    np.testing.assert_array_equal(padded, t)
    # Idempotent on legal dims.
    padded2, _ = pad_to_multiple(padded)
    np.testing.assert_array_equal(padded2, padded)


def test_pad_replicates_last_column():
    t = np.random.default_rng(1).random((1, 3, 32, 33)).astype(np.float32)
    padded, dims = pad_to_multiple(t)
    assert padded.shape == (1, 3, 32, 48)
    assert dims == (32, 33)
    for j in range(33, 48):
        np.testing.assert_array_equal(padded[:, :, :, j], t[:, :, :, 32])


def test_pad_both_axes():
    t = np.random.default_rng(2).random((1, 3, 17, 33)).astype(np.float32)
    padded, dims = pad_to_multiple(t)
    assert padded.shape == (1, 3, 32, 48)
    assert dims == (17, 33)
    np.testing.assert_array_equal(padded[:, :, 31, 40], t[:, :, 16, 32])


def test_crop_inverts_pad():
    t = np.random.default_rng(3).random((2, 3, 19, 45)).astype(np.float32)
    padded, dims = pad_to_multiple(t)
    np.testing.assert_array_equal(crop_to(padded, dims), t)


def test_crop_rejects_larger_than_input():
    with pytest.raises(ValueError):
        crop_to(np.zeros((1, 3, 16, 16)), (17, 16))
