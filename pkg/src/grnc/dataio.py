"""Image file ingestion/emission and padding to codec-legal dimensions.

The bit-exact interchange format is binary PPM (P6, maxval 255). PNG is
an optional extra behind the same ImageBuffer boundary; it needs Pillow
and is only used when a filename ends in .png.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAD_MULTIPLE = 16


class PpmError(ValueError):
    pass


@dataclass
class ImageBuffer:
    """8-bit interleaved RGB samples, sRGB assumed.

    ``samples`` has shape (height, width, 3), dtype uint8.
    """

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.uint8)
        if self.samples.shape != (self.height, self.width, 3):
            raise ValueError(
                f"samples shape {self.samples.shape} does not match "
                f"{self.height}x{self.width}x3"
            )

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.samples, other.samples))


# ---------------------------------------------------------------------------
# PPM (P6)
# ---------------------------------------------------------------------------

def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PpmError("truncated header")
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def load_ppm(data: bytes) -> ImageBuffer:
    """Parse a binary P6 PPM with maxval 255; header comments tolerated."""
    magic, pos = _read_token(data, 0)
    if magic != b"P6":
        raise PpmError(f"bad magic {magic!r}, expected b'P6'")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _read_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise PpmError(f"non-numeric {name} field {token!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PpmError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise PpmError(f"unsupported maxval {maxval}, only 255")
    pos += 1  # single whitespace byte after maxval
    expected = 3 * width * height
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise PpmError(f"truncated payload: need {expected} bytes, have {len(payload)}")
    samples = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(width, height, samples.copy())


def save_ppm(img: ImageBuffer) -> bytes:
    """Canonical P6 serialization: 'P6\\n<w> <h>\\n255\\n' + raw samples."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.samples.tobytes()


def load_ppm_file(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        return load_ppm(fh.read())


def save_ppm_file(img: ImageBuffer, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_ppm(img))


# ---------------------------------------------------------------------------
# Optional PNG (Pillow extra)
# ---------------------------------------------------------------------------

def load_png_file(path) -> ImageBuffer:
    try:
        from PIL import Image
    except ImportError as exc:
        raise RuntimeError("PNG support needs the 'png' extra (Pillow)") from exc
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return ImageBuffer(arr.shape[1], arr.shape[0], arr)


def save_png_file(img: ImageBuffer, path) -> None:
    try:
        from PIL import Image
    except ImportError as exc:
        raise RuntimeError("PNG support needs the 'png' extra (Pillow)") from exc
    Image.fromarray(img.samples, mode="RGB").save(path, format="PNG")


def load_image_file(path) -> ImageBuffer:
    if str(path).lower().endswith(".png"):
        return load_png_file(path)
    return load_ppm_file(path)


def save_image_file(img: ImageBuffer, path) -> None:
    if str(path).lower().endswith(".png"):
        save_png_file(img, path)
    else:
        save_ppm_file(img, path)


# ---------------------------------------------------------------------------
# Tensor conversion
# ---------------------------------------------------------------------------

def to_tensor(img: ImageBuffer, dtype=np.float32) -> np.ndarray:
    """(1, 3, H, W) tensor in [0, 1]; channel order R, G, B; value = sample/255."""
    chw = img.samples.astype(dtype).transpose(2, 0, 1) / dtype(255.0)
    return chw[None]


def to_image(t: np.ndarray) -> ImageBuffer:
    """Inverse of to_tensor with round-half-up quantization to 8 bits."""
    t = np.asarray(t)
    if t.ndim == 4:
        if t.shape[0] != 1:
            raise ValueError(f"expected a single image, got batch of {t.shape[0]}")
        t = t[0]
    if t.ndim != 3 or t.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) or (1, 3, H, W), got {t.shape}")
    scaled = np.floor(t.astype(np.float64) * 255.0 + 0.5)
    samples = np.clip(scaled, 0, 255).astype(np.uint8).transpose(1, 2, 0)
    return ImageBuffer(samples.shape[1], samples.shape[0], samples)


# ---------------------------------------------------------------------------
# Padding
# ---------------------------------------------------------------------------

def pad_to_multiple(t: np.ndarray, multiple: int = PAD_MULTIPLE):
    """Replicate-pad right/bottom so H and W divide ``multiple``.

    Returns (padded tensor, (original_h, original_w)). Idempotent on
    already-legal dims (the input is returned unchanged).
    """
    if t.ndim != 4:
        raise ValueError(f"expected (B, C, H, W), got {t.shape}")
    h, w = t.shape[2], t.shape[3]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h == 0 and pad_w == 0:
        return t, (h, w)
    padded = np.pad(t, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    return padded, (h, w)


def crop_to(t: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Undo pad_to_multiple: keep the top-left (h, w) region."""
    h, w = dims
    if t.ndim != 4:
        raise ValueError(f"expected (B, C, H, W), got {t.shape}")
    if h > t.shape[2] or w > t.shape[3]:
        raise ValueError(f"cannot crop {t.shape[2]}x{t.shape[3]} to {h}x{w}")
    return t[:, :, :h, :w]
