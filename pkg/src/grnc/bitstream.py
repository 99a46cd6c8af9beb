"""Bit-exact serialized form of a compressed image (GRNB container).

Layout: a fixed little-endian header followed by one bit-packed payload
per refinement iteration. Codes map +1 -> 1 and -1 -> 0, are laid out
channel-major then row-major within each plane, packed MSB-first, and
each iteration's payload is zero-padded to a byte boundary so a reader
can stop after any prefix of iterations (progressive reconstruction).

Storage is raw one bit per code; no entropy coder. With the fixed 16x
spatial reduction that makes the rate exactly
``iterations * code_channels / 256`` bits per (padded) pixel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

BITSTREAM_MAGIC = b"GRNB"
BITSTREAM_VERSION = 1
MODE_CODES = {"one_shot": 0, "additive": 1}
MODE_NAMES = {v: k for k, v in MODE_CODES.items()}

_HEADER_STRUCT = struct.Struct("<4sHIIIIHHB32s")
HEADER_SIZE = _HEADER_STRUCT.size  # 59 bytes

_CODE_GRID = 16  # pixels per code location along each axis


class BitstreamError(ValueError):
    pass


class BadMagicError(BitstreamError):
    pass


class UnsupportedVersionError(BitstreamError):
    pass


class TruncatedPayloadError(BitstreamError):
    pass


@dataclass
class BitstreamHeader:
    original_width: int
    original_height: int
    padded_width: int
    padded_height: int
    iterations: int
    code_channels: int
    mode: str = "one_shot"
    model_digest: bytes = b"\x00" * 32
    version: int = BITSTREAM_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.iterations < 1:
            raise BitstreamError("iterations must be >= 1")
        if self.code_channels < 1:
            raise BitstreamError("code_channels must be >= 1")
        if self.mode not in MODE_CODES:
            raise BitstreamError(f"unknown reconstruction mode {self.mode!r}")
        if len(self.model_digest) != 32:
            raise BitstreamError("model_digest must be exactly 32 bytes")
        for name in ("original_width", "original_height", "padded_width", "padded_height"):
            if getattr(self, name) < 1:
                raise BitstreamError(f"{name} must be >= 1")
        if self.padded_width % _CODE_GRID or self.padded_height % _CODE_GRID:
            raise BitstreamError(
                f"padded dims {self.padded_width}x{self.padded_height} must be "
                f"divisible by {_CODE_GRID}"
            )
        if self.padded_width < self.original_width or self.padded_height < self.original_height:
            raise BitstreamError("padded dims must not be smaller than original dims")

    @property
    def code_height(self) -> int:
        return self.padded_height // _CODE_GRID

    @property
    def code_width(self) -> int:
        return self.padded_width // _CODE_GRID

    @property
    def bits_per_iteration(self) -> int:
        return self.code_channels * self.code_height * self.code_width

    @property
    def bytes_per_iteration(self) -> int:
        return (self.bits_per_iteration + 7) // 8

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(
            BITSTREAM_MAGIC,
            self.version,
            self.original_width,
            self.original_height,
            self.padded_width,
            self.padded_height,
            self.iterations,
            self.code_channels,
            MODE_CODES[self.mode],
            self.model_digest,
        )

    @classmethod
    def unpack(cls, data: bytes) -> "BitstreamHeader":
        if len(data) < HEADER_SIZE:
            raise TruncatedPayloadError(
                f"stream has {len(data)} bytes, header alone needs {HEADER_SIZE}"
            )
        (magic, version, ow, oh, pw, ph, iterations, channels, mode_code,
         digest) = _HEADER_STRUCT.unpack(data[:HEADER_SIZE])
        if magic != BITSTREAM_MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {BITSTREAM_MAGIC!r}")
        if version != BITSTREAM_VERSION:
            raise UnsupportedVersionError(f"unknown version {version}")
        if mode_code not in MODE_NAMES:
            raise BitstreamError(f"unknown mode code {mode_code}")
        return cls(ow, oh, pw, ph, iterations, channels, MODE_NAMES[mode_code],
                   digest, version)


def _pack_codes(codes: np.ndarray) -> bytes:
    flat = (np.asarray(codes).reshape(-1) > 0).astype(np.uint8)
    return np.packbits(flat).tobytes()


def _unpack_codes(payload: bytes, header: BitstreamHeader) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8),
                         count=header.bits_per_iteration)
    codes = bits.astype(np.float32) * 2.0 - 1.0
    return codes.reshape(header.code_channels, header.code_height, header.code_width)


def write_bitstream(header: BitstreamHeader, codes: list[np.ndarray]) -> bytes:
    """Serialize header + per-iteration code tensors of shape
    (code_channels, H/16, W/16) holding only +-1."""
    header.validate()
    if len(codes) != header.iterations:
        raise BitstreamError(
            f"header says {header.iterations} iterations, got {len(codes)} code tensors"
        )
    expected = (header.code_channels, header.code_height, header.code_width)
    out = bytearray(header.pack())
    for t, c in enumerate(codes):
        c = np.asarray(c)
        if c.shape != expected:
            raise BitstreamError(
                f"iteration {t} codes have shape {c.shape}, header demands {expected}"
            )
        if np.any(np.abs(c) != 1):
            raise BitstreamError(f"iteration {t} codes contain values other than +-1")
        out += _pack_codes(c)
    return bytes(out)


def read_bitstream(data: bytes) -> tuple[BitstreamHeader, list[np.ndarray]]:
    """Exact inverse of write_bitstream."""
    header = BitstreamHeader.unpack(data)
    pos = HEADER_SIZE
    per_iter = header.bytes_per_iteration
    codes = []
    for t in range(header.iterations):
        chunk = data[pos:pos + per_iter]
        if len(chunk) < per_iter:
            raise TruncatedPayloadError(
                f"truncated payload: iteration {t} needs {per_iter} bytes, "
                f"{len(chunk)} left"
            )
        codes.append(_unpack_codes(chunk, header))
        pos += per_iter
    if pos != len(data):
        raise BitstreamError(f"{len(data) - pos} trailing bytes after payload")
    return header, codes


def bits_per_pixel(header: BitstreamHeader) -> float:
    """Rate over the padded canvas: iterations * code_channels / 256."""
    total_bits = header.iterations * header.bits_per_iteration
    return total_bits / float(header.padded_width * header.padded_height)


def bits_per_pixel_original(header: BitstreamHeader) -> float:
    """Reporting variant: same stored bits charged to the original pixel
    count (>= the padded-dims figure when padding occurred)."""
    total_bits = header.iterations * header.bits_per_iteration
    return total_bits / float(header.original_width * header.original_height)
