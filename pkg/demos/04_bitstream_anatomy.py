#!/usr/bin/env python3
"""Dissect the GRNB container byte by byte: a 59-byte little-endian header
followed by one byte-aligned block of packed sign bits per iteration."""

import struct

import numpy as np

from grnc.bitstream import (
    HEADER_SIZE,
    BitstreamHeader,
    bits_per_pixel,
    read_bitstream,
    write_bitstream,
)

# Two iterations of 8-channel codes for a 16x16 image (code maps are 1x1
# after the 16x downsampling). 8 bits per iteration packs into 1 byte.
header = BitstreamHeader(original_width=13, original_height=11,
                         padded_width=16, padded_height=16,
                         iterations=2, code_channels=8,
                         model_digest=bytes(range(32)))
codes = [
    np.array([+1, -1, -1, +1, +1, +1, -1, +1], dtype=np.float32).reshape(8, 1, 1),
    np.array([-1, -1, -1, -1, +1, +1, +1, +1], dtype=np.float32).reshape(8, 1, 1),
]
blob = write_bitstream(header, codes)
print("total bytes:", len(blob), f"({HEADER_SIZE} header + 2 payload)")

# Hexdump of the whole stream.
for offset in range(0, len(blob), 16):
    chunk = blob[offset:offset + 16]
    print(f"{offset:04x}  {chunk.hex(' ')}")

# The header layout, decoded by hand with struct. '<' means little-endian
# throughout; the digest pins the stream to the model that wrote it.
fields = struct.unpack("<4sHIIIIHHB32s", blob[:HEADER_SIZE])
names = ["magic", "version", "orig_w", "orig_h", "padded_w", "padded_h",
         "iterations", "code_channels", "mode", "model_digest"]
print()
for name, value in zip(names, fields):
    if isinstance(value, bytes) and len(value) == 32:
        value = value.hex()[:16] + "..."
    print(f"{name:14s} {value}")

# Payload: +1 -> bit 1, -1 -> bit 0, most significant bit first, flattened
# in C order. Iteration 1 is [+1 -1 -1 +1 +1 +1 -1 +1] -> 0b10011101.
print()
print("payload bits:", format(blob[HEADER_SIZE], "08b"),
      format(blob[HEADER_SIZE + 1], "08b"))

# Reading back is bit-exact, and rate falls straight out of the header.
recovered_header, recovered_codes = read_bitstream(blob)
print("roundtrip exact:", recovered_header == header and
      all(np.array_equal(a, b) for a, b in zip(codes, recovered_codes)))
print("bits per pixel:", bits_per_pixel(recovered_header),
      "(= iterations * channels / 256)")
