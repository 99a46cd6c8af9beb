#!/usr/bin/env python3
"""The whole command-line workflow in one sitting: train a tiny model,
encode a PPM, decode it back, and sweep an RD curve over a directory.
Each step shells out exactly like `grnc <command>` would."""

import pathlib
import tempfile

import numpy as np

from grnc.cli import main
from grnc.dataio import ImageBuffer, save_ppm_file

work = pathlib.Path(tempfile.mkdtemp(prefix="grnc_demo_"))
data = work / "data"
data.mkdir()
print("working in", work)

# A few synthetic training images, saved as binary PPM (P6).
yy, xx = np.mgrid[0:64, 0:64] / 63.0
for k in range(4):
    plane = 0.5 + 0.4 * np.sin(5.0 * xx + k) * np.cos(3.0 * yy + k)
    rgb = np.stack([plane, np.roll(plane, 7, axis=0), plane.T], axis=-1)
    samples = np.floor(rgb.clip(0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    save_ppm_file(ImageBuffer(64, 64, samples), data / f"card_{k}.ppm")

# train: flat key=value overrides pick the small architecture and a short
# schedule. The checkpoint lands next to a CSV training log.
checkpoint = work / "model.grnm"
small = [
    "code_channels=8", "analysis_channels=16", "front_channels=16",
    "encoder_lstm_channels=32,64,64", "synthesis_channels=64",
    "decoder_lstm_channels=64,64,32,16",
]
args = ["train", str(data), str(checkpoint),
        "--set", "epochs=1", "--set", "steps_per_epoch=30",
        "--set", "batch_size=8", "--set", "iterations=2"]
for assignment in small:
    args += ["--set", assignment]
print("\n$ grnc", " ".join(args))
assert main(args) == 0

# encode: pads to a multiple of 16, packs the sign bits, prints the rate.
stream = work / "card_0.grnb"
args = ["encode", str(checkpoint), str(data / "card_0.ppm"), str(stream),
        "--iterations", "2"]
print("\n$ grnc", " ".join(args))
assert main(args) == 0
print("stream size:", stream.stat().st_size, "bytes")

# decode: full stream, then just the first iteration of the same stream.
args = ["decode", str(checkpoint), str(stream), str(work / "full.ppm")]
print("\n$ grnc", " ".join(args))
assert main(args) == 0
args = ["decode", str(checkpoint), str(stream), str(work / "coarse.ppm"),
        "--iterations", "1"]
print("\n$ grnc", " ".join(args))
assert main(args) == 0

# eval: every image in the directory, every prefix length, one CSV.
csv_path = work / "rd.csv"
args = ["eval", str(checkpoint), str(data), str(csv_path),
        "--max-iterations", "2"]
print("\n$ grnc", " ".join(args))
assert main(args) == 0
print(csv_path.read_text().strip())

# gradcheck: the same oracle suite the test gate runs.
print("\n$ grnc gradcheck")
assert main(["gradcheck"]) == 0
