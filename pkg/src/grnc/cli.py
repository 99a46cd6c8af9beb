"""Command-line driver: train / encode / decode / eval / gradcheck.

Configuration is a flat key=value text file whose keys mirror the
training and architecture config fields (plus the alias ``lr`` for
``learning_rate``); ``--set key=value`` flags override file entries.
Unknown keys are rejected. Every failure path exits non-zero after a
single ``error: ...`` line on stderr. ``GRNC_THREADS`` caps the worker
count used by ``eval``.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .bitstream import (
    BitstreamHeader,
    bits_per_pixel,
    read_bitstream,
    write_bitstream,
)
from .codec import (
    ArchitectureConfig,
    build_model,
    compress,
    decompress,
    load_model,
    model_digest_file,
    save_model,
)
from .dataio import (
    crop_to,
    load_image_file,
    pad_to_multiple,
    save_image_file,
    to_image,
    to_tensor,
)
from .gradcheck import run_suite
from .metrics import RD_CSV_HEADER, rd_csv_rows, rd_points
from .training import TrainConfig, train

IMAGE_SUFFIXES = (".ppm", ".png")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# RunConfig: flat key=value files + --set overrides
# ---------------------------------------------------------------------------

_ALIASES = {"lr": "learning_rate"}
_TRAIN_KEYS = set(TrainConfig.__dataclass_fields__)
_ARCH_KEYS = set(ArchitectureConfig.__dataclass_fields__)


def _coerce(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in t:
        return tuple(_coerce(part) for part in t.split(","))
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def _parse_assignments(lines, source: str) -> dict:
    out = {}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{source}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = _ALIASES.get(key.strip(), key.strip())
        if key not in _TRAIN_KEYS and key not in _ARCH_KEYS:
            raise CliError(f"{source}: unknown config key {key!r}")
        out[key] = _coerce(value)
    return out


def load_run_config(path: str | None, overrides: list[str] | None):
    """Assemble (TrainConfig, ArchitectureConfig) from a key=value file
    and --set overrides; either source is optional."""
    merged: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                merged.update(_parse_assignments(fh, path))
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
    if overrides:
        merged.update(_parse_assignments(overrides, "--set"))
    train_kwargs = {k: v for k, v in merged.items() if k in _TRAIN_KEYS}
    arch_kwargs = {k: v for k, v in merged.items() if k in _ARCH_KEYS}
    try:
        return TrainConfig(**train_kwargs), ArchitectureConfig(**arch_kwargs)
    except (ValueError, TypeError) as exc:
        raise CliError(f"bad config: {exc}") from exc


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _list_images(directory: str) -> list[str]:
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise CliError(f"cannot list {directory}: {exc}") from exc
    return [os.path.join(directory, n) for n in names
            if n.lower().endswith(IMAGE_SUFFIXES)]


def _load_checkpoint(path: str):
    try:
        model = load_model(path)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"bad checkpoint {path}: {exc}") from exc
    return model, model_digest_file(path)


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("GRNC_THREADS", "").strip()
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if limit < 1:
        raise CliError(f"GRNC_THREADS must be >= 1, got {limit}")
    return max(1, min(limit, os.cpu_count() or 1, n_tasks))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    config, arch = load_run_config(args.config, args.set)
    paths = _list_images(args.data_dir)
    images = []
    for p in paths:
        try:
            tensor = to_tensor(load_image_file(p))
        except (ValueError, OSError) as exc:
            print(f"warning: skipping {p}: {exc}", file=sys.stderr)
            continue
        if tensor.shape[2] >= config.patch_size and tensor.shape[3] >= config.patch_size:
            images.append(tensor)
    if not images:
        raise CliError(f"no training images of at least "
                       f"{config.patch_size}x{config.patch_size} in {args.data_dir}")
    arch.patch_size = config.patch_size
    model = build_model(arch, seed=config.seed)
    result = train(model, images, config)
    save_model(model, args.out_checkpoint)
    log_path = args.log or args.out_checkpoint + ".log.csv"
    echo = " ".join(f"{k}={getattr(config, k)!r}".replace("'", "")
                    for k in TrainConfig.__dataclass_fields__)
    with open(log_path, "w", encoding="ascii") as fh:
        fh.write(f"# {echo}\n")
        fh.write("\n".join(result.csv_lines()) + "\n")
    print(f"final_loss {result.final_loss!r}")
    return 0


def cmd_encode(args) -> int:
    model, digest = _load_checkpoint(args.checkpoint)
    try:
        image = load_image_file(args.image_in)
    except (ValueError, OSError) as exc:
        raise CliError(f"cannot read image {args.image_in}: {exc}") from exc
    tensor = to_tensor(image)
    padded, (oh, ow) = pad_to_multiple(tensor)
    if args.iterations < 1:
        raise CliError("iterations must be >= 1")
    trace = compress(model, padded, args.iterations, mode=args.mode)
    header = BitstreamHeader(
        original_width=ow, original_height=oh,
        padded_width=padded.shape[3], padded_height=padded.shape[2],
        iterations=args.iterations, code_channels=model.config.code_channels,
        mode=args.mode, model_digest=digest,
    )
    stream = write_bitstream(header, [c[0] for c in trace.codes])
    with open(args.stream_out, "wb") as fh:
        fh.write(stream)
    print(f"bpp {bits_per_pixel(header)!r}")
    return 0


def cmd_decode(args) -> int:
    model, digest = _load_checkpoint(args.checkpoint)
    try:
        with open(args.stream_in, "rb") as fh:
            header, codes = read_bitstream(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read stream {args.stream_in}: {exc}") from exc
    if header.model_digest != digest:
        if args.strict:
            raise CliError("model digest mismatch between stream and checkpoint")
        print("warning: model digest mismatch between stream and checkpoint",
              file=sys.stderr)
    if header.code_channels != model.config.code_channels:
        raise CliError(
            f"stream carries {header.code_channels} code channels, "
            f"checkpoint expects {model.config.code_channels}"
        )
    k = args.iterations if args.iterations is not None else header.iterations
    if not 1 <= k <= header.iterations:
        raise CliError(f"iterations must be in 1..{header.iterations}, got {k}")
    batch = [c[None] for c in codes[:k]]
    xhat = decompress(model, batch, mode=header.mode)
    cropped = crop_to(xhat, (header.original_height, header.original_width))
    save_image_file(to_image(cropped), args.image_out)
    return 0


def _eval_one(model, path: str, t_max: int, mode: str):
    tensor = to_tensor(load_image_file(path))
    padded, dims = pad_to_multiple(tensor)
    points = rd_points(model, padded, t_max, mode=mode, original_dims=dims)
    return rd_csv_rows(os.path.basename(path), points)


def cmd_eval(args) -> int:
    model, _ = _load_checkpoint(args.checkpoint)
    paths = _list_images(args.image_dir)
    if not paths:
        raise CliError(f"no images in {args.image_dir}")
    if args.max_iterations < 1:
        raise CliError("max-iterations must be >= 1")
    workers = _worker_count(len(paths))
    results: dict[str, list[str] | None] = {}

    def run(path):
        try:
            return _eval_one(model, path, args.max_iterations, args.mode)
        except (ValueError, OSError) as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
            return None

    if workers == 1:
        for p in paths:
            results[p] = run(p)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for p, rows in zip(paths, pool.map(run, paths)):
                results[p] = rows
    lines = [RD_CSV_HEADER]
    skipped = 0
    for p in paths:  # deterministic (sorted) order regardless of completion
        rows = results[p]
        if rows is None:
            skipped += 1
        else:
            lines.extend(rows)
    with open(args.csv_out, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    if skipped and args.strict:
        raise CliError(f"{skipped} image(s) skipped")
    return 0


def cmd_gradcheck(args) -> int:
    reports = run_suite(seed=args.seed, tolerance=args.tolerance)
    for report in reports:
        print(report.line())
    failed = [r.name for r in reports if not r.passed]
    if failed:
        raise CliError(f"gradient check failed: {', '.join(failed)}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grnc",
        description="Variable-rate recurrent image codec: train, code, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a directory of images")
    p.add_argument("data_dir")
    p.add_argument("out_checkpoint")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="compress an image to a GRNB stream")
    p.add_argument("checkpoint")
    p.add_argument("image_in")
    p.add_argument("stream_out")
    p.add_argument("--iterations", type=int, default=8)
    p.add_argument("--mode", choices=("one_shot", "additive"), default="one_shot")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct an image from a GRNB stream")
    p.add_argument("checkpoint")
    p.add_argument("stream_in")
    p.add_argument("image_out")
    p.add_argument("--iterations", type=int, default=None,
                   help="decode only the first k iterations")
    p.add_argument("--strict", action="store_true",
                   help="treat model digest mismatch as an error")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="emit per-image rate-distortion CSV")
    p.add_argument("checkpoint")
    p.add_argument("image_dir")
    p.add_argument("csv_out")
    p.add_argument("--max-iterations", type=int, default=8)
    p.add_argument("--mode", choices=("one_shot", "additive"), default="one_shot")
    p.add_argument("--strict", action="store_true",
                   help="exit non-zero if any image was skipped")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all backward ops")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
