"""Recurrent variable-rate codec: encoder, binarizer, decoder, and the
iterative residual loop.

The encoder stacks an analysis unit (3x3 convolution + GDN), a stride-2
front convolution, and three stride-2 convolutional LSTM cells, for a
total spatial reduction of 16x. A 1x1 convolution + tanh + binarizer
turns the top features into one bit per code channel per location. The
decoder mirrors it: a 1x1 synthesis convolution + inverse GDN, four LSTM
cells each followed by depth-to-space(2), and a final 3x3 convolution
with tanh output.

Each iteration encodes the current residual and decodes a new estimate;
LSTM states persist across iterations so later iterations refine what
earlier ones missed. In 'one_shot' mode every iteration decodes a full
image (estimate = decoder output + 0.5); in 'additive' mode decoder
outputs accumulate. Reconstructions clamp to [0, 1] before the residual
is formed.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    ConvParams,
    GdnParams,
    LstmCache,
    LstmParams,
    LstmState,
    binarize,
    binarize_backward,
    conv2d_backward,
    conv2d_forward,
    conv_lstm_backward,
    conv_lstm_step,
    conv_lstm_step_cached,
    depth_to_space,
    gdn_backward,
    gdn_forward_cached,
    igdn_backward,
    igdn_forward_cached,
    lstm_state_zeros,
    space_to_depth,
)

SPATIAL_REDUCTION = 16
RECONSTRUCTION_MODES = ("one_shot", "additive")
BINARIZER_MODES = ("sign", "stochastic", "identity")

MODEL_MAGIC = b"GRNM"
MODEL_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ArchitectureConfig:
    """Channel plan of the codec.

    The spatial layout is fixed (stride-2 front convolution, three
    stride-2 encoder cells, four decoder cells each followed by
    depth-to-space(2), so both sides rescale by 16); the channel widths
    and the binarizer width are the tunable knobs.
    """

    patch_size: int = 32
    code_channels: int = 38
    use_gdn: bool = True
    analysis_channels: int = 64
    front_channels: int = 64
    encoder_lstm_channels: tuple[int, ...] = (256, 512, 512)
    synthesis_channels: int = 512
    decoder_lstm_channels: tuple[int, ...] = (512, 512, 256, 128)

    def __post_init__(self):
        self.encoder_lstm_channels = tuple(int(c) for c in self.encoder_lstm_channels)
        self.decoder_lstm_channels = tuple(int(c) for c in self.decoder_lstm_channels)
        self.validate()

    def validate(self):
        if self.patch_size < SPATIAL_REDUCTION or self.patch_size % SPATIAL_REDUCTION:
            raise ValueError(f"patch_size must be a positive multiple of {SPATIAL_REDUCTION}")
        if len(self.encoder_lstm_channels) != 3:
            raise ValueError("encoder needs exactly 3 LSTM cells")
        if len(self.decoder_lstm_channels) != 4:
            raise ValueError("decoder needs exactly 4 LSTM cells")
        channels = (self.code_channels, self.analysis_channels, self.front_channels,
                    self.synthesis_channels) + self.encoder_lstm_channels + \
                   self.decoder_lstm_channels
        if any(c < 1 for c in channels):
            raise ValueError("all channel counts must be >= 1")
        for c in self.decoder_lstm_channels:
            if c % 4:
                raise ValueError(
                    f"decoder cell hidden channels must be divisible by 4 "
                    f"(depth-to-space block 2), got {c}"
                )

    @property
    def binarizer_in_channels(self) -> int:
        return self.encoder_lstm_channels[-1]

    @property
    def decoder_cell_in_channels(self) -> tuple[int, ...]:
        prev = [self.synthesis_channels]
        for c in self.decoder_lstm_channels[:-1]:
            prev.append(c // 4)
        return tuple(prev)

    @property
    def final_in_channels(self) -> int:
        return self.decoder_lstm_channels[-1] // 4

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "code_channels": self.code_channels,
            "use_gdn": self.use_gdn,
            "analysis_channels": self.analysis_channels,
            "front_channels": self.front_channels,
            "encoder_lstm_channels": list(self.encoder_lstm_channels),
            "synthesis_channels": self.synthesis_channels,
            "decoder_lstm_channels": list(self.decoder_lstm_channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown architecture fields: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("encoder_lstm_channels", "decoder_lstm_channels"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def desk_config(code_channels: int = 8) -> ArchitectureConfig:
    """Slim channel plan for laptop-scale experiments and the test suite.

    Same structure as the default (GDN, 3 + 4 LSTM cells, binarizer), an
    order of magnitude fewer parameters.
    """
    return ArchitectureConfig(
        code_channels=code_channels,
        analysis_channels=16,
        front_channels=16,
        encoder_lstm_channels=(32, 64, 64),
        synthesis_channels=64,
        decoder_lstm_channels=(64, 64, 32, 16),
    )


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class CodecModel:
    """All learnable parameters plus the architecture configuration."""

    config: ArchitectureConfig
    analysis_conv: ConvParams
    analysis_gdn: GdnParams | None
    front_conv: ConvParams
    enc_cells: list[LstmParams]
    bin_conv: ConvParams
    synth_conv: ConvParams
    synth_igdn: GdnParams | None
    dec_cells: list[LstmParams]
    final_conv: ConvParams
    format_version: int = MODEL_FORMAT_VERSION

    @property
    def dtype(self):
        return self.analysis_conv.weight.dtype

    def parameters(self) -> dict[str, np.ndarray]:
        """Named parameter tensors in fixed declaration order."""
        params: dict[str, np.ndarray] = {}

        def add_conv(name: str, p: ConvParams):
            params[f"{name}.weight"] = p.weight
            params[f"{name}.bias"] = p.bias

        def add_gdn(name: str, p: GdnParams | None):
            if p is not None:
                params[f"{name}.beta"] = p.beta
                params[f"{name}.gamma"] = p.gamma

        def add_cell(name: str, p: LstmParams):
            add_conv(f"{name}.input", p.input_conv)
            add_conv(f"{name}.hidden", p.hidden_conv)

        add_conv("analysis_conv", self.analysis_conv)
        add_gdn("analysis_gdn", self.analysis_gdn)
        add_conv("front_conv", self.front_conv)
        for i, cell in enumerate(self.enc_cells):
            add_cell(f"enc_cell{i}", cell)
        add_conv("bin_conv", self.bin_conv)
        add_conv("synth_conv", self.synth_conv)
        add_gdn("synth_igdn", self.synth_igdn)
        for i, cell in enumerate(self.dec_cells):
            add_cell(f"dec_cell{i}", cell)
        add_conv("final_conv", self.final_conv)
        return params

    def gdn_projections(self) -> dict[str, float]:
        """Minimum values re-imposed on GDN parameters after each optimizer step."""
        from .layers import GDN_BETA_FLOOR

        spec: dict[str, float] = {}
        if self.analysis_gdn is not None:
            spec["analysis_gdn.beta"] = GDN_BETA_FLOOR
            spec["analysis_gdn.gamma"] = 0.0
        if self.synth_igdn is not None:
            spec["synth_igdn.beta"] = GDN_BETA_FLOOR
            spec["synth_igdn.gamma"] = 0.0
        return spec


def build_model(config: ArchitectureConfig, seed: int, dtype=np.float32) -> CodecModel:
    """Deterministic initialization: convolution weights uniform in
    +-sqrt(6 / (fan_in + fan_out)), zero biases, GDN beta = 1 and
    gamma = 0.1 * identity."""
    config.validate()
    rng = np.random.default_rng(seed)

    def conv(out_ch: int, in_ch: int, kernel: int, stride: int, padding: int) -> ConvParams:
        fan_in = in_ch * kernel * kernel
        fan_out = out_ch * kernel * kernel
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-a, a, size=(out_ch, in_ch, kernel, kernel)).astype(dtype)
        return ConvParams(weight, np.zeros(out_ch, dtype=dtype), stride, padding)

    def gdn(channels: int) -> GdnParams:
        return GdnParams(
            np.ones(channels, dtype=dtype),
            (0.1 * np.eye(channels)).astype(dtype),
        )

    def cell(in_ch: int, hidden: int, stride: int) -> LstmParams:
        return LstmParams(
            input_conv=conv(4 * hidden, in_ch, 3, stride, 1),
            hidden_conv=conv(4 * hidden, hidden, 1, 1, 0),
        )

    cfg = config
    analysis_conv = conv(cfg.analysis_channels, 3, 3, 1, 1)
    analysis_gdn = gdn(cfg.analysis_channels) if cfg.use_gdn else None
    front_conv = conv(cfg.front_channels, cfg.analysis_channels, 3, 2, 1)
    enc_in = [cfg.front_channels, cfg.encoder_lstm_channels[0], cfg.encoder_lstm_channels[1]]
    enc_cells = [cell(i, h, 2) for i, h in zip(enc_in, cfg.encoder_lstm_channels)]
    bin_conv = conv(cfg.code_channels, cfg.binarizer_in_channels, 1, 1, 0)
    synth_conv = conv(cfg.synthesis_channels, cfg.code_channels, 1, 1, 0)
    synth_igdn = gdn(cfg.synthesis_channels) if cfg.use_gdn else None
    dec_cells = [cell(i, h, 1)
                 for i, h in zip(cfg.decoder_cell_in_channels, cfg.decoder_lstm_channels)]
    final_conv = conv(3, cfg.final_in_channels, 3, 1, 1)
    return CodecModel(
        config=cfg,
        analysis_conv=analysis_conv,
        analysis_gdn=analysis_gdn,
        front_conv=front_conv,
        enc_cells=enc_cells,
        bin_conv=bin_conv,
        synth_conv=synth_conv,
        synth_igdn=synth_igdn,
        dec_cells=dec_cells,
        final_conv=final_conv,
    )


# ---------------------------------------------------------------------------
# Forward paths
# ---------------------------------------------------------------------------

@dataclass
class EncCache:
    analysis_in: np.ndarray
    gdn_in: np.ndarray | None
    gdn_denom: np.ndarray | None
    front_in: np.ndarray
    cells: list[LstmCache]
    bin_in: np.ndarray
    bin_tanh: np.ndarray


@dataclass
class DecCache:
    synth_in: np.ndarray
    igdn_in: np.ndarray | None
    igdn_denom: np.ndarray | None
    cells: list[LstmCache]
    final_in: np.ndarray
    final_tanh: np.ndarray


@dataclass
class UnrollCaches:
    """Everything the backward pass needs, per iteration."""

    mode: str
    enc: list[EncCache] = field(default_factory=list)
    dec: list[DecCache] = field(default_factory=list)
    clamp_pass: list[np.ndarray] = field(default_factory=list)


def _check_coding_dims(h: int, w: int) -> None:
    if h % SPATIAL_REDUCTION or w % SPATIAL_REDUCTION:
        raise ValueError(
            f"spatial dims {h}x{w} must be divisible by {SPATIAL_REDUCTION}; "
            "pad the input first"
        )


def init_encoder_states(model: CodecModel, batch: int, h: int, w: int) -> list[LstmState]:
    _check_coding_dims(h, w)
    dtype = model.dtype
    states = []
    hh, ww = h // 2, w // 2  # after the stride-2 front convolution
    for cell in model.enc_cells:
        states.append(lstm_state_zeros(cell, batch, hh, ww, dtype))
        hh, ww = hh // 2, ww // 2
    return states


def init_decoder_states(model: CodecModel, batch: int, h: int, w: int) -> list[LstmState]:
    _check_coding_dims(h, w)
    dtype = model.dtype
    states = []
    hh, ww = h // SPATIAL_REDUCTION, w // SPATIAL_REDUCTION
    for cell in model.dec_cells:
        states.append(lstm_state_zeros(cell, batch, hh, ww, dtype))
        hh, ww = hh * 2, ww * 2
    return states


def _encoder_apply(model: CodecModel, x: np.ndarray, states: list[LstmState],
                   collect: bool):
    new_states = []
    cache_cells: list[LstmCache] = []
    analysis_in = x
    a = conv2d_forward(x, model.analysis_conv)
    gdn_in = gdn_denom = None
    if model.analysis_gdn is not None:
        gdn_in = a
        a, gdn_denom = gdn_forward_cached(a, model.analysis_gdn)
    front_in = a
    a = conv2d_forward(a, model.front_conv)
    for cell, state in zip(model.enc_cells, states):
        if collect:
            a, new_state, cc = conv_lstm_step_cached(a, state, cell)
            cache_cells.append(cc)
        else:
            a, new_state = conv_lstm_step(a, state, cell)
        new_states.append(new_state)
    bin_in = a
    pre_codes = np.tanh(conv2d_forward(a, model.bin_conv))
    cache = None
    if collect:
        cache = EncCache(analysis_in, gdn_in, gdn_denom, front_in, cache_cells,
                         bin_in, pre_codes)
    return pre_codes, new_states, cache


def _decoder_apply(model: CodecModel, codes: np.ndarray, states: list[LstmState],
                   collect: bool):
    new_states = []
    cache_cells: list[LstmCache] = []
    synth_in = codes
    a = conv2d_forward(codes, model.synth_conv)
    igdn_in = igdn_denom = None
    if model.synth_igdn is not None:
        igdn_in = a
        a, igdn_denom = igdn_forward_cached(a, model.synth_igdn)
    for cell, state in zip(model.dec_cells, states):
        if collect:
            a, new_state, cc = conv_lstm_step_cached(a, state, cell)
            cache_cells.append(cc)
        else:
            a, new_state = conv_lstm_step(a, state, cell)
        new_states.append(new_state)
        a = depth_to_space(a, 2)
    final_in = a
    estimate = np.tanh(conv2d_forward(a, model.final_conv))
    cache = None
    if collect:
        cache = DecCache(synth_in, igdn_in, igdn_denom, cache_cells, final_in, estimate)
    return estimate, new_states, cache


def encode_step(model: CodecModel, residual: np.ndarray, states: list[LstmState],
                binarizer: str = "sign", rng: np.random.Generator | None = None):
    """Encode one residual into +-1 codes; returns (codes, new_states)."""
    _check_coding_dims(residual.shape[2], residual.shape[3])
    pre_codes, new_states, _ = _encoder_apply(model, residual, states, collect=False)
    return _apply_binarizer(pre_codes, binarizer, rng), new_states


def decode_step(model: CodecModel, codes: np.ndarray, states: list[LstmState]):
    """Decode one iteration's codes into an image estimate in (-1, 1);
    returns (estimate, new_states)."""
    if codes.shape[1] != model.config.code_channels:
        raise ValueError(
            f"codes have {codes.shape[1]} channels, model expects "
            f"{model.config.code_channels}"
        )
    estimate, new_states, _ = _decoder_apply(model, codes, states, collect=False)
    return estimate, new_states


def _apply_binarizer(pre_codes: np.ndarray, mode: str, rng) -> np.ndarray:
    if mode == "identity":
        # Differentiable stand-in used by gradient tests; not a real coder.
        return pre_codes
    return binarize(pre_codes, mode, rng)


# ---------------------------------------------------------------------------
# Iterative residual loop
# ---------------------------------------------------------------------------

@dataclass
class IterationTrace:
    """Per-iteration codes, reconstructions and residuals, plus r_0 = x."""

    initial_residual: np.ndarray
    codes: list[np.ndarray]
    reconstructions: list[np.ndarray]
    residuals: list[np.ndarray]
    mode: str

    @property
    def iterations(self) -> int:
        return len(self.codes)


def run_iterations(model: CodecModel, image: np.ndarray, iterations: int,
                   mode: str = "one_shot", binarizer: str = "sign",
                   rng: np.random.Generator | None = None, collect: bool = False):
    """Run the full encode/decode loop for a batch of images in [0, 1].

    Returns (trace, caches); caches is None unless ``collect``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if mode not in RECONSTRUCTION_MODES:
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    if binarizer not in BINARIZER_MODES:
        raise ValueError(f"unknown binarizer mode {binarizer!r}")
    if image.ndim != 4 or image.shape[1] != 3:
        raise ValueError(f"image batch must be (B, 3, H, W), got {image.shape}")
    b, _, h, w = image.shape
    _check_coding_dims(h, w)

    x = image
    enc_states = init_encoder_states(model, b, h, w)
    dec_states = init_decoder_states(model, b, h, w)
    caches = UnrollCaches(mode) if collect else None
    trace = IterationTrace(x, [], [], [], mode)

    xhat_prev = np.zeros_like(x)
    r_prev = x
    for t in range(iterations):
        if mode == "one_shot" and t == 0:
            enc_in = x - 0.5
        else:
            enc_in = r_prev
        pre_codes, enc_states, ecache = _encoder_apply(model, enc_in, enc_states, collect)
        codes = _apply_binarizer(pre_codes, binarizer, rng)
        estimate, dec_states, dcache = _decoder_apply(model, codes, dec_states, collect)
        if mode == "one_shot":
            pre_image = estimate + 0.5
        else:
            pre_image = xhat_prev + estimate
        xhat = np.clip(pre_image, 0.0, 1.0)
        r = x - xhat
        trace.codes.append(codes)
        trace.reconstructions.append(xhat)
        trace.residuals.append(r)
        if collect:
            caches.enc.append(ecache)
            caches.dec.append(dcache)
            caches.clamp_pass.append(
                ((pre_image >= 0.0) & (pre_image <= 1.0)).astype(x.dtype)
            )
        xhat_prev, r_prev = xhat, r
    return trace, caches


def compress(model: CodecModel, image: np.ndarray, iterations: int,
             mode: str = "one_shot", binarizer: str = "sign",
             rng: np.random.Generator | None = None) -> IterationTrace:
    """Encode an image batch for ``iterations`` refinement rounds."""
    trace, _ = run_iterations(model, image, iterations, mode, binarizer, rng)
    return trace


def decompress(model: CodecModel, codes: list[np.ndarray], iterations: int | None = None,
               mode: str = "one_shot") -> np.ndarray:
    """Reconstruct from per-iteration codes; reproduces exactly the
    reconstruction ``compress`` computed for the same codes and mode."""
    if len(codes) == 0:
        raise ValueError("no code tensors to decode")
    if iterations is None:
        iterations = len(codes)
    if iterations != len(codes):
        raise ValueError(f"{len(codes)} code tensors but {iterations} iterations requested")
    if mode not in RECONSTRUCTION_MODES:
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    dtype = model.dtype
    first = np.asarray(codes[0])
    if first.ndim != 4:
        raise ValueError(f"code tensors must be 4-D, got {first.shape}")
    b, _, ch, cw = first.shape
    h, w = ch * SPATIAL_REDUCTION, cw * SPATIAL_REDUCTION
    dec_states = init_decoder_states(model, b, h, w)
    xhat = np.zeros((b, 3, h, w), dtype=dtype)
    for c in codes:
        c = np.asarray(c)
        if np.any(np.abs(c) != 1):
            raise ValueError("codes must contain only +-1 values")
        estimate, dec_states, _ = _decoder_apply(model, c.astype(dtype), dec_states,
                                                 collect=False)
        if mode == "one_shot":
            xhat = np.clip(estimate + 0.5, 0.0, 1.0)
        else:
            xhat = np.clip(xhat + estimate, 0.0, 1.0)
    return xhat


# ---------------------------------------------------------------------------
# Unrolled backward (training support)
# ---------------------------------------------------------------------------

def zero_gradients(model: CodecModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in model.parameters().items()}


def _accum_conv(grads: dict, name: str, gw: np.ndarray, gb: np.ndarray) -> None:
    grads[f"{name}.weight"] += gw
    grads[f"{name}.bias"] += gb


def _decoder_backward(model: CodecModel, cache: DecCache, grad_estimate: np.ndarray,
                      state_grads: list[LstmState | None], grads: dict) -> np.ndarray:
    g = grad_estimate * (1.0 - cache.final_tanh * cache.final_tanh)
    g, gw, gb = conv2d_backward(g, cache.final_in, model.final_conv)
    _accum_conv(grads, "final_conv", gw, gb)
    for j in range(len(model.dec_cells) - 1, -1, -1):
        g = space_to_depth(g, 2)
        grad_x, state_prev, (gwi, gbi, gwh, gbh) = conv_lstm_backward(
            g, state_grads[j], cache.cells[j], model.dec_cells[j]
        )
        state_grads[j] = state_prev
        _accum_conv(grads, f"dec_cell{j}.input", gwi, gbi)
        _accum_conv(grads, f"dec_cell{j}.hidden", gwh, gbh)
        g = grad_x
    if model.synth_igdn is not None:
        g, gbeta, ggamma = igdn_backward(g, cache.igdn_in, model.synth_igdn,
                                         cache.igdn_denom)
        grads["synth_igdn.beta"] += gbeta
        grads["synth_igdn.gamma"] += ggamma
    g, gw, gb = conv2d_backward(g, cache.synth_in, model.synth_conv)
    _accum_conv(grads, "synth_conv", gw, gb)
    return g


def _encoder_backward(model: CodecModel, cache: EncCache, grad_codes: np.ndarray,
                      state_grads: list[LstmState | None], grads: dict) -> np.ndarray:
    g = binarize_backward(grad_codes)
    g = g * (1.0 - cache.bin_tanh * cache.bin_tanh)
    g, gw, gb = conv2d_backward(g, cache.bin_in, model.bin_conv)
    _accum_conv(grads, "bin_conv", gw, gb)
    for j in range(len(model.enc_cells) - 1, -1, -1):
        grad_x, state_prev, (gwi, gbi, gwh, gbh) = conv_lstm_backward(
            g, state_grads[j], cache.cells[j], model.enc_cells[j]
        )
        state_grads[j] = state_prev
        _accum_conv(grads, f"enc_cell{j}.input", gwi, gbi)
        _accum_conv(grads, f"enc_cell{j}.hidden", gwh, gbh)
        g = grad_x
    g, gw, gb = conv2d_backward(g, cache.front_in, model.front_conv)
    _accum_conv(grads, "front_conv", gw, gb)
    if model.analysis_gdn is not None:
        g, gbeta, ggamma = gdn_backward(g, cache.gdn_in, model.analysis_gdn,
                                        cache.gdn_denom)
        grads["analysis_gdn.beta"] += gbeta
        grads["analysis_gdn.gamma"] += ggamma
    g, gw, gb = conv2d_backward(g, cache.analysis_in, model.analysis_conv)
    _accum_conv(grads, "analysis_conv", gw, gb)
    return g


def unrolled_backward(model: CodecModel, caches: UnrollCaches,
                      residual_grads: list[np.ndarray]) -> dict[str, np.ndarray]:
    """Backpropagate through the full iteration unroll.

    ``residual_grads[t]`` is the loss gradient w.r.t. residual r_{t+1};
    contributions that flow between iterations (residual feedback into the
    next encoder pass, additive reconstruction carry, LSTM state chains)
    are handled here. The binarizer uses the straight-through estimator.
    """
    t_count = len(caches.enc)
    if len(residual_grads) != t_count:
        raise ValueError(f"{len(residual_grads)} residual grads for {t_count} iterations")
    grads = zero_gradients(model)
    g_r = [np.array(g) for g in residual_grads]
    enc_state_grads: list[LstmState | None] = [None] * len(model.enc_cells)
    dec_state_grads: list[LstmState | None] = [None] * len(model.dec_cells)
    g_xhat_carry: np.ndarray | None = None
    for t in range(t_count - 1, -1, -1):
        g_xhat = -g_r[t]
        if caches.mode == "additive" and g_xhat_carry is not None:
            g_xhat = g_xhat + g_xhat_carry
        g_pre_image = g_xhat * caches.clamp_pass[t]
        if caches.mode == "additive":
            g_xhat_carry = g_pre_image
        g_codes = _decoder_backward(model, caches.dec[t], g_pre_image,
                                    dec_state_grads, grads)
        g_enc_in = _encoder_backward(model, caches.enc[t], g_codes,
                                     enc_state_grads, grads)
        if t >= 1:
            g_r[t - 1] += g_enc_in
    return grads


# ---------------------------------------------------------------------------
# Checkpoint format (GRNM)
# ---------------------------------------------------------------------------

def save_model_bytes(model: CodecModel) -> bytes:
    """Serialize to the versioned GRNM container.

    Layout: magic 'GRNM', u16 format version, u32 config length + config
    JSON, then each parameter tensor in declaration order as u8 ndim,
    u32 extents, little-endian float32 values.
    """
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<H", model.format_version)
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(config_blob))
    out += config_blob
    for name, arr in model.parameters().items():
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


def save_model(model: CodecModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model_bytes(model))


def load_model_bytes(data: bytes, dtype=np.float32) -> CodecModel:
    view = memoryview(data)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != MODEL_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != MODEL_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (config_len,) = struct.unpack("<I", take(4, "config length"))
    try:
        config = ArchitectureConfig.from_dict(
            json.loads(bytes(take(config_len, "config")).decode("utf-8"))
        )
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed config block: {exc}") from exc

    model = build_model(config, seed=0, dtype=dtype)
    for name, arr in model.parameters().items():
        (ndim,) = struct.unpack("<B", take(1, f"{name} ndim"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"{name} shape"))
        if shape != arr.shape:
            raise CheckpointError(
                f"parameter {name} has shape {shape}, config demands {arr.shape}"
            )
        count = int(np.prod(shape)) if shape else 1
        raw = take(4 * count, f"{name} data")
        arr[...] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(dtype)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after parameters")
    return model


def load_model(path, dtype=np.float32) -> CodecModel:
    with open(path, "rb") as fh:
        return load_model_bytes(fh.read(), dtype=dtype)


def model_digest(data: bytes) -> bytes:
    """32-byte identity of a serialized checkpoint."""
    return hashlib.sha256(data).digest()


def model_digest_file(path) -> bytes:
    with open(path, "rb") as fh:
        return model_digest(fh.read())
