import numpy as np
import pytest

import grnc.codec as codec
from grnc.codec import (
    ArchitectureConfig,
    CheckpointError,
    build_model,
    compress,
    decode_step,
    decompress,
    desk_config,
    encode_step,
    init_decoder_states,
    init_encoder_states,
    load_model_bytes,
    model_digest,
    run_iterations,
    save_model_bytes,
)


def rand_image(batch=1, size=32, seed=0):
    return np.random.default_rng(seed).random((batch, 3, size, size)).astype(np.float32)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_default_config_matches_published_channel_plan():
    cfg = ArchitectureConfig()
    assert cfg.analysis_channels == 64
    assert cfg.code_channels == 38
    assert cfg.binarizer_in_channels == 512
    assert cfg.synthesis_channels == 512
    assert cfg.encoder_lstm_channels == (256, 512, 512)
    assert cfg.decoder_lstm_channels == (512, 512, 256, 128)


def test_config_validation():
    with pytest.raises(ValueError):
        ArchitectureConfig(patch_size=24)
    with pytest.raises(ValueError):
        ArchitectureConfig(encoder_lstm_channels=(64, 64))
    with pytest.raises(ValueError):
        ArchitectureConfig(decoder_lstm_channels=(64, 64, 64))
    with pytest.raises(ValueError):
        ArchitectureConfig(decoder_lstm_channels=(64, 64, 64, 30))  # not /4
    with pytest.raises(ValueError):
        ArchitectureConfig(code_channels=0)


def test_config_dict_roundtrip():
    cfg = desk_config()
    again = ArchitectureConfig.from_dict(cfg.to_dict())
    assert again == cfg
    with pytest.raises(ValueError):
        ArchitectureConfig.from_dict({"bogus_field": 1})


# ---------------------------------------------------------------------------
# Model building
# ---------------------------------------------------------------------------

def test_build_model_deterministic():
    a = build_model(desk_config(), seed=42)
    b = build_model(desk_config(), seed=42)
    for (na, pa), (nb, pb) in zip(a.parameters().items(), b.parameters().items()):
        assert na == nb
        np.testing.assert_array_equal(pa, pb)


def test_build_model_seed_changes_weights():
    a = build_model(desk_config(), seed=1)
    b = build_model(desk_config(), seed=2)
    assert not np.array_equal(a.analysis_conv.weight, b.analysis_conv.weight)


def test_default_model_parameter_shapes():
    model = build_model(ArchitectureConfig(), seed=0)
    assert model.bin_conv.weight.shape == (38, 512, 1, 1)
    assert model.analysis_conv.weight.shape == (64, 3, 3, 3)
    assert model.synth_conv.weight.shape == (512, 38, 1, 1)
    assert model.final_conv.weight.shape == (3, 32, 3, 3)
    assert np.all(model.analysis_gdn.beta >= 1e-6)
    np.testing.assert_array_equal(model.analysis_gdn.gamma,
                                  (0.1 * np.eye(64)).astype(np.float32))


def test_build_model_no_gdn():
    cfg = desk_config()
    cfg.use_gdn = False
    model = build_model(cfg, seed=0)
    assert model.analysis_gdn is None and model.synth_igdn is None
    assert not any("gdn" in k for k in model.parameters())
    x = rand_image()
    trace, _ = run_iterations(model, x, 1)
    assert trace.reconstructions[0].shape == x.shape


# ---------------------------------------------------------------------------
# Encode / decode steps
# ---------------------------------------------------------------------------

def test_encode_step_default_shapes():
    model = build_model(ArchitectureConfig(), seed=0)
    x = rand_image()
    states = init_encoder_states(model, 1, 32, 32)
    codes, new_states = encode_step(model, x - 0.5, states)
    assert codes.shape == (1, 38, 2, 2)
    assert set(np.unique(codes)) <= {-1.0, 1.0}
    assert len(new_states) == 3


def test_encode_step_zero_model_gives_all_plus_one():
    model = build_model(desk_config(), seed=0)
    for p in model.parameters().values():
        p[...] = 0.0
    states = init_encoder_states(model, 1, 32, 32)
    # GDN beta must stay in domain for the forward to be defined.
    model.analysis_gdn.beta[...] = 1.0
    codes, _ = encode_step(model, rand_image() - 0.5, states)
    assert np.all(codes == 1.0)


def test_encode_step_deterministic():
    model = build_model(desk_config(), seed=3)
    x = rand_image(seed=5)
    a, _ = encode_step(model, x, init_encoder_states(model, 1, 32, 32))
    b, _ = encode_step(model, x, init_encoder_states(model, 1, 32, 32))
    np.testing.assert_array_equal(a, b)


def test_encode_step_rejects_bad_dims():
    model = build_model(desk_config(), seed=0)
    with pytest.raises(ValueError):
        encode_step(model, np.zeros((1, 3, 24, 24), dtype=np.float32),
                    init_encoder_states(model, 1, 32, 32))


def test_decode_step_shapes_and_bound():
    model = build_model(ArchitectureConfig(), seed=0)
    codes = np.where(np.random.default_rng(0).random((1, 38, 2, 2)) < 0.5, -1.0, 1.0)
    codes = codes.astype(np.float32)
    states = init_decoder_states(model, 1, 32, 32)
    est, new_states = decode_step(model, codes, states)
    assert est.shape == (1, 3, 32, 32)
    assert np.max(np.abs(est)) < 1.0
    assert len(new_states) == 4
    est2, _ = decode_step(model, codes, init_decoder_states(model, 1, 32, 32))
    np.testing.assert_array_equal(est, est2)


def test_decode_step_channel_mismatch():
    model = build_model(desk_config(code_channels=8), seed=0)
    with pytest.raises(ValueError):
        decode_step(model, np.ones((1, 4, 2, 2), dtype=np.float32),
                    init_decoder_states(model, 1, 32, 32))


def test_state_init_shapes():
    model = build_model(desk_config(), seed=0)
    enc = init_encoder_states(model, 2, 64, 32)
    assert [s.h.shape for s in enc] == [(2, 32, 16, 8), (2, 64, 8, 4), (2, 64, 4, 2)]
    dec = init_decoder_states(model, 2, 64, 32)
    assert [s.h.shape for s in dec] == [(2, 64, 4, 2), (2, 64, 8, 4),
                                        (2, 32, 16, 8), (2, 16, 32, 16)]


# ---------------------------------------------------------------------------
# Iterative loop with test doubles
# ---------------------------------------------------------------------------

def patch_pipeline(monkeypatch, decoder_rule):
    """Replace encoder/decoder with doubles: the encoder emits its input
    unchanged, the decoder emits decoder_rule(codes)."""

    def fake_encoder(model, x, states, collect):
        return x, states, None

    def fake_decoder(model, c, states, collect):
        return decoder_rule(c), states, None

    monkeypatch.setattr(codec, "_encoder_apply", fake_encoder)
    monkeypatch.setattr(codec, "_decoder_apply", fake_decoder)


@pytest.mark.parametrize("mode", ["one_shot", "additive"])
def test_identity_composition_reconstructs_exactly(monkeypatch, mode):
    # Dec(Bin(Enc(r))) == r: first iteration must land exactly on x.
    patch_pipeline(monkeypatch, lambda c: c)
    model = build_model(desk_config(), seed=0)
    x = rand_image(seed=1)
    trace, _ = run_iterations(model, x, 2, mode=mode, binarizer="identity")
    np.testing.assert_allclose(trace.reconstructions[0], x, atol=1e-7)
    assert np.max(np.abs(trace.residuals[0])) < 1e-6


def test_zero_decoder_double_keeps_residual_at_x_additive(monkeypatch):
    patch_pipeline(monkeypatch, lambda c: np.zeros_like(c))
    model = build_model(desk_config(), seed=0)
    x = rand_image(seed=2)
    trace, _ = run_iterations(model, x, 3, mode="additive", binarizer="identity")
    for r, xhat in zip(trace.residuals, trace.reconstructions):
        np.testing.assert_array_equal(xhat, np.zeros_like(x))
        np.testing.assert_array_equal(r, x)


def test_centered_zero_decoder_double_one_shot(monkeypatch):
    # In one_shot the decoder output is an offset from 0.5, so the double
    # that pins the image estimate at zero emits -0.5.
    patch_pipeline(monkeypatch, lambda c: np.full_like(c, -0.5))
    model = build_model(desk_config(), seed=0)
    x = rand_image(seed=3)
    trace, _ = run_iterations(model, x, 3, mode="one_shot", binarizer="identity")
    for r, xhat in zip(trace.residuals, trace.reconstructions):
        np.testing.assert_array_equal(xhat, np.zeros_like(x))
        np.testing.assert_array_equal(r, x)


# ---------------------------------------------------------------------------
# Iterative loop on real models
# ---------------------------------------------------------------------------

def test_trace_invariants():
    model = build_model(desk_config(), seed=1)
    x = rand_image(batch=2, seed=4)
    trace, _ = run_iterations(model, x, 4)
    assert trace.initial_residual is x or np.array_equal(trace.initial_residual, x)
    assert trace.iterations == 4
    for r, xhat in zip(trace.residuals, trace.reconstructions):
        np.testing.assert_array_equal(r, x - xhat)
        assert np.all(xhat >= 0.0) and np.all(xhat <= 1.0)
    for c in trace.codes:
        assert set(np.unique(c)) <= {-1.0, 1.0}


def test_additive_structural_invariant():
    model = build_model(desk_config(), seed=2)
    x = rand_image(seed=5)
    trace, _ = run_iterations(model, x, 3, mode="additive")
    states = init_decoder_states(model, 1, 32, 32)
    xhat_prev = np.zeros_like(x)
    for codes, xhat in zip(trace.codes, trace.reconstructions):
        est, states = decode_step(model, codes, states)
        np.testing.assert_array_equal(xhat, np.clip(xhat_prev + est, 0.0, 1.0))
        xhat_prev = xhat


def test_run_iterations_argument_errors():
    model = build_model(desk_config(), seed=0)
    x = rand_image()
    with pytest.raises(ValueError):
        run_iterations(model, x, 0)
    with pytest.raises(ValueError):
        run_iterations(model, x, 1, mode="averaging")
    with pytest.raises(ValueError):
        run_iterations(model, x, 1, binarizer="floor")
    with pytest.raises(ValueError):
        run_iterations(model, np.zeros((1, 3, 24, 24), dtype=np.float32), 1)
    with pytest.raises(ValueError):
        run_iterations(model, np.zeros((1, 1, 32, 32), dtype=np.float32), 1)


def test_collect_caches_structure():
    model = build_model(desk_config(), seed=0)
    trace, caches = run_iterations(model, rand_image(), 3, collect=True)
    assert len(caches.enc) == len(caches.dec) == len(caches.clamp_pass) == 3
    assert caches.mode == "one_shot"


def test_stochastic_binarizer_seeded_determinism():
    model = build_model(desk_config(), seed=0)
    x = rand_image(seed=6)
    a, _ = run_iterations(model, x, 2, binarizer="stochastic",
                          rng=np.random.default_rng(11))
    b, _ = run_iterations(model, x, 2, binarizer="stochastic",
                          rng=np.random.default_rng(11))
    for ca, cb in zip(a.codes, b.codes):
        np.testing.assert_array_equal(ca, cb)


# ---------------------------------------------------------------------------
# compress / decompress
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["one_shot", "additive"])
def test_decompress_reproduces_compress_exactly(mode):
    model = build_model(desk_config(), seed=3)
    x = rand_image(seed=7)
    trace = compress(model, x, 4, mode=mode)
    xhat = decompress(model, trace.codes, mode=mode)
    np.testing.assert_array_equal(xhat, trace.reconstructions[-1])


def test_decompress_partial_prefix_matches_trace():
    model = build_model(desk_config(), seed=3)
    x = rand_image(seed=8)
    trace = compress(model, x, 4)
    for k in (1, 2, 3):
        np.testing.assert_array_equal(decompress(model, trace.codes[:k]),
                                      trace.reconstructions[k - 1])


def test_decompress_errors():
    model = build_model(desk_config(), seed=0)
    with pytest.raises(ValueError):
        decompress(model, [])
    codes = compress(model, rand_image(), 2).codes
    with pytest.raises(ValueError):
        decompress(model, codes, iterations=3)
    with pytest.raises(ValueError):
        decompress(model, [codes[0] * 0.5])


def test_single_iteration_modes_differ_by_centering_offset():
    model = build_model(desk_config(), seed=4)
    codes = compress(model, rand_image(seed=9), 1).codes
    est, _ = decode_step(model, codes[0], init_decoder_states(model, 1, 32, 32))
    one_shot = decompress(model, codes, mode="one_shot")
    additive = decompress(model, codes, mode="additive")
    np.testing.assert_array_equal(one_shot, np.clip(est + 0.5, 0.0, 1.0))
    np.testing.assert_array_equal(additive, np.clip(est, 0.0, 1.0))


def test_shape_roundtrip_nonsquare():
    model = build_model(desk_config(), seed=0)
    x = np.random.default_rng(0).random((1, 3, 48, 80)).astype(np.float32)
    trace = compress(model, x, 2)
    assert trace.codes[0].shape == (1, 8, 3, 5)
    assert decompress(model, trace.codes).shape == x.shape


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact():
    model = build_model(desk_config(), seed=5)
    blob = save_model_bytes(model)
    again = load_model_bytes(blob)
    assert again.config == model.config
    for (na, pa), (nb, pb) in zip(model.parameters().items(),
                                  again.parameters().items()):
        assert na == nb
        np.testing.assert_array_equal(pa, pb)
    # Serialization itself is deterministic.
    assert save_model_bytes(again) == blob


def test_checkpoint_bad_magic():
    blob = bytearray(save_model_bytes(build_model(desk_config(), seed=0)))
    blob[:4] = b"XXXX"
    with pytest.raises(CheckpointError, match="magic"):
        load_model_bytes(bytes(blob))


def test_checkpoint_unknown_version():
    blob = bytearray(save_model_bytes(build_model(desk_config(), seed=0)))
    blob[4] = 99
    with pytest.raises(CheckpointError, match="version"):
        load_model_bytes(bytes(blob))


def test_checkpoint_truncated():
    blob = save_model_bytes(build_model(desk_config(), seed=0))
    with pytest.raises(CheckpointError, match="truncated"):
        load_model_bytes(blob[:-3])


def test_checkpoint_trailing_bytes():
    blob = save_model_bytes(build_model(desk_config(), seed=0))
    with pytest.raises(CheckpointError, match="trailing"):
        load_model_bytes(blob + b"\x00")


def test_model_digest_distinguishes_models():
    a = save_model_bytes(build_model(desk_config(), seed=1))
    b = save_model_bytes(build_model(desk_config(), seed=2))
    assert model_digest(a) != model_digest(b)
    assert model_digest(a) == model_digest(a)
    assert len(model_digest(a)) == 32
