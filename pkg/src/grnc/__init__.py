"""Variable-rate learned image codec with a recurrent GDN architecture.

Pure numpy/scipy: hand-written convolution, GDN/iGDN, convolutional
LSTM and binarizer with analytic backward passes, an iterative residual
coding loop, bit-exact stream and checkpoint formats, and L1/Adam
training through the full iteration unroll.
"""

from .bitstream import (
    BadMagicError,
    BitstreamError,
    BitstreamHeader,
    TruncatedPayloadError,
    UnsupportedVersionError,
    bits_per_pixel,
    bits_per_pixel_original,
    read_bitstream,
    write_bitstream,
)
from .codec import (
    ArchitectureConfig,
    CheckpointError,
    CodecModel,
    IterationTrace,
    build_model,
    compress,
    decode_step,
    decompress,
    desk_config,
    encode_step,
    load_model,
    model_digest,
    run_iterations,
    save_model,
    unrolled_backward,
)
from .dataio import (
    ImageBuffer,
    PpmError,
    crop_to,
    load_ppm,
    pad_to_multiple,
    save_ppm,
    to_image,
    to_tensor,
)
from .gradcheck import GRADCHECK_OPS, OpReport, run_suite
from .layers import (
    ConvParams,
    GdnParams,
    LstmParams,
    LstmState,
    binarize,
    conv2d_backward,
    conv2d_forward,
    conv_lstm_step,
    depth_to_space,
    gdn_forward,
    igdn_forward,
    space_to_depth,
)
from .metrics import RdPoint, ms_ssim, psnr, rd_points, ssim
from .training import (
    OptimizerState,
    TrainConfig,
    TrainResult,
    adam_step,
    init_optimizer,
    l1_residual_loss,
    residual_loss_grads,
    sample_patches,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "ArchitectureConfig", "BadMagicError", "BitstreamError", "BitstreamHeader",
    "CheckpointError", "CodecModel", "ConvParams", "GdnParams", "GRADCHECK_OPS",
    "ImageBuffer", "IterationTrace", "LstmParams", "LstmState", "OpReport",
    "OptimizerState", "PpmError", "RdPoint", "TrainConfig", "TrainResult",
    "TruncatedPayloadError", "UnsupportedVersionError", "adam_step", "binarize",
    "bits_per_pixel", "bits_per_pixel_original", "build_model", "compress",
    "conv2d_backward", "conv2d_forward", "conv_lstm_step", "crop_to",
    "decode_step", "decompress", "depth_to_space", "desk_config", "encode_step",
    "gdn_forward", "igdn_forward", "init_optimizer", "l1_residual_loss",
    "load_model", "load_ppm", "model_digest", "ms_ssim", "pad_to_multiple",
    "psnr", "rd_points", "read_bitstream", "residual_loss_grads",
    "run_iterations", "run_suite", "sample_patches", "save_model", "save_ppm",
    "space_to_depth", "ssim", "to_image", "to_tensor", "train", "train_step",
    "unrolled_backward", "write_bitstream",
]
