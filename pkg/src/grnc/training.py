"""L1 residual objective, Adam with GDN parameter projection, the
training step over the T-iteration unroll, and the random-patch pipeline.

The objective is beta * sum_t |r_t| over all refinement iterations
(optionally divided by the total element count, the default, so beta=1
is scale-free across batch and patch sizes). Training runs the
stochastic binarizer forward and the straight-through estimator
backward. After every Adam step the GDN parameters are projected back
to their domain (beta >= 1e-6, gamma >= 0).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .codec import CodecModel, IterationTrace, run_iterations, unrolled_backward

NORMALIZATION_MODES = ("sum", "mean")


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    batch_size: int = 16
    patch_size: int = 32
    epochs: int = 10
    steps_per_epoch: int = 100
    iterations: int = 8
    loss_weight: float = 1.0
    normalization: str = "mean"
    seed: int = 0
    mode: str = "one_shot"
    binarizer: str = "stochastic"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = ("learning_rate", "batch_size", "patch_size", "epochs",
                    "steps_per_epoch", "iterations", "loss_weight")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patch_size % 16:
            raise ValueError("patch_size must be divisible by 16")
        if self.normalization not in NORMALIZATION_MODES:
            raise ValueError(f"normalization must be one of {NORMALIZATION_MODES}")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_optimizer(model: CodecModel) -> OptimizerState:
    params = model.parameters()
    return OptimizerState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------

def _loss_denominator(trace: IterationTrace, normalization: str) -> float:
    if normalization == "sum":
        return 1.0
    return float(sum(r.size for r in trace.residuals))


def l1_residual_loss(trace: IterationTrace, beta: float = 1.0,
                     normalization: str = "mean") -> float:
    """beta * sum over iterations of sum |r_t|, over the denominator
    implied by the normalization mode (1 for sum, total element count
    for mean)."""
    if normalization not in NORMALIZATION_MODES:
        raise ValueError(f"normalization must be one of {NORMALIZATION_MODES}")
    if not trace.residuals:
        raise ValueError("trace holds no iterations")
    total = sum(np.sum(np.abs(r), dtype=np.float64) for r in trace.residuals)
    return float(beta * total / _loss_denominator(trace, normalization))


def residual_loss_grads(trace: IterationTrace, beta: float = 1.0,
                        normalization: str = "mean") -> list[np.ndarray]:
    """d loss / d r_t for each iteration: beta * sign(r_t) / denominator."""
    if normalization not in NORMALIZATION_MODES:
        raise ValueError(f"normalization must be one of {NORMALIZATION_MODES}")
    if not trace.residuals:
        raise ValueError("trace holds no iterations")
    scale = beta / _loss_denominator(trace, normalization)
    return [(np.sign(r) * scale).astype(r.dtype) for r in trace.residuals]


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: OptimizerState, config: TrainConfig,
              projections: dict[str, float] | None = None) -> OptimizerState:
    """One Adam update with bias correction, in place, then the
    projection floors (GDN domains) re-imposed."""
    state.step += 1
    t = state.step
    b1, b2 = config.adam_beta1, config.adam_beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        p -= (config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)).astype(p.dtype)
    if projections:
        for name, floor in projections.items():
            if name in params:
                np.maximum(params[name], floor, out=params[name])
    return state


# ---------------------------------------------------------------------------
# Training step and loop
# ---------------------------------------------------------------------------

def train_step(model: CodecModel, batch: np.ndarray, opt_state: OptimizerState,
               config: TrainConfig, rng: np.random.Generator) -> float:
    """Forward T iterations, backpropagate through the full unroll, one
    Adam step. Returns the (pre-update) loss."""
    trace, caches = run_iterations(
        model, batch, config.iterations, mode=config.mode,
        binarizer=config.binarizer, rng=rng, collect=True,
    )
    loss = l1_residual_loss(trace, config.loss_weight, config.normalization)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite training loss {loss}")
    grads = unrolled_backward(
        model, caches, residual_loss_grads(trace, config.loss_weight, config.normalization)
    )
    adam_step(model.parameters(), grads, opt_state, config, model.gdn_projections())
    return loss


def sample_patches(images: list[np.ndarray], count: int, patch_size: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Uniformly random patch_size x patch_size crops, random source image
    per patch; deterministic under a seeded generator."""
    if not images:
        raise ValueError("no source images")
    planes = []
    for i, img in enumerate(images):
        arr = np.asarray(img)
        if arr.ndim == 4:
            if arr.shape[0] != 1:
                raise ValueError("source images must be single images")
            arr = arr[0]
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"source image {i} must be (3, H, W), got {arr.shape}")
        if arr.shape[1] < patch_size or arr.shape[2] < patch_size:
            raise ValueError(
                f"source image {i} is {arr.shape[1]}x{arr.shape[2]}, "
                f"smaller than patch_size {patch_size}"
            )
        planes.append(arr)
    out = np.empty((count, 3, patch_size, patch_size), dtype=planes[0].dtype)
    for k in range(count):
        src = planes[rng.integers(len(planes))]
        top = int(rng.integers(src.shape[1] - patch_size + 1))
        left = int(rng.integers(src.shape[2] - patch_size + 1))
        out[k] = src[:, top:top + patch_size, left:left + patch_size]
    return out


@dataclass
class TrainLogEntry:
    step: int
    loss: float
    seconds: float

    def csv(self) -> str:
        return f"{self.step},{self.loss!r},{self.seconds:.3f}"


TRAIN_LOG_HEADER = "step,loss,seconds"


@dataclass
class TrainResult:
    history: list[TrainLogEntry] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1].loss

    def csv_lines(self) -> list[str]:
        return [TRAIN_LOG_HEADER] + [e.csv() for e in self.history]


def train(model: CodecModel, images: list[np.ndarray], config: TrainConfig,
          opt_state: OptimizerState | None = None,
          progress=None) -> TrainResult:
    """Seeded training loop: epochs x steps_per_epoch steps, each on a
    freshly sampled random batch. ``progress`` (optional) is called with
    each TrainLogEntry as it is produced."""
    if opt_state is None:
        opt_state = init_optimizer(model)
    rng = np.random.default_rng(config.seed)
    result = TrainResult()
    started = time.monotonic()
    step = 0
    for _ in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            step += 1
            batch = sample_patches(images, config.batch_size, config.patch_size, rng)
            loss = train_step(model, batch, opt_state, config, rng)
            entry = TrainLogEntry(step, loss, time.monotonic() - started)
            result.history.append(entry)
            if progress is not None:
                progress(entry)
    return result
