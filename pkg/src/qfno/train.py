"""Adam training over the tape, with split, schedule, clipping, checkpointing.

Parameters are complex, but the optimizer sees each of them as a float64
array of interleaved (re, im) pairs via ``view(float64)``, which is exactly
the split-real convention the tape's gradients use.  Moments therefore track
real and imaginary parts independently.

Per epoch: shuffle the train split, walk minibatches (forward, loss,
backward, global-norm clip at 5.0, Adam step), then score the validation
split.  The learning rate halves every ``lr_halve_every`` epochs.  The
checkpoint returned is the parameter snapshot with the best validation loss,
not the last one.  A non-finite training loss aborts immediately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Param, Tape, loss_mse, loss_rel_l2
from .evolve import Dataset
from .fno import Checkpoint, FnoModel, assemble_inputs
from .numerics import RngStream, ValidationError

# Stream ids far above any per-sample id: the split and the per-epoch shuffles.
SPLIT_STREAM = 2**62
SHUFFLE_STREAM_BASE = 2**62 + 1

LOSS_CHOICES = ("rel_l2", "mse")


class TrainingAbortError(RuntimeError):
    """Training produced a non-finite loss and stopped."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 500
    batch_size: int = 64
    seed: int = 0
    loss: str | None = None  # default: mse for observables, rel_l2 otherwise
    val_fraction: float = 0.1
    clip_norm: float = 5.0
    lr_halve_every: int = 100
    log_every: int = 0  # 0 silences progress lines

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("lr, epochs, and batch_size must be positive")
        if self.loss is not None and self.loss not in LOSS_CHOICES:
            raise ValidationError(f"loss must be one of {LOSS_CHOICES}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValidationError("val_fraction must be in (0, 1)")
        if self.clip_norm <= 0 or self.lr_halve_every < 1:
            raise ValidationError("clip_norm and lr_halve_every must be positive")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_fidelity: float


@dataclass
class AdamState:
    """First/second moments as float64 twins of the complex parameters."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Param]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.value.view(np.float64)) for p in params],
            v=[np.zeros_like(p.value.view(np.float64)) for p in params],
        )


def clip_global_norm(params: list[Param], max_norm: float) -> float:
    """Scale all gradients in place so their joint l2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        g = p.grad
        total += float(np.sum(g.real**2 + g.imag**2))
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            p.grad = p.grad * factor
    return norm


def adam_step(params: list[Param], state: AdamState, lr: float) -> None:
    """One Adam update on the float64 views of the complex parameters."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**state.step
    bias2 = 1.0 - b2**state.step
    for p, m, v in zip(params, state.m, state.v):
        grad = np.ascontiguousarray(p.grad).view(np.float64)
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad**2
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        p.value.view(np.float64)[...] -= lr * update


def batched_fidelity(pred: np.ndarray, target: np.ndarray, axis: int = -1) -> np.ndarray:
    """|<target, pred>|^2 with both vectors renormalized, along ``axis``.

    Zero-norm predictions give fidelity 0 rather than a division error.
    """
    p = np.asarray(pred, dtype=np.complex128)
    t = np.asarray(target, dtype=np.complex128)
    if p.shape != t.shape:
        raise ValidationError(f"fidelity shape mismatch: {p.shape} vs {t.shape}")
    overlap = np.abs(np.sum(np.conj(t) * p, axis=axis)) ** 2
    norm_p = np.sum(p.real**2 + p.imag**2, axis=axis)
    norm_t = np.sum(t.real**2 + t.imag**2, axis=axis)
    denom = norm_p * norm_t
    return np.where(denom > 0, overlap / np.maximum(denom, 1e-300), 0.0)


def _resolve_loss(config: TrainConfig, arch: str) -> str:
    if config.loss is not None:
        return config.loss
    return "mse" if arch == "observables" else "rel_l2"


def _val_fidelity(arch: str, pred: np.ndarray, target: np.ndarray) -> float:
    if arch == "energy":
        return float(np.mean(batched_fidelity(pred[:, 0, :], target[:, 0, :], axis=-1)))
    if arch == "time":
        # Per-column state fidelity, averaged over columns and samples.
        return float(np.mean(batched_fidelity(pred, target, axis=1)))
    return float("nan")


def split_indices(total: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation split; validation is never empty for total >= 2."""
    if total < 2:
        raise ValidationError(f"need at least 2 samples to split, got {total}")
    perm = RngStream(seed, SPLIT_STREAM).permutation(total)
    val_count = min(max(1, int(round(total * val_fraction))), total - 1)
    return perm[val_count:], perm[:val_count]


def train(
    model: FnoModel, dataset: Dataset, config: TrainConfig
) -> tuple[Checkpoint, list[EpochMetrics]]:
    """Fit the model to the dataset; returns (best checkpoint, per-epoch metrics)."""
    if dataset.arch != model.config.arch:
        raise ValidationError(
            f"dataset arch {dataset.arch!r} does not match model {model.config.arch!r}"
        )
    inputs = assemble_inputs(dataset.arch, dataset.inputs, dataset.input_grid)
    targets = dataset.targets if dataset.arch != "energy" else dataset.targets[:, None, :]
    if inputs.shape[1] != model.config.in_channels:
        raise ValidationError(
            f"assembled inputs have {inputs.shape[1]} channels, model wants "
            f"{model.config.in_channels}"
        )
    if targets.shape[1] != model.config.out_channels:
        raise ValidationError(
            f"targets have {targets.shape[1]} channels, model emits "
            f"{model.config.out_channels}"
        )

    train_idx, val_idx = split_indices(len(dataset), config.val_fraction, config.seed)
    val_inputs, val_targets = inputs[val_idx], targets[val_idx]
    loss_name = _resolve_loss(config, dataset.arch)
    loss_fn = loss_rel_l2 if loss_name == "rel_l2" else loss_mse

    params = model.parameters()
    state = AdamState.for_params(params)
    best_val = math.inf
    best_params: dict[str, np.ndarray] = {}
    best_epoch = -1
    metrics: list[EpochMetrics] = []

    for epoch in range(config.epochs):
        lr = config.lr * 0.5 ** (epoch // config.lr_halve_every)
        order = RngStream(config.seed, SHUFFLE_STREAM_BASE + epoch).permutation(
            train_idx.size
        )
        shuffled = train_idx[order]
        epoch_loss = 0.0
        for start in range(0, shuffled.size, config.batch_size):
            batch = shuffled[start : start + config.batch_size]
            tape = Tape()
            out = model.forward(inputs[batch], tape=tape)
            target = targets[batch]
            loss = tape.rel_l2(out, target) if loss_name == "rel_l2" else tape.mse(out, target)
            if not math.isfinite(loss.value):
                raise TrainingAbortError(
                    f"non-finite training loss at epoch {epoch}; aborting"
                )
            tape.backward(loss)
            clip_global_norm(params, config.clip_norm)
            adam_step(params, state, lr)
            for p in params:
                p.zero_grad()
            epoch_loss += loss.value * batch.size
        epoch_loss /= shuffled.size

        val_pred = model.forward(val_inputs)
        val_loss = loss_fn(val_pred, val_targets)
        if not math.isfinite(val_loss):
            raise TrainingAbortError(f"non-finite validation loss at epoch {epoch}; aborting")
        val_fid = _val_fidelity(dataset.arch, val_pred, val_targets)
        metrics.append(EpochMetrics(epoch, epoch_loss, val_loss, val_fid))
        if config.log_every and (epoch % config.log_every == 0 or epoch == config.epochs - 1):
            print(
                f"epoch {epoch:4d}  lr {lr:.2e}  train {epoch_loss:.6f}  "
                f"val {val_loss:.6f}  fid {val_fid:.6f}",
                flush=True,
            )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {name: p.value.copy() for name, p in model.params.items()}

    checkpoint = Checkpoint(
        config=model.config,
        params=best_params,
        meta={
            "best_epoch": best_epoch,
            "best_val_loss": best_val,
            "epochs": config.epochs,
            "lr": config.lr,
            "batch_size": config.batch_size,
            "seed": config.seed,
            "loss": loss_name,
            "arch": dataset.arch,
            "n_qubits": dataset.spec.n,
        },
    )
    return checkpoint, metrics
