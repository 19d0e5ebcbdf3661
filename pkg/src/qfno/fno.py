"""Complex-valued Fourier neural operator over one spatial/temporal axis.

The network is: channel lifting -> a stack of spectral blocks -> a two-layer
pointwise projection.  Each block computes

    v  <-  split_gelu( W v + b  +  IDFT( R . DFT(v) restricted to K modes ) )

where W mixes channels pointwise, R mixes channels per retained frequency,
and split_gelu applies GELU to real and imaginary parts independently.  The
retained band is symmetric: the lowest ceil(K/2) nonnegative frequencies and
the highest floor(K/2) negative ones.  Because the forward DFT carries 1/N,
a retained coefficient has the same scale on any grid length, which is what
lets one set of weights run on a finer grid than it was trained on.

Three input conventions share the network:

* ``energy``: 2 channels on a 2^n grid: a basis-index ramp j / 2^n and the
  state amplitudes (energy-sorted); 1 output channel.
* ``time``: 2 + 2^n channels on the window grid: sin t, cos t, then the
  amplitude rows; 2^n output channels.
* ``observables``: 2 + 6n channels, same layout with expectation rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Param, Tape, Var
from .evolve import TimeGrid
from .numerics import RngStream, ValidationError, as_complex

ARCH_CHOICES = ("energy", "time", "observables")


def mode_indices(modes: int, n: int) -> np.ndarray:
    """DFT indices of the retained band: ceil(K/2) low plus floor(K/2) high."""
    if not 1 <= modes <= n:
        raise ValidationError(f"modes must be in [1, {n}], got {modes}")
    low = math.ceil(modes / 2)
    high = modes // 2
    return np.concatenate([np.arange(low), np.arange(n - high, n)]).astype(np.intp)


@dataclass(frozen=True)
class FnoConfig:
    arch: str
    n_qubits: int
    in_channels: int
    out_channels: int
    width: int
    blocks: int
    modes: int

    def __post_init__(self):
        if self.arch not in ARCH_CHOICES:
            raise ValidationError(f"arch must be one of {ARCH_CHOICES}")
        for name in ("n_qubits", "in_channels", "out_channels", "width", "blocks", "modes"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.width < self.out_channels:
            raise ValidationError(
                f"width {self.width} must be >= out_channels {self.out_channels}"
            )

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Named parameter shapes in fixed declaration order."""
        shapes: dict[str, tuple[int, ...]] = {
            "lift.w": (self.width, self.in_channels),
            "lift.b": (self.width,),
        }
        for layer in range(self.blocks):
            shapes[f"block{layer}.w"] = (self.width, self.width)
            shapes[f"block{layer}.b"] = (self.width,)
            shapes[f"block{layer}.r"] = (self.modes, self.width, self.width)
        shapes["proj1.w"] = (self.width, self.width)
        shapes["proj1.b"] = (self.width,)
        shapes["proj2.w"] = (self.out_channels, self.width)
        shapes["proj2.b"] = (self.out_channels,)
        return shapes

    def param_count(self) -> int:
        """Number of complex parameters."""
        return sum(int(np.prod(s)) for s in self.param_shapes().values())


@dataclass
class Checkpoint:
    """Trained weights plus the config that shapes them and free-form metadata."""

    config: FnoConfig
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.config.param_shapes()
        if list(self.params) != list(shapes):
            raise ValidationError("checkpoint parameters do not match config declaration")
        for name, value in self.params.items():
            if value.shape != shapes[name]:
                raise ValidationError(
                    f"parameter {name} has shape {value.shape}, expected {shapes[name]}"
                )
            if not np.all(np.isfinite(value.view(np.float64))):
                raise ValidationError(f"parameter {name} contains NaN or Inf")


class FnoModel:
    """Parameter container plus the forward pass."""

    def __init__(self, config: FnoConfig, params: dict[str, Param]):
        shapes = config.param_shapes()
        if list(params) != list(shapes):
            raise ValidationError("model parameters do not match config declaration")
        for name, p in params.items():
            if p.value.shape != shapes[name]:
                raise ValidationError(
                    f"parameter {name} has shape {p.value.shape}, expected {shapes[name]}"
                )
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: FnoConfig, seed: int) -> "FnoModel":
        """Glorot-style complex init: bias zero, affine std 1/sqrt(fan_in),
        per-mode mixers std 1/sqrt(fan_in * fan_out * K), re/im independent."""
        stream = RngStream(seed, 0)
        params: dict[str, Param] = {}
        for name, shape in config.param_shapes().items():
            if name.endswith(".b"):
                value = np.zeros(shape, dtype=np.complex128)
            else:
                if name.endswith(".r"):
                    k, out_c, in_c = shape
                    std = 1.0 / math.sqrt(in_c * out_c * k)
                else:
                    std = 1.0 / math.sqrt(shape[1])
                re = stream.standard_normal(shape)
                im = stream.standard_normal(shape)
                value = std * (re + 1j * im)
            params[name] = Param(name, value)
        return cls(config, params)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "FnoModel":
        params = {name: Param(name, value.copy()) for name, value in checkpoint.params.items()}
        return cls(checkpoint.config, params)

    def to_checkpoint(self, meta: dict | None = None) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            params={name: p.value.copy() for name, p in self.params.items()},
            meta=dict(meta or {}),
        )

    def parameters(self) -> list[Param]:
        return list(self.params.values())

    def forward(self, x, tape: Tape | None = None):
        """Run the operator.

        With a tape, returns the output :class:`Var` for backprop (input must
        be batched, ``(batch, channels, grid)``).  Without one, returns a
        plain ndarray and accepts ``(channels, grid)`` too.
        """
        training = tape is not None
        x = as_complex(x)
        single = x.ndim == 2
        if single:
            if training:
                raise ValidationError("training forward needs a batched input")
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.config.in_channels:
            raise ValidationError(
                f"input shape {x.shape} does not match "
                f"(batch, {self.config.in_channels}, grid)"
            )
        grid = x.shape[2]
        if grid < self.config.modes:
            raise ValidationError(
                f"grid length {grid} is shorter than the retained band {self.config.modes}"
            )
        if not np.all(np.isfinite(x.view(np.float64))):
            raise ValidationError("input contains NaN or Inf")
        tape = tape if training else Tape()
        indices = mode_indices(self.config.modes, grid)
        p = self.params
        v = tape.channel_affine(tape.constant(x), p["lift.w"], p["lift.b"])
        for layer in range(self.config.blocks):
            hat = tape.gather_modes(tape.dft(v), indices)
            mixed = tape.mode_mix(hat, p[f"block{layer}.r"])
            spectral = tape.idft(tape.scatter_modes(mixed, indices, grid))
            local = tape.channel_affine(v, p[f"block{layer}.w"], p[f"block{layer}.b"])
            v = tape.split_gelu(tape.add(local, spectral))
        v = tape.split_gelu(tape.channel_affine(v, p["proj1.w"], p["proj1.b"]))
        out: Var = tape.channel_affine(v, p["proj2.w"], p["proj2.b"])
        if training:
            return out
        return out.value[0] if single else out.value


def spectral_conv(v, r) -> np.ndarray:
    """Standalone spectral convolution: DFT, keep K modes, mix channels per
    mode, scatter back, inverse DFT.  ``r`` has shape (K, out_ch, in_ch)."""
    v = as_complex(v)
    r = as_complex(r)
    single = v.ndim == 2
    if single:
        v = v[None]
    if v.ndim != 3 or r.ndim != 3:
        raise ValidationError(f"spectral_conv needs 3-d tensors, got {v.shape} and {r.shape}")
    if r.shape[2] != v.shape[1]:
        raise ValidationError(f"channel mismatch: values {v.shape} vs mixer {r.shape}")
    n = v.shape[2]
    indices = mode_indices(r.shape[0], n)
    tape = Tape()
    hat = tape.gather_modes(tape.dft(tape.constant(v)), indices)
    out = tape.idft(tape.scatter_modes(tape.mode_mix(hat, tape.constant(r)), indices, n))
    return out.value[0] if single else out.value


# -- input assembly ----------------------------------------------------------


def embed_state_channel(grid: int) -> np.ndarray:
    """The basis-position ramp j / grid as a complex row."""
    if grid < 1:
        raise ValidationError(f"grid must be >= 1, got {grid}")
    return (np.arange(grid) / grid).astype(np.complex128)


def embed_time(grid: TimeGrid) -> np.ndarray:
    """Two real rows (sin t_j, cos t_j) as complex storage, shape (2, m)."""
    t = grid.points
    return np.stack([np.sin(t), np.cos(t)]).astype(np.complex128)


def assemble_energy_inputs(states: np.ndarray) -> np.ndarray:
    """(batch, 2^n) energy-sorted amplitudes -> (batch, 2, 2^n) model input."""
    states = as_complex(states)
    if states.ndim != 2:
        raise ValidationError(f"expected (batch, dim) states, got {states.shape}")
    batch, dim = states.shape
    out = np.empty((batch, 2, dim), dtype=np.complex128)
    out[:, 0, :] = embed_state_channel(dim)
    out[:, 1, :] = states
    return out


def assemble_window_inputs(values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """(batch, C, m) window rows -> (batch, C + 2, m) with time embedding first."""
    values = as_complex(values)
    if values.ndim != 3:
        raise ValidationError(f"expected (batch, channels, m) values, got {values.shape}")
    if values.shape[2] != grid.m:
        raise ValidationError(f"values {values.shape} do not match grid of {grid.m}")
    batch, channels, m = values.shape
    out = np.empty((batch, channels + 2, m), dtype=np.complex128)
    out[:, :2, :] = embed_time(grid)
    out[:, 2:, :] = values
    return out


def assemble_inputs(arch: str, values: np.ndarray, grid: TimeGrid | None = None) -> np.ndarray:
    """Dataset rows -> model input channels for the given architecture."""
    if arch == "energy":
        return assemble_energy_inputs(values)
    if arch in ("time", "observables"):
        if grid is None:
            raise ValidationError(f"{arch} inputs need a time grid")
        return assemble_window_inputs(values, grid)
    raise ValidationError(f"arch must be one of {ARCH_CHOICES}")


# -- canonical constructors ---------------------------------------------------


def make_energy_model(
    n: int, width: int = 64, blocks: int = 4, modes: int | None = None, seed: int = 0
) -> FnoModel:
    """Energy-domain operator: 2 -> 1 channels on the 2^n basis grid."""
    if modes is None:
        modes = min(128, 2**n)
    config = FnoConfig(
        arch="energy",
        n_qubits=n,
        in_channels=2,
        out_channels=1,
        width=width,
        blocks=blocks,
        modes=modes,
    )
    if config.modes > 2**n:
        raise ValidationError(f"modes {modes} exceed the 2^{n} grid")
    return FnoModel.initialize(config, seed)


def make_time_model(
    n: int, width: int | None = None, blocks: int = 4, modes: int = 7, seed: int = 0
) -> FnoModel:
    """Time-domain operator: (2^n + 2) -> 2^n channels on the window grid."""
    out_channels = 2**n
    if width is None:
        width = max(64, out_channels)
    config = FnoConfig(
        arch="time",
        n_qubits=n,
        in_channels=out_channels + 2,
        out_channels=out_channels,
        width=width,
        blocks=blocks,
        modes=modes,
    )
    return FnoModel.initialize(config, seed)


def make_observables_model(
    n: int, width: int = 64, blocks: int = 4, modes: int = 7, seed: int = 0
) -> FnoModel:
    """Observables operator: (6n + 2) -> 6n channels on the window grid."""
    out_channels = 6 * n
    config = FnoConfig(
        arch="observables",
        n_qubits=n,
        in_channels=out_channels + 2,
        out_channels=out_channels,
        width=max(width, out_channels),
        blocks=blocks,
        modes=modes,
    )
    return FnoModel.initialize(config, seed)
