"""Exact time evolution and the dataset builders.

Evolution goes through the cached eigendecomposition: with H = V diag(w) V^H,
the state at time t is V exp(-i w t) V^H psi(0) (hbar = 1).  That makes any
time a single matrix product away, so trajectories on fine grids are cheap
and there is no step-size error to manage.

Datasets come in three flavors, all built on endpoint-exclusive grids with
dt = period / 10 and 15 columns per window:

* ``energy``: one state per sample; the input is psi(k*T) and the target is
  psi((k+1)*T), both in the energy-sorted basis.  Several consecutive k
  (variable-time-interval training) may be stacked.
* ``time``: the input is the matrix of amplitudes on [0, 3T/2) and the target
  the same on [T, 5T/2).  The five overlapping columns are computed once on a
  shared 25-point grid, so they are bitwise equal between input and target.
* ``observables``: like ``time`` but rows are Pauli-string expectations
  instead of amplitudes (real values in complex storage).

Sample s always draws from RNG stream (states_seed, s) regardless of batch
or chunk boundaries, so a dataset is a pure function of its parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream, ValidationError, as_complex
from .spin import HamiltonianMatrix, SpinChainSpec, build_hamiltonian, default_observables
from .states import WaveFunction, low_energy_state, random_state

WINDOW_COLUMNS = 15  # grid points per window: (3T/2) / (T/10)
TARGET_OFFSET = 10  # target window starts one period later: T / (T/10)
UNION_COLUMNS = WINDOW_COLUMNS + TARGET_OFFSET

ARCHS = ("energy", "time", "observables")
INPUT_TYPES = ("random", "low_energy")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform, endpoint-exclusive grid: t_j = t0 + j * dt for j < m."""

    t0: float
    dt: float
    m: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.m < 1:
            raise ValidationError(f"m must be >= 1, got {self.m}")

    @property
    def points(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.m)

    @property
    def end(self) -> float:
        """The exclusive end, t0 + m * dt."""
        return self.t0 + self.dt * self.m

    def shifted(self, delta: float) -> "TimeGrid":
        return TimeGrid(self.t0 + delta, self.dt, self.m)


@dataclass
class Trajectory:
    """Channel values sampled on a grid; shape (channels, grid.m)."""

    grid: TimeGrid
    values: np.ndarray
    basis_order: str = "binary"

    def __post_init__(self):
        self.values = as_complex(self.values)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.m:
            raise ValidationError(
                f"trajectory values {self.values.shape} do not match grid of {self.grid.m}"
            )


def evolve_state(hamiltonian: HamiltonianMatrix, psi: WaveFunction, t: float) -> WaveFunction:
    """psi(t) = V exp(-i w t) V^H psi(0); requires a binary-basis state."""
    if psi.basis_order != "binary":
        raise ValidationError("evolve_state needs a binary-basis state; reorder first")
    if psi.dim != hamiltonian.dim:
        raise ValidationError(
            f"state dimension {psi.dim} does not match hamiltonian {hamiltonian.dim}"
        )
    v = hamiltonian.eigenvectors
    coeff = v.conj().T @ psi.amplitudes
    out = v @ (np.exp(-1j * hamiltonian.eigenvalues * t) * coeff)
    return WaveFunction(out, basis_order="binary")


def evolve_columns(
    hamiltonian: HamiltonianMatrix, columns: np.ndarray, times: np.ndarray
) -> np.ndarray:
    """Evolve a (dim, s) block of binary-basis states to every time at once.

    Returns (dim, s, len(times)).  One eigenbasis projection is shared by all
    times, so the cost is one matrix product per time point.
    """
    columns = as_complex(columns)
    if columns.ndim != 2 or columns.shape[0] != hamiltonian.dim:
        raise ValidationError(f"columns shape {columns.shape} does not match hamiltonian")
    times = np.asarray(times, dtype=np.float64)
    v = hamiltonian.eigenvectors
    coeff = v.conj().T @ columns  # (dim, s)
    out = np.empty(columns.shape + (times.size,), dtype=np.complex128)
    for j, t in enumerate(times):
        out[:, :, j] = v @ (np.exp(-1j * hamiltonian.eigenvalues * t)[:, None] * coeff)
    return out


def evolve_on_grid(
    hamiltonian: HamiltonianMatrix, psi: WaveFunction, grid: TimeGrid
) -> Trajectory:
    """Exact trajectory of one state on a grid; rows are binary-basis amplitudes."""
    if psi.basis_order != "binary":
        raise ValidationError("evolve_on_grid needs a binary-basis state; reorder first")
    block = evolve_columns(hamiltonian, psi.amplitudes[:, None], grid.points)
    return Trajectory(grid=grid, values=block[:, 0, :], basis_order="binary")


@dataclass
class Dataset:
    """Input/target pairs plus everything needed to rebuild their source."""

    arch: str
    spec: SpinChainSpec
    input_type: str
    inputs: np.ndarray
    targets: np.ndarray
    period: float
    states_seed: int
    basis_order: str
    intervals: tuple[int, ...] = (0,)
    samples_per_interval: int = 0
    fraction: float | None = None
    input_grid: TimeGrid | None = None
    target_grid: TimeGrid | None = None
    channel_labels: tuple[str, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValidationError(f"arch must be one of {ARCHS}")
        if self.input_type not in INPUT_TYPES:
            raise ValidationError(f"input_type must be one of {INPUT_TYPES}")
        if self.inputs.shape != self.targets.shape:
            raise ValidationError(
                f"inputs {self.inputs.shape} and targets {self.targets.shape} must match"
            )
        if len(self) != len(self.intervals) * self.samples_per_interval:
            raise ValidationError("sample count does not match intervals layout")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def sample(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.inputs[i], self.targets[i]

    def interval_of(self, i: int) -> int:
        """The window index k of sample i (input taken at t = k * period)."""
        if not 0 <= i < len(self):
            raise ValidationError(f"sample index {i} out of range")
        return self.intervals[i // self.samples_per_interval]


def _initial_columns(
    spec: SpinChainSpec,
    hamiltonian: HamiltonianMatrix,
    input_type: str,
    fraction: float,
    states_seed: int,
    sample_ids: range,
) -> np.ndarray:
    cols = np.empty((hamiltonian.dim, len(sample_ids)), dtype=np.complex128)
    for pos, sample_id in enumerate(sample_ids):
        stream = RngStream(states_seed, sample_id)
        if input_type == "random":
            cols[:, pos] = random_state(spec.n, stream).amplitudes
        else:
            cols[:, pos] = low_energy_state(spec.n, hamiltonian, stream, fraction).amplitudes
    return cols


def _check_build_args(samples: int, input_type: str, fraction: float, period: float) -> None:
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples}")
    if input_type not in INPUT_TYPES:
        raise ValidationError(f"input_type must be one of {INPUT_TYPES}")
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    if not period > 0:
        raise ValidationError(f"period must be positive, got {period}")


def build_energy_dataset(
    spec: SpinChainSpec,
    samples: int,
    input_type: str = "random",
    intervals: tuple[int, ...] = (0,),
    period: float = math.pi,
    fraction: float = 0.25,
    states_seed: int | None = None,
    chunk: int = 512,
) -> Dataset:
    """Input psi(k*T) / target psi((k+1)*T) pairs in the energy-sorted basis.

    ``samples`` counts states per interval; sample s of the i-th interval uses
    RNG stream i * samples + s.
    """
    _check_build_args(samples, input_type, fraction, period)
    if len(intervals) == 0 or any(k < 0 for k in intervals):
        raise ValidationError("intervals must be non-negative window indices")
    hamiltonian = build_hamiltonian(spec)
    if states_seed is None:
        states_seed = spec.seed
    order = hamiltonian.energy_order
    total = samples * len(intervals)
    inputs = np.empty((total, hamiltonian.dim), dtype=np.complex128)
    targets = np.empty((total, hamiltonian.dim), dtype=np.complex128)
    for pos, k in enumerate(intervals):
        base = pos * samples
        for start in range(0, samples, chunk):
            ids = range(base + start, base + min(start + chunk, samples))
            cols = _initial_columns(spec, hamiltonian, input_type, fraction, states_seed, ids)
            times = np.array([k * period, (k + 1) * period])
            block = evolve_columns(hamiltonian, cols, times)  # (dim, s, 2)
            rows = slice(base + start, base + start + cols.shape[1])
            inputs[rows] = block[order, :, 0].T
            targets[rows] = block[order, :, 1].T
    return Dataset(
        arch="energy",
        spec=spec,
        input_type=input_type,
        inputs=inputs,
        targets=targets,
        period=period,
        states_seed=states_seed,
        basis_order="energy",
        intervals=tuple(intervals),
        samples_per_interval=samples,
        fraction=fraction if input_type == "low_energy" else None,
    )


def _window_grids(period: float) -> tuple[TimeGrid, TimeGrid, np.ndarray]:
    dt = period / 10.0
    input_grid = TimeGrid(0.0, dt, WINDOW_COLUMNS)
    target_grid = TimeGrid(TARGET_OFFSET * dt, dt, WINDOW_COLUMNS)
    union_times = dt * np.arange(UNION_COLUMNS)
    return input_grid, target_grid, union_times


def build_time_dataset(
    spec: SpinChainSpec,
    samples: int,
    input_type: str = "random",
    period: float = math.pi,
    fraction: float = 0.25,
    states_seed: int | None = None,
    chunk: int = 256,
) -> Dataset:
    """Amplitude windows: input on [0, 3T/2), target on [T, 5T/2).

    Both windows are slices of one 25-column union grid, so the five overlap
    columns are bitwise identical.  Rows are energy-sorted amplitudes.
    """
    _check_build_args(samples, input_type, fraction, period)
    hamiltonian = build_hamiltonian(spec)
    if states_seed is None:
        states_seed = spec.seed
    order = hamiltonian.energy_order
    input_grid, target_grid, union_times = _window_grids(period)
    inputs = np.empty((samples, hamiltonian.dim, WINDOW_COLUMNS), dtype=np.complex128)
    targets = np.empty((samples, hamiltonian.dim, WINDOW_COLUMNS), dtype=np.complex128)
    for start in range(0, samples, chunk):
        ids = range(start, min(start + chunk, samples))
        cols = _initial_columns(spec, hamiltonian, input_type, fraction, states_seed, ids)
        block = evolve_columns(hamiltonian, cols, union_times)[order]  # (dim, s, 25)
        rows = slice(start, start + cols.shape[1])
        inputs[rows] = np.moveaxis(block[:, :, :WINDOW_COLUMNS], 1, 0)
        targets[rows] = np.moveaxis(block[:, :, TARGET_OFFSET:], 1, 0)
    return Dataset(
        arch="time",
        spec=spec,
        input_type=input_type,
        inputs=inputs,
        targets=targets,
        period=period,
        states_seed=states_seed,
        basis_order="energy",
        intervals=(0,),
        samples_per_interval=samples,
        fraction=fraction if input_type == "low_energy" else None,
        input_grid=input_grid,
        target_grid=target_grid,
    )


def build_observables_dataset(
    spec: SpinChainSpec,
    samples: int,
    period: float = math.pi,
    states_seed: int | None = None,
    chunk: int = 256,
) -> Dataset:
    """Pauli-expectation windows for the canonical 6n strings, random inputs.

    Same grids as the time flavor; channel c is ``channel_labels[c]`` at every
    column.  Values are real, stored in complex tensors.
    """
    _check_build_args(samples, "random", 0.25, period)
    hamiltonian = build_hamiltonian(spec)
    if states_seed is None:
        states_seed = spec.seed
    observables = default_observables(spec.n)
    input_grid, target_grid, union_times = _window_grids(period)
    channels = len(observables)
    inputs = np.empty((samples, channels, WINDOW_COLUMNS), dtype=np.complex128)
    targets = np.empty((samples, channels, WINDOW_COLUMNS), dtype=np.complex128)
    for start in range(0, samples, chunk):
        ids = range(start, min(start + chunk, samples))
        cols = _initial_columns(spec, hamiltonian, "random", 0.25, states_seed, ids)
        block = evolve_columns(hamiltonian, cols, union_times)  # (dim, s, 25)
        count = cols.shape[1]
        values = np.empty((count, channels, UNION_COLUMNS), dtype=np.complex128)
        for j in range(UNION_COLUMNS):
            values[:, :, j] = observables.expectations(block[:, :, j]).T
        rows = slice(start, start + count)
        inputs[rows] = values[:, :, :WINDOW_COLUMNS]
        targets[rows] = values[:, :, TARGET_OFFSET:]
    return Dataset(
        arch="observables",
        spec=spec,
        input_type="random",
        inputs=inputs,
        targets=targets,
        period=period,
        states_seed=states_seed,
        basis_order="binary",
        intervals=(0,),
        samples_per_interval=samples,
        input_grid=input_grid,
        target_grid=target_grid,
        channel_labels=tuple(observables.labels),
    )
