"""Fidelity and error metrics, autoregressive rollouts, super-resolution
checks, and the exact-vs-learned timing comparison.

Rollouts re-feed the operator its own output: the energy flavor advances one
period per step on single states; the window flavor advances whole windows,
where pass k consumes the window starting at k*T and emits the one starting
at (k+1)*T.  Window passes always rebuild the time-embedding rows on the
window-relative grid [0, 3T/2): that is the only grid the operator ever sees
in training, and the underlying dynamics do not depend on absolute time.
Wavefunction rollouts renormalize each predicted column before re-feeding;
observable rollouts must not (expectations are not unit vectors).
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .evolve import (
    TARGET_OFFSET,
    WINDOW_COLUMNS,
    Dataset,
    TimeGrid,
    Trajectory,
    _initial_columns,
    evolve_columns,
    evolve_on_grid,
)
from .fno import FnoModel, assemble_energy_inputs, assemble_window_inputs
from .numerics import NumericError, ValidationError, as_complex, eigh
from .spin import HamiltonianMatrix, build_hamiltonian, default_observables
from .states import WaveFunction
from .train import batched_fidelity


def fidelity(a: WaveFunction, b: WaveFunction) -> float:
    """|<a|b>|^2 with ``b`` renormalized; ``a`` is already unit norm.

    The two states must carry the same basis ordering; comparing amplitudes
    across orderings silently permutes components, so it is refused.
    """
    if a.basis_order != b.basis_order:
        raise ValidationError(
            f"basis order mismatch: {a.basis_order!r} vs {b.basis_order!r}"
        )
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    norm_b = b.norm()
    if norm_b == 0.0:
        raise ValidationError("cannot renormalize a zero state")
    overlap = np.vdot(a.amplitudes, b.amplitudes / norm_b)
    return float(np.abs(overlap) ** 2)


class MreResult(NamedTuple):
    """Mean relative error over entries with |true| above the threshold."""

    value: float
    count: int


def mre(pred, true, threshold: float = 1e-2) -> MreResult:
    """Mean of |pred - true| / |true| over entries where |true| > threshold."""
    pred = as_complex(pred)
    true = as_complex(true)
    if pred.shape != true.shape:
        raise ValidationError(f"mre shape mismatch: {pred.shape} vs {true.shape}")
    mask = np.abs(true) > threshold
    count = int(mask.sum())
    if count == 0:
        raise ValidationError(
            f"no entries exceed the |true| > {threshold} threshold; mre undefined"
        )
    value = float(np.mean(np.abs(pred[mask] - true[mask]) / np.abs(true[mask])))
    return MreResult(value, count)


@dataclass
class EvalReport:
    """Per-sample metric rows plus aggregate summary values.

    Rows are (sample, t_start, t_end, metric, value); summaries are appended
    to the CSV with sample index -1.
    """

    rows: list[tuple[int, float, float, str, float]] = field(default_factory=list)
    summary: dict[str, float] = field(default_factory=dict)

    def add(self, sample: int, t_start: float, t_end: float, metric: str, value: float):
        self.rows.append((sample, float(t_start), float(t_end), metric, float(value)))

    def metric_values(self, metric: str) -> np.ndarray:
        return np.array([r[4] for r in self.rows if r[3] == metric])

    def summarize(self, metric: str, stat: str = "mean") -> float:
        values = self.metric_values(metric)
        if values.size == 0:
            raise ValidationError(f"no rows for metric {metric!r}")
        value = float(getattr(np, stat)(values))
        self.summary[f"{stat}_{metric}"] = value
        return value

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "t_start", "t_end", "metric", "value"])
            for row in self.rows:
                writer.writerow([row[0], repr(row[1]), repr(row[2]), row[3], repr(row[4])])
            for name, value in self.summary.items():
                writer.writerow([-1, "", "", name, repr(value)])


# -- direct (single-pass) evaluation ------------------------------------------


def evaluate_direct(model: FnoModel, dataset: Dataset) -> EvalReport:
    """Run the operator once on every sample and score it against the targets."""
    if dataset.arch != model.config.arch:
        raise ValidationError(
            f"dataset arch {dataset.arch!r} does not match model {model.config.arch!r}"
        )
    report = EvalReport()
    if dataset.arch == "energy":
        pred = model.forward(assemble_energy_inputs(dataset.inputs))[:, 0, :]
        fid = batched_fidelity(pred, dataset.targets, axis=-1)
        for i in range(len(dataset)):
            k = dataset.interval_of(i)
            report.add(i, k * dataset.period, (k + 1) * dataset.period, "fidelity", fid[i])
        report.summarize("fidelity")
        report.summarize("fidelity", "min")
        return report

    pred = model.forward(assemble_window_inputs(dataset.inputs, dataset.input_grid))
    grid = dataset.target_grid
    if dataset.arch == "time":
        fid = batched_fidelity(pred, dataset.targets, axis=1)  # (samples, columns)
        unseen = dataset.input_grid.end  # columns at t >= 3T/2 were never inputs
        unseen_cols = grid.points >= unseen - 1e-12
        for i in range(len(dataset)):
            report.add(i, grid.t0, grid.end, "fidelity", float(fid[i].mean()))
            report.add(
                i, unseen, grid.end, "fidelity_unseen", float(fid[i][unseen_cols].mean())
            )
        report.summarize("fidelity")
        report.summarize("fidelity_unseen")
    else:
        for i in range(len(dataset)):
            sample_mre = mre(pred[i], dataset.targets[i])
            diff = pred[i] - dataset.targets[i]
            report.add(i, grid.t0, grid.end, "mre", sample_mre.value)
            report.add(i, grid.t0, grid.end, "mre_count", sample_mre.count)
            report.add(
                i, grid.t0, grid.end, "mse", float(np.mean(np.abs(diff) ** 2))
            )
        report.summarize("mre")
        report.summarize("mse")
    return report


# -- rollouts ------------------------------------------------------------------


def _renormalize_columns(values: np.ndarray, axis: int) -> np.ndarray:
    norms = np.sqrt(np.sum(values.real**2 + values.imag**2, axis=axis, keepdims=True))
    if np.any(norms == 0.0):
        raise NumericError("rollout produced a zero state; cannot renormalize")
    return values / norms


def rollout_energy(
    model: FnoModel | Callable[[np.ndarray], np.ndarray],
    state: WaveFunction,
    steps: int,
    renormalize: bool = True,
) -> list[WaveFunction]:
    """Re-feed single-state predictions: step k approximates psi((k+1) * T).

    ``model`` may be a trained operator or any callable on amplitude vectors
    (the exact propagator makes the rollout plumbing testable on its own).
    """
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    current = state.amplitudes
    predictions: list[WaveFunction] = []
    for _ in range(steps):
        if isinstance(model, FnoModel):
            current = model.forward(assemble_energy_inputs(current[None, :]))[0, 0]
        else:
            current = as_complex(model(current))
        if renormalize:
            current = _renormalize_columns(current, axis=0)
        predictions.append(
            WaveFunction(current, basis_order=state.basis_order, norm_tol=math.inf)
        )
    return predictions


def rollout_window_batch(
    model: FnoModel | Callable[[np.ndarray], np.ndarray],
    values: np.ndarray,
    grid: TimeGrid,
    passes: int,
    renormalize: bool,
    gt_source: Callable[[int], np.ndarray] | None = None,
) -> np.ndarray:
    """Window rollout over a batch: (samples, C, m) -> (samples, C, columns).

    Pass k consumes the window starting at k*T and emits the window starting
    at (k+1)*T; outputs are concatenated with the 5-column overlaps dropped
    (each pass contributes 10 new columns, the last keeps all 15).  With
    ``gt_source``, pass k+1 consumes ``gt_source(k + 1)`` (the exact window,
    ground-truth-fed mode) instead of the previous prediction.
    """
    if passes < 1:
        raise ValidationError(f"passes must be >= 1, got {passes}")
    values = as_complex(values)
    if values.ndim != 3:
        raise ValidationError(f"expected (samples, channels, m) values, got {values.shape}")
    relative = TimeGrid(0.0, grid.dt, grid.m)
    current = values
    collected: list[np.ndarray] = []
    for k in range(passes):
        if isinstance(model, FnoModel):
            out = model.forward(assemble_window_inputs(current, relative))
        else:
            out = as_complex(model(current))
        if renormalize:
            out = _renormalize_columns(out, axis=1)
        collected.append(out)
        if k + 1 < passes:
            current = gt_source(k + 1) if gt_source is not None else out
    parts = [c[:, :, :TARGET_OFFSET] for c in collected[:-1]] + [collected[-1]]
    return np.concatenate(parts, axis=2)


def rollout_time(
    model: FnoModel | Callable[[np.ndarray], np.ndarray],
    trajectory: Trajectory,
    passes: int,
    renormalize: bool = True,
    gt_source: Callable[[int], np.ndarray] | None = None,
) -> Trajectory:
    """Single-trajectory window rollout; returns the stitched prediction.

    The result grid starts one period after the input grid and spans
    ``passes`` windows: 10 * passes + 5 columns.  To reach 23T/2 from a
    [0, 3T/2) input, use 10 passes (the first is the direct prediction,
    the other nine re-feed).
    """
    batch_gt = None
    if gt_source is not None:
        batch_gt = lambda k: gt_source(k)[None]  # noqa: E731
    stacked = rollout_window_batch(
        model, trajectory.values[None], trajectory.grid, passes, renormalize, batch_gt
    )
    period = trajectory.grid.dt * TARGET_OFFSET
    out_grid = TimeGrid(trajectory.grid.t0 + period, trajectory.grid.dt, stacked.shape[2])
    return Trajectory(grid=out_grid, values=stacked[0], basis_order=trajectory.basis_order)


def initial_binary_columns(
    dataset: Dataset, hamiltonian: HamiltonianMatrix, count: int
) -> np.ndarray:
    """The exact t=0 states behind the first ``count`` samples, binary basis.

    Amplitude windows carry them directly (column 0, unsorted); expectation
    windows do not, so those are re-drawn from the recorded state streams.
    """
    if dataset.arch == "time":
        inverse = np.argsort(hamiltonian.energy_order)
        return np.ascontiguousarray(dataset.inputs[:count, :, 0].T[inverse])
    if dataset.arch == "observables":
        return _initial_columns(
            dataset.spec,
            hamiltonian,
            dataset.input_type,
            dataset.fraction if dataset.fraction is not None else 0.25,
            dataset.states_seed,
            range(count),
        )
    raise ValidationError("initial columns are defined for window datasets only")


def rollout_eval(
    model: FnoModel,
    dataset: Dataset,
    rounds: int,
    gt_fed: bool = False,
    samples: int | None = None,
) -> EvalReport:
    """Score an autoregressive rollout over a dataset against exact evolution.

    Energy datasets: one row per (sample, round); round j consumes the state
    at (k + j - 1) * T and is scored at t_end = (k + j) * T.  Window datasets:
    the stitched prediction is scored per sample over its whole output grid
    ("fidelity" / "mre") and over the columns past the first emitted window
    ("*_extrapolated", t >= t0 + 5T/2, present when rounds >= 2).  With
    ``gt_fed`` every round consumes the exact window instead of its own
    previous output.
    """
    if dataset.arch != model.config.arch:
        raise ValidationError(
            f"dataset arch {dataset.arch!r} does not match model {model.config.arch!r}"
        )
    if rounds < 1:
        raise ValidationError(f"rounds must be >= 1, got {rounds}")
    count = len(dataset) if samples is None else min(samples, len(dataset))
    hamiltonian = build_hamiltonian(dataset.spec)
    order = hamiltonian.energy_order
    period = dataset.period
    report = EvalReport()

    if dataset.arch == "energy":
        vectors = hamiltonian.eigenvectors
        one_period = (vectors * np.exp(-1j * hamiltonian.eigenvalues * period)) @ (
            vectors.conj().T
        )
        one_period = one_period[order][:, order]  # acts on energy-sorted rows
        current = dataset.inputs[:count]
        exact = current.copy()
        for j in range(1, rounds + 1):
            exact = exact @ one_period.T
            pred = model.forward(assemble_energy_inputs(current))[:, 0, :]
            pred = _renormalize_columns(pred, axis=1)
            fid = batched_fidelity(pred, exact, axis=-1)
            for i in range(count):
                k = dataset.interval_of(i)
                report.add(
                    i, (k + j - 1) * period, (k + j) * period, "fidelity", fid[i]
                )
            current = exact.copy() if gt_fed else pred
        report.summarize("fidelity")
        report.summarize("fidelity", "min")
        return report

    grid = dataset.input_grid
    initial = initial_binary_columns(dataset, hamiltonian, count)
    observables = default_observables(dataset.spec.n) if dataset.arch == "observables" else None

    def exact_windows(k: int) -> np.ndarray:
        window = TimeGrid(grid.t0 + k * period, grid.dt, grid.m)
        block = evolve_columns(hamiltonian, initial, window.points)
        if observables is None:
            return np.moveaxis(block[order], 1, 0)
        return np.stack(
            [observables.expectations(block[:, i, :]) for i in range(count)]
        ).astype(np.complex128)

    stitched = rollout_window_batch(
        model,
        dataset.inputs[:count],
        grid,
        rounds,
        renormalize=observables is None,
        gt_source=exact_windows if gt_fed else None,
    )
    out_grid = TimeGrid(grid.t0 + period, grid.dt, stitched.shape[2])
    block = evolve_columns(hamiltonian, initial, out_grid.points)
    extrapolated = np.arange(out_grid.m) >= WINDOW_COLUMNS  # beyond the first window
    for i in range(count):
        if observables is None:
            truth = block[order, i, :]
            fid = batched_fidelity(stitched[i], truth, axis=0)
            report.add(i, out_grid.t0, out_grid.end, "fidelity", float(fid.mean()))
            if extrapolated.any():
                report.add(
                    i,
                    out_grid.points[WINDOW_COLUMNS],
                    out_grid.end,
                    "fidelity_extrapolated",
                    float(fid[extrapolated].mean()),
                )
        else:
            truth = observables.expectations(block[:, i, :]).astype(np.complex128)
            report.add(
                i, out_grid.t0, out_grid.end, "mre", mre(stitched[i], truth).value
            )
            if extrapolated.any():
                report.add(
                    i,
                    out_grid.points[WINDOW_COLUMNS],
                    out_grid.end,
                    "mre_extrapolated",
                    mre(stitched[i][:, extrapolated], truth[:, extrapolated]).value,
                )
    if observables is None:
        report.summarize("fidelity")
        if extrapolated.any():
            report.summarize("fidelity_extrapolated")
    else:
        report.summarize("mre")
        if extrapolated.any():
            report.summarize("mre_extrapolated")
    return report


# -- super-resolution ----------------------------------------------------------


def superres_eval(
    model: FnoModel,
    hamiltonian: HamiltonianMatrix,
    states: list[WaveFunction],
    factor: int,
    period: float = math.pi,
) -> EvalReport:
    """Evaluate one trained window operator on its training grid and on a
    ``factor`` times finer grid of the same interval, against exact evolution.

    Works because retained DFT coefficients are grid-length invariant under
    the 1/N-forward convention; reported per state as coarse/fine fidelity and
    the relative degradation (coarse - fine) / coarse.
    """
    if factor < 1:
        raise ValidationError(f"factor must be >= 1, got {factor}")
    if model.config.arch != "time":
        raise ValidationError("super-resolution evaluation needs a window operator")
    report = EvalReport()
    order = hamiltonian.energy_order
    dt = period / 10.0
    for i, psi in enumerate(states):
        if psi.basis_order != "binary":
            raise ValidationError("super-resolution states must be binary-basis")
        for tag, step in (("coarse", dt), ("fine", dt / factor)):
            m = 15 if tag == "coarse" else 15 * factor
            grid_in = TimeGrid(0.0, step, m)
            grid_out = TimeGrid(period, step, m)
            source = evolve_on_grid(hamiltonian, psi, grid_in).values[order]
            truth = evolve_on_grid(hamiltonian, psi, grid_out).values[order]
            pred = model.forward(assemble_window_inputs(source[None], grid_in))[0]
            fid = batched_fidelity(pred, truth, axis=0)
            report.add(i, grid_out.t0, grid_out.end, f"fidelity_{tag}", float(fid.mean()))
        coarse = report.rows[-2][4]
        fine = report.rows[-1][4]
        degradation = (coarse - fine) / coarse if coarse > 0 else math.inf
        report.add(i, period, period + 1.5 * period, "degradation", degradation)
    report.summarize("fidelity_coarse")
    report.summarize("fidelity_fine")
    report.summarize("degradation")
    return report


# -- observables ground-truth source -------------------------------------------


def observables_gt_source(
    hamiltonian: HamiltonianMatrix, psi: WaveFunction, grid: TimeGrid
) -> Callable[[int], np.ndarray]:
    """Exact expectation windows for ground-truth-fed observable rollouts.

    ``gt(k)`` returns the canonical-string expectation window on
    [k*T, k*T + 3T/2) for the state that was ``psi`` at grid.t0.
    """
    observables = default_observables(hamiltonian.spec.n)
    period = grid.dt * TARGET_OFFSET

    def source(k: int) -> np.ndarray:
        window = TimeGrid(grid.t0 + k * period, grid.dt, grid.m)
        block = evolve_columns(hamiltonian, psi.amplitudes[:, None], window.points)
        return observables.expectations(block[:, 0, :]).astype(np.complex128)

    return source


# -- wall-clock comparison ------------------------------------------------------


def bench(
    model: FnoModel,
    dataset: Dataset,
    passes: int = 10,
    samples: int | None = None,
) -> EvalReport:
    """Time the learned rollout against exact eigendecomposition + evolution.

    Both sides produce the state on every output column of a ``passes``-window
    rollout for the same initial states.  The exact side pays for one
    eigendecomposition (timed) plus the propagation.  Emits seconds for both
    and the ratio exact / learned; the ratio is hardware truth, not a target.
    """
    if dataset.arch != "time":
        raise ValidationError("bench runs on window (time-arch) datasets")
    count = len(dataset) if samples is None else min(samples, len(dataset))
    windows = dataset.inputs[:count]
    grid = dataset.input_grid
    hamiltonian = build_hamiltonian(dataset.spec)  # matrix assembly not timed
    period = grid.dt * TARGET_OFFSET
    out_times = grid.t0 + period + grid.dt * np.arange(TARGET_OFFSET * passes + 5)
    inverse_order = np.argsort(hamiltonian.energy_order)
    initial = windows[:, :, 0].T[inverse_order]  # binary-basis initial columns

    t0 = time.perf_counter()
    rollout_window_batch(model, windows, grid, passes, renormalize=True)
    fno_seconds = time.perf_counter() - t0

    # Exact route, from scratch: one eigendecomposition plus propagation to
    # the same 10 * passes + 5 output times.
    t0 = time.perf_counter()
    eigenvalues, eigenvectors = eigh(hamiltonian.matrix)
    coeff = eigenvectors.conj().T @ initial
    for t in out_times:
        eigenvectors @ (np.exp(-1j * eigenvalues * t)[:, None] * coeff)
    exact_seconds = time.perf_counter() - t0

    report = EvalReport()
    horizon = float(out_times[-1] + grid.dt)
    report.add(0, grid.t0, horizon, "fno_seconds", fno_seconds)
    report.add(0, grid.t0, horizon, "exact_seconds", exact_seconds)
    report.add(0, grid.t0, horizon, "speedup_exact_over_fno", exact_seconds / fno_seconds)
    report.summary["fno_seconds"] = fno_seconds
    report.summary["exact_seconds"] = exact_seconds
    report.summary["speedup_exact_over_fno"] = exact_seconds / fno_seconds
    report.summary["samples"] = float(count)
    return report
