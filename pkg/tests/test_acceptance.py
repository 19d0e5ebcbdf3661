"""End-to-end acceptance checks.

Each check prints exactly one PASS/FAIL line (run with ``pytest -s`` to see
them live).  The first six are fast invariant and harness checks; the rest
train operators at desk scale and assert reproduction thresholds.  Trained
models are shared across checks through session fixtures.  The 8-qubit
observables reproduction is opt-in: set QFNO_LONG_TESTS=1.
"""

import math
import os
import time
from types import SimpleNamespace

import numpy as np
import pytest

from qfno.autodiff import Param, Tape
from qfno.evaluate import (
    bench,
    evaluate_direct,
    fidelity,
    initial_binary_columns,
    rollout_energy,
    rollout_eval,
    rollout_time,
    superres_eval,
)
from qfno.evolve import (
    TimeGrid,
    Trajectory,
    build_energy_dataset,
    build_observables_dataset,
    build_time_dataset,
    evolve_on_grid,
    evolve_state,
)
from qfno.fno import (
    FnoConfig,
    FnoModel,
    make_energy_model,
    make_observables_model,
    make_time_model,
    mode_indices,
    spectral_conv,
)
from qfno.io import load_checkpoint, load_dataset, save_checkpoint, save_dataset
from qfno.numerics import RngStream, dft_forward, dft_inverse, eigh
from qfno.spin import SpinChainSpec, build_hamiltonian, expectation
from qfno.states import WaveFunction, random_state
from qfno.train import TrainConfig, batched_fidelity, train

from helpers import fd_gradient, max_rel_error, random_complex

LONG_TESTS = os.environ.get("QFNO_LONG_TESTS") == "1"


def _report(tag: str, ok: bool, detail: str) -> None:
    print(f"[{tag}] {'PASS' if ok else 'FAIL'} {detail}", flush=True)
    assert ok, f"{tag}: {detail}"


def _propagator(hamiltonian, t):
    """Exact one-interval map acting on energy-sorted amplitude vectors."""
    vectors = hamiltonian.eigenvectors
    u = (vectors * np.exp(-1j * hamiltonian.eigenvalues * t)) @ vectors.conj().T
    order = hamiltonian.energy_order
    return u[order][:, order]


# ---------------------------------------------------------------------------
# fast invariant and harness checks
# ---------------------------------------------------------------------------


def test_01_exact_evolution_oracles():
    t0 = time.perf_counter()
    worst_norm = 0.0
    worst_energy = 0.0
    worst_unitary = 0.0
    for i, n in enumerate([4] * 25 + [8] * 25):
        spec = SpinChainSpec.random(n, "heisenberg" if i % 2 else "ising", seed=1000 + i)
        h = build_hamiltonian(spec)
        psi = random_state(n, RngStream(7, i))
        phi = random_state(n, RngStream(8, i))
        overlap0 = np.vdot(psi.amplitudes, phi.amplitudes)
        e0 = expectation(psi.amplitudes, h)
        for t in (0.3, 1.7, math.pi):
            at = evolve_state(h, psi, t)
            bt = evolve_state(h, phi, t)
            worst_norm = max(worst_norm, abs(at.norm() - 1.0))
            worst_energy = max(worst_energy, abs(expectation(at.amplitudes, h) - e0))
            worst_unitary = max(
                worst_unitary, abs(np.vdot(at.amplitudes, bt.amplitudes) - overlap0)
            )
    rng = np.random.default_rng(99)
    m = rng.standard_normal((256, 256)) + 1j * rng.standard_normal((256, 256))
    m = (m + m.conj().T) / 2
    lam, vec = eigh(m)
    recon = float(np.max(np.abs(vec @ np.diag(lam) @ vec.conj().T - m)))
    took = time.perf_counter() - t0
    ok = worst_norm < 1e-10 and worst_energy < 1e-8 and worst_unitary < 1e-10
    ok = ok and recon < 1e-9 and took < 60.0
    _report(
        "oracles",
        ok,
        f"50 trajectories: norm_drift={worst_norm:.2e} (<1e-10), "
        f"energy_drift={worst_energy:.2e} (<1e-8), unitarity={worst_unitary:.2e} "
        f"(<1e-10), eigh256_recon={recon:.2e} (<1e-9), runtime={took:.1f}s (<60s)",
    )


def test_02_dft_round_trip_and_parseval():
    worst_rt = 0.0
    worst_pv = 0.0
    for i, n in enumerate(list(range(1, 65)) + [150, 256]):
        x = random_complex(np.random.default_rng(i), (n,))
        back = dft_inverse(dft_forward(x))
        worst_rt = max(worst_rt, float(np.max(np.abs(back - x))))
        coeffs = dft_forward(x)
        lhs = float(np.sum(np.abs(x) ** 2))
        rhs = n * float(np.sum(np.abs(coeffs) ** 2))
        worst_pv = max(worst_pv, abs(lhs - rhs) / lhs)
    ok = worst_rt < 1e-10 and worst_pv < 1e-10
    _report(
        "dft",
        ok,
        f"lengths 1..64,150,256: round_trip={worst_rt:.2e} (<1e-10), "
        f"parseval={worst_pv:.2e} (<1e-10)",
    )


def test_03_gradient_check_20_seeds():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(3000 + seed)
        config = FnoConfig(
            arch="energy",
            n_qubits=3,
            in_channels=2,
            out_channels=1,
            width=8,
            blocks=2,
            modes=4,
        )
        model = FnoModel.initialize(config, seed=seed)
        x = random_complex(rng, (2, 2, 8))
        target = random_complex(rng, (2, 1, 8))

        def build_loss(tape):
            return tape.rel_l2(model.forward(x, tape=tape), target)

        tape = Tape()
        tape.backward(build_loss(tape))
        analytic = [p.grad.copy() for p in model.parameters()]
        numeric = fd_gradient(lambda: build_loss(Tape()).value, model.parameters())
        worst = max(worst, max_rel_error(analytic, numeric))
    ok = worst < 1e-4
    _report("gradcheck", ok, f"20 seeds, full operator vs central differences: "
                             f"max_rel_err={worst:.2e} (<1e-4)")


def test_04_spectral_conv_identity_and_adjoint():
    # Full band with an identity mixer must reproduce the input exactly.
    rng = np.random.default_rng(4)
    n, width = 12, 5
    v = random_complex(rng, (3, width, n))
    identity = np.broadcast_to(np.eye(width, dtype=np.complex128), (n, width, width)).copy()
    out = spectral_conv(v, identity)
    ident_err = float(np.max(np.abs(out - v)))

    # Truncated band: gradients through gather/scatter match finite differences.
    modes = 4
    kept = mode_indices(modes, n)
    v_p = Param("v", random_complex(rng, (2, width, n)))
    r_p = Param("r", random_complex(rng, (modes, width, width)) / width)

    def build_loss(tape):
        coeffs = tape.dft(v_p)
        mixed = tape.mode_mix(tape.gather_modes(coeffs, kept), r_p)
        return tape.sum_abs2(tape.idft(tape.scatter_modes(mixed, kept, n)))

    tape = Tape()
    tape.backward(build_loss(tape))
    analytic = [v_p.grad.copy(), r_p.grad.copy()]
    numeric = fd_gradient(lambda: build_loss(Tape()).value, [v_p, r_p])
    adj_err = max_rel_error(analytic, numeric)
    ok = ident_err < 1e-12 and adj_err < 1e-4
    _report(
        "spectral-identity",
        ok,
        f"full-band identity={ident_err:.2e} (<1e-12), "
        f"truncation adjoint vs fd={adj_err:.2e} (<1e-4)",
    )


def test_05_rollout_self_test():
    spec = SpinChainSpec.random(3, "heisenberg", seed=55)
    h = build_hamiltonian(spec)
    period = math.pi
    u = _propagator(h, period)
    psi0 = random_state(3, RngStream(5, 0))

    start = psi0.reorder(h.energy_order)
    steps = rollout_energy(lambda vec: u @ vec, start, steps=10)
    worst_energy = 0.0
    for k, predicted in enumerate(steps, start=1):
        exact = evolve_state(h, psi0, k * period).reorder(h.energy_order)
        worst_energy = max(worst_energy, 1.0 - fidelity(exact, predicted))

    grid = TimeGrid(0.0, period / 10, 15)
    source = evolve_on_grid(h, psi0, grid).values[h.energy_order]
    rolled = rollout_time(
        lambda w: np.einsum("ij,sjm->sim", u, w),
        Trajectory(grid, source, basis_order="energy"),
        passes=10,
    )
    exact_cols = evolve_on_grid(h, psi0, rolled.grid).values[h.energy_order]
    worst_window = float(np.max(1.0 - batched_fidelity(rolled.values, exact_cols, axis=0)))
    ok = worst_energy < 1e-10 and worst_window < 1e-10
    _report(
        "rollout-selftest",
        ok,
        f"exact map in place of the model: energy 1-fid={worst_energy:.2e}, "
        f"window 1-fid={worst_window:.2e} (both <1e-10)",
    )


def test_06_file_round_trips(tmp_path):
    spec = SpinChainSpec.random(3, "ising", seed=66)
    ds = build_time_dataset(spec, samples=4)
    a, b = tmp_path / "a.qfno", tmp_path / "b.qfno"
    save_dataset(a, ds)
    save_dataset(b, load_dataset(a))
    ds_ok = a.read_bytes() == b.read_bytes()

    ckpt = make_energy_model(3, width=8, seed=1).to_checkpoint(meta={"note": "acceptance"})
    c, d = tmp_path / "c.qfnc", tmp_path / "d.qfnc"
    save_checkpoint(c, ckpt)
    save_checkpoint(d, load_checkpoint(c))
    ck_ok = c.read_bytes() == d.read_bytes()
    _report(
        "file-roundtrip",
        ds_ok and ck_ok,
        f"dataset bytes identical={ds_ok}, checkpoint bytes identical={ck_ok}",
    )


# ---------------------------------------------------------------------------
# trained reproductions (desk scale)
# ---------------------------------------------------------------------------


SPEC4 = SpinChainSpec.random(4, "heisenberg", seed=1)
HELD_SEED = SPEC4.seed + 1000


@pytest.fixture(scope="session")
def energy4():
    t0 = time.perf_counter()
    ds = build_energy_dataset(SPEC4, samples=4000)
    held = build_energy_dataset(SPEC4, samples=400, states_seed=HELD_SEED)
    model = make_energy_model(4, width=32)
    ckpt, _ = train(model, ds, TrainConfig(lr=2e-3, epochs=150, batch_size=64, seed=0,
                                           lr_halve_every=60, log_every=0))
    return SimpleNamespace(
        model=FnoModel.from_checkpoint(ckpt),
        held=held,
        elapsed=time.perf_counter() - t0,
    )


@pytest.fixture(scope="session")
def time4():
    ds = build_time_dataset(SPEC4, samples=4000)
    held = build_time_dataset(SPEC4, samples=400, states_seed=HELD_SEED)
    model = make_time_model(4, width=64)
    ckpt, _ = train(model, ds, TrainConfig(lr=2e-3, epochs=200, batch_size=64, seed=0,
                                           lr_halve_every=60, log_every=0))
    return SimpleNamespace(model=FnoModel.from_checkpoint(ckpt), held=held)


def test_07_energy_domain_random(energy4):
    t0 = time.perf_counter()
    direct = evaluate_direct(energy4.model, energy4.held)
    held_fid = direct.summary["mean_fidelity"]
    roll = rollout_eval(energy4.model, energy4.held, rounds=10, samples=200)
    late = [r[4] for r in roll.rows
            if r[3] == "fidelity" and r[2] >= 2 * math.pi - 1e-9]
    roll_fid = float(np.mean(late))
    minutes = (energy4.elapsed + time.perf_counter() - t0) / 60.0
    ok = held_fid >= 0.99 and roll_fid >= 0.93 and minutes <= 15.0
    _report(
        "energy-random",
        ok,
        f"4q random 4000: held-out fid(T)={held_fid:.4f} (>=0.99), "
        f"rollout[2pi,10pi]={roll_fid:.4f} (>=0.93), runtime={minutes:.1f}min (<=15)",
    )


def test_08_energy_domain_low_energy_vti():
    ds = build_energy_dataset(SPEC4, samples=5000, input_type="low_energy",
                              intervals=(0, 1, 2))
    held = build_energy_dataset(SPEC4, samples=300, input_type="low_energy",
                                intervals=(0, 1, 2), states_seed=HELD_SEED)
    extrap = build_energy_dataset(SPEC4, samples=300, input_type="low_energy",
                                  intervals=(2,), states_seed=SPEC4.seed + 2000)
    model = make_energy_model(4, width=32)
    ckpt, _ = train(model, ds, TrainConfig(lr=2e-3, epochs=150, batch_size=64, seed=0,
                                           lr_halve_every=60, log_every=0))
    best = FnoModel.from_checkpoint(ckpt)
    train_fid = evaluate_direct(best, held).summary["mean_fidelity"]
    roll = rollout_eval(best, extrap, rounds=10, samples=300)
    late = [r[4] for r in roll.rows
            if r[3] == "fidelity" and r[2] >= 4 * math.pi - 1e-9]
    extrap_fid = float(np.mean(late))
    ok = train_fid >= 0.995 and extrap_fid >= 0.98
    _report(
        "energy-vti",
        ok,
        f"4q low-energy 3x5000: training-interval fid={train_fid:.4f} (>=0.995), "
        f"extrapolation[4pi,12pi]={extrap_fid:.4f} (>=0.98)",
    )


def test_09_time_domain_random(time4):
    direct = evaluate_direct(time4.model, time4.held)
    held_fid = direct.summary["mean_fidelity"]
    roll = rollout_eval(time4.model, time4.held, rounds=10, samples=100)
    roll_fid = roll.summary["mean_fidelity_extrapolated"]
    ok = held_fid >= 0.999 and roll_fid >= 0.99
    _report(
        "time-random",
        ok,
        f"4q random 4000: output-interval fid={held_fid:.5f} (>=0.999), "
        f"rollout[5pi/2,23pi/2]={roll_fid:.5f} (>=0.99)",
    )


def test_10_zero_shot_super_resolution(time4):
    h = build_hamiltonian(SPEC4)
    columns = initial_binary_columns(time4.held, h, 50)
    states = [WaveFunction(columns[:, i]) for i in range(50)]
    report = superres_eval(time4.model, h, states, factor=10)
    deg_pi = report.summary["mean_degradation"]

    # Same check on ten-times-coarser training windows: T=5pi, dt pi/2 -> pi/20.
    long_period = 5 * math.pi
    ds5 = build_time_dataset(SPEC4, samples=2000, period=long_period)
    model5 = make_time_model(4, width=64)
    ckpt5, _ = train(model5, ds5, TrainConfig(lr=2e-3, epochs=120, batch_size=64,
                                              seed=0, lr_halve_every=60, log_every=0))
    best5 = FnoModel.from_checkpoint(ckpt5)
    held5 = build_time_dataset(SPEC4, samples=25, period=long_period,
                               states_seed=HELD_SEED)
    columns5 = initial_binary_columns(held5, h, 25)
    states5 = [WaveFunction(columns5[:, i]) for i in range(25)]
    report5 = superres_eval(best5, h, states5, factor=10, period=long_period)
    deg_5pi = report5.summary["mean_degradation"]
    ok = deg_pi <= 0.02 and deg_5pi <= 0.02
    _report(
        "superres",
        ok,
        f"factor-10 degradation: dt=pi/10->pi/100 {deg_pi:.5f} (<=0.02), "
        f"dt=pi/2->pi/20 {deg_5pi:.5f} (<=0.02); "
        f"coarse fids {report.summary['mean_fidelity_coarse']:.4f}/"
        f"{report5.summary['mean_fidelity_coarse']:.4f}",
    )


def test_11_observables_desk_scale():
    spec = SpinChainSpec.random(4, "ising", seed=1)
    ds = build_observables_dataset(spec, samples=8000)
    held = build_observables_dataset(spec, samples=400, states_seed=spec.seed + 1000)
    model = make_observables_model(4, width=128)
    ckpt, _ = train(model, ds, TrainConfig(lr=2e-3, epochs=500, batch_size=32, seed=0,
                                           lr_halve_every=85, log_every=0))
    best = FnoModel.from_checkpoint(ckpt)
    held_mre = evaluate_direct(best, held).summary["mean_mre"]
    fed = rollout_eval(best, held, rounds=2, gt_fed=True, samples=200)
    fed_mre = fed.summary["mean_mre_extrapolated"]
    ok = held_mre <= 0.10 and fed_mre <= 0.15
    _report(
        "observables",
        ok,
        f"4q ising 24ch 8000: output-interval mre={held_mre:.4f} (<=0.10), "
        f"gt-fed extrapolation mre={fed_mre:.4f} (<=0.15)",
    )


@pytest.mark.skipif(not LONG_TESTS, reason="set QFNO_LONG_TESTS=1 to run")
def test_11b_observables_full_scale():
    spec = SpinChainSpec.random(8, "ising", seed=1)
    ds = build_observables_dataset(spec, samples=18000)
    held = build_observables_dataset(spec, samples=300, states_seed=spec.seed + 1000)
    model = make_observables_model(8, width=64)
    ckpt, _ = train(model, ds, TrainConfig(lr=2e-3, epochs=300, batch_size=32, seed=0,
                                           lr_halve_every=60, log_every=0))
    best = FnoModel.from_checkpoint(ckpt)
    fed = rollout_eval(best, held, rounds=2, gt_fed=True, samples=150)
    fed_mre = fed.summary["mean_mre_extrapolated"]
    ok = fed_mre <= 0.12
    _report(
        "observables-8q",
        ok,
        f"8q ising 48ch 18000: gt-fed extrapolation mre={fed_mre:.4f} (<=0.12)",
    )


@pytest.fixture(scope="session")
def time8():
    spec = SpinChainSpec.random(8, "heisenberg", seed=1)
    ds = build_time_dataset(spec, samples=1000)
    held = build_time_dataset(spec, samples=100, states_seed=spec.seed + 1000)
    model = make_time_model(8)
    ckpt, _ = train(model, ds, TrainConfig(lr=2e-3, epochs=100, batch_size=32, seed=0,
                                           lr_halve_every=40, log_every=0))
    return SimpleNamespace(model=FnoModel.from_checkpoint(ckpt), held=held)


def test_12_time_domain_8q_smoke(time8):
    held_fid = evaluate_direct(time8.model, time8.held).summary["mean_fidelity"]
    ok = held_fid >= 0.98
    _report(
        "time-8q",
        ok,
        f"8q random 1000 samples 100 epochs: output-interval fid={held_fid:.4f} (>=0.98)",
    )


def test_13_benchmark_ratio(time8):
    report = bench(time8.model, time8.held, passes=10, samples=50)
    ratio = report.summary["speedup_exact_over_fno"]
    ok = ratio > 0
    _report(
        "bench",
        ok,
        f"8q rollout, 50 states, 10 rounds: learned={report.summary['fno_seconds']:.2f}s, "
        f"exact={report.summary['exact_seconds']:.2f}s, "
        f"ratio exact/learned={ratio:.2f} (reported, not asserted)",
    )
