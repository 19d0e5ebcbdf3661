"""Operator architecture: mode bookkeeping, forward shape/grad contracts,
resolution independence of the spectral path, input assembly."""

import math

import numpy as np
import pytest
from helpers import fd_gradient, max_rel_error, random_complex

from qfno.autodiff import Param, Tape
from qfno.evolve import TimeGrid
from qfno.fno import (
    Checkpoint,
    FnoConfig,
    FnoModel,
    assemble_energy_inputs,
    assemble_inputs,
    assemble_window_inputs,
    embed_state_channel,
    embed_time,
    make_energy_model,
    make_observables_model,
    make_time_model,
    mode_indices,
    spectral_conv,
)
from qfno.numerics import ValidationError, dft_forward


class TestModeIndices:
    def test_seven_of_fifteen(self):
        np.testing.assert_array_equal(mode_indices(7, 15), [0, 1, 2, 3, 12, 13, 14])

    def test_full_band_exact_cover(self):
        for n in (1, 2, 5, 8, 15, 16):
            idx = mode_indices(n, n)
            assert sorted(idx.tolist()) == list(range(n))

    def test_one_mode(self):
        np.testing.assert_array_equal(mode_indices(1, 8), [0])

    def test_even_split(self):
        np.testing.assert_array_equal(mode_indices(4, 8), [0, 1, 6, 7])

    def test_bounds(self):
        with pytest.raises(ValidationError):
            mode_indices(0, 8)
        with pytest.raises(ValidationError):
            mode_indices(9, 8)


class TestSpectralConv:
    def test_full_band_identity_mixers_are_identity(self):
        # With K = N and every per-mode mixer the identity, the op is exactly
        # DFT then inverse DFT: the identity map.
        rng = np.random.default_rng(0)
        n, channels = 16, 3
        v = random_complex(rng, (2, channels, n))
        r = np.broadcast_to(np.eye(channels, dtype=np.complex128), (n, channels, channels)).copy()
        out = spectral_conv(v, r)
        np.testing.assert_allclose(out, v, atol=1e-12)

    def test_truncation_kills_out_of_band_content(self):
        n = 16
        idx = mode_indices(4, n)
        coeffs = np.zeros((1, 1, n), dtype=np.complex128)
        coeffs[0, 0, 5] = 1.0  # outside the 4-mode band
        from qfno.numerics import dft_inverse

        signal = dft_inverse(coeffs)
        r = np.ones((4, 1, 1), dtype=np.complex128)
        out = spectral_conv(signal, r)
        np.testing.assert_allclose(out, 0, atol=1e-12)
        assert 5 not in idx

    def test_resolution_independent_coefficients(self):
        # A band-limited signal sampled at N and 10N must map to the same
        # band-limited output function; with the 1/N-forward convention the
        # retained coefficients match exactly across grids.
        rng = np.random.default_rng(1)
        n_coarse, factor, k = 20, 10, 7
        n_fine = n_coarse * factor
        idx_coarse = mode_indices(k, n_coarse)
        idx_fine = mode_indices(k, n_fine)
        spectrum = random_complex(rng, k)
        coarse = np.zeros((1, 1, n_coarse), dtype=np.complex128)
        coarse[0, 0, idx_coarse] = spectrum
        fine = np.zeros((1, 1, n_fine), dtype=np.complex128)
        fine[0, 0, idx_fine] = spectrum
        from qfno.numerics import dft_inverse

        v_coarse = dft_inverse(coarse)
        v_fine = dft_inverse(fine)
        # The fine samples interleave the coarse ones every `factor` steps.
        np.testing.assert_allclose(v_fine[0, 0, ::factor], v_coarse[0, 0], atol=1e-12)
        r = random_complex(rng, (k, 1, 1))
        out_coarse = spectral_conv(v_coarse, r)
        out_fine = spectral_conv(v_fine, r)
        np.testing.assert_allclose(out_fine[0, 0, ::factor], out_coarse[0, 0], atol=1e-12)
        np.testing.assert_allclose(
            dft_forward(out_fine)[0, 0, idx_fine],
            dft_forward(out_coarse)[0, 0, idx_coarse],
            atol=1e-12,
        )

    def test_channel_mixing(self):
        rng = np.random.default_rng(2)
        v = random_complex(rng, (1, 2, 8))
        r = random_complex(rng, (3, 4, 2))
        out = spectral_conv(v, r)
        assert out.shape == (1, 4, 8)

    def test_zero_mixers_zero_output(self):
        rng = np.random.default_rng(4)
        v = random_complex(rng, (2, 3, 8))
        out = spectral_conv(v, np.zeros((4, 3, 3), dtype=np.complex128))
        np.testing.assert_array_equal(out, 0)

    def test_two_mode_band_matches_direct_summation(self):
        # Hand-rolled oracle: explicit O(N^2) DFT sums, scalar per-mode
        # mixers, explicit inverse sum. Single channel, K=2, N=4 keeps the
        # arithmetic small enough to audit by eye.
        rng = np.random.default_rng(5)
        n, k = 4, 2
        v = random_complex(rng, n)
        r = random_complex(rng, (k, 1, 1))
        band = [0, n - 1]  # ceil(2/2)=1 low mode, floor(2/2)=1 high mode
        expected = np.zeros(n, dtype=np.complex128)
        for slot, mode in enumerate(band):
            coeff = sum(
                v[j] * np.exp(-2j * np.pi * j * mode / n) for j in range(n)
            ) / n
            mixed = r[slot, 0, 0] * coeff
            for j in range(n):
                expected[j] += mixed * np.exp(2j * np.pi * j * mode / n)
        out = spectral_conv(v[None, None, :], r)
        np.testing.assert_allclose(out[0, 0], expected, atol=1e-13)

    def test_linear_in_signal(self):
        rng = np.random.default_rng(6)
        a, b = 1.7 - 0.4j, -0.9 + 2.2j
        v1 = random_complex(rng, (1, 2, 12))
        v2 = random_complex(rng, (1, 2, 12))
        r = random_complex(rng, (5, 2, 2))
        combined = spectral_conv(a * v1 + b * v2, r)
        separate = a * spectral_conv(v1, r) + b * spectral_conv(v2, r)
        np.testing.assert_allclose(combined, separate, atol=1e-12)

    def test_unbatched_round_trip(self):
        rng = np.random.default_rng(3)
        v = random_complex(rng, (2, 8))
        r = random_complex(rng, (3, 2, 2))
        assert spectral_conv(v, r).shape == (2, 8)

    def test_channel_mismatch(self):
        with pytest.raises(ValidationError):
            spectral_conv(np.ones((1, 2, 8)), np.ones((3, 4, 5)))

    def test_band_longer_than_grid(self):
        with pytest.raises(ValidationError):
            spectral_conv(np.ones((1, 1, 4)), np.ones((5, 1, 1)))


class TestConfig:
    def test_param_shapes_and_count(self):
        config = FnoConfig(
            arch="time",
            n_qubits=2,
            in_channels=6,
            out_channels=4,
            width=8,
            blocks=2,
            modes=3,
        )
        shapes = config.param_shapes()
        assert list(shapes)[:2] == ["lift.w", "lift.b"]
        assert shapes["block1.r"] == (3, 8, 8)
        manual = sum(int(np.prod(s)) for s in shapes.values())
        assert config.param_count() == manual
        # lift 8*6+8, blocks 2*(8*8+8+3*64), proj 8*8+8+4*8+4
        assert manual == (48 + 8) + 2 * (64 + 8 + 192) + (64 + 8) + (32 + 4)

    def test_width_must_cover_outputs(self):
        with pytest.raises(ValidationError, match="width"):
            FnoConfig(
                arch="time",
                n_qubits=2,
                in_channels=6,
                out_channels=4,
                width=2,
                blocks=1,
                modes=2,
            )

    def test_canonical_models(self):
        energy = make_energy_model(4, width=16, seed=1)
        assert energy.config.in_channels == 2
        assert energy.config.out_channels == 1
        assert energy.config.modes == 16  # min(128, 2^4)
        big = make_energy_model(8, width=16, seed=1)
        assert big.config.modes == 128
        time = make_time_model(8)
        assert time.config.width == 256  # forced up to out_channels
        assert time.config.in_channels == 258
        obs = make_observables_model(4)
        assert obs.config.in_channels == 26
        assert obs.config.out_channels == 24


class TestModelForward:
    def test_shapes_batched_and_single(self):
        model = make_energy_model(3, width=8, blocks=2, seed=0)
        x = np.zeros((5, 2, 8), dtype=np.complex128)
        out = model.forward(x)
        assert out.shape == (5, 1, 8)
        single = model.forward(x[0])
        assert single.shape == (1, 8)
        np.testing.assert_allclose(single, out[0], atol=1e-12)

    def test_length_generic_shapes(self):
        # The same weights act on any grid at least as long as the retained
        # band; channel count is all the forward pass pins down.
        model = make_energy_model(3, width=8, blocks=2, seed=7)
        for n in (15, 150):
            out = model.forward(np.zeros((2, 2, n), dtype=np.complex128))
            assert out.shape == (2, 1, n)

    def test_zero_input_zero_bias_gives_zero(self):
        # Biases start at zero, every layer maps 0 to 0, and the split
        # activation fixes 0, so a fresh model annihilates the zero signal.
        model = make_time_model(3, width=8, blocks=2, seed=8)
        out = model.forward(np.zeros((1, 10, 15), dtype=np.complex128))
        np.testing.assert_array_equal(out, 0)

    def test_constant_in_space_maps_to_constant(self):
        # A grid-constant signal lives entirely in mode 0; nothing in the
        # network can move energy to other modes, so the output is
        # grid-constant too.
        model = make_energy_model(3, width=8, blocks=3, seed=9)
        x = np.empty((1, 2, 16), dtype=np.complex128)
        x[0, 0] = 0.31 - 0.12j
        x[0, 1] = -0.54 + 0.77j
        out = model.forward(x)
        np.testing.assert_allclose(
            out, np.broadcast_to(out[:, :, :1], out.shape), atol=1e-10
        )

    def test_deterministic_by_seed(self):
        a = make_energy_model(3, width=8, seed=5)
        b = make_energy_model(3, width=8, seed=5)
        c = make_energy_model(3, width=8, seed=6)
        x = assemble_energy_inputs(np.ones((1, 8)) / math.sqrt(8))
        np.testing.assert_array_equal(a.forward(x), b.forward(x))
        assert not np.array_equal(a.forward(x), c.forward(x))

    def test_bias_zero_and_init_scales(self):
        model = make_time_model(4, width=32, seed=3)
        assert np.all(model.params["lift.b"].value == 0)
        r = model.params["block0.r"].value
        expected = 1.0 / math.sqrt(32 * 32 * 7)
        assert np.std(r.real) == pytest.approx(expected, rel=0.1)
        w = model.params["block0.w"].value
        assert np.std(w.imag) == pytest.approx(1.0 / math.sqrt(32), rel=0.15)

    def test_rejects_wrong_channels_and_short_grid(self):
        model = make_energy_model(3, width=8, seed=0)
        with pytest.raises(ValidationError):
            model.forward(np.zeros((1, 3, 8), dtype=np.complex128))
        with pytest.raises(ValidationError):
            model.forward(np.zeros((1, 2, 4), dtype=np.complex128))  # grid < modes

    def test_rejects_nan_input(self):
        model = make_energy_model(3, width=8, seed=0)
        x = np.zeros((1, 2, 8), dtype=np.complex128)
        x[0, 0, 0] = np.nan
        with pytest.raises(ValidationError, match="NaN"):
            model.forward(x)

    def test_training_forward_needs_batch(self):
        model = make_energy_model(3, width=8, seed=0)
        with pytest.raises(ValidationError):
            model.forward(np.zeros((2, 8), dtype=np.complex128), tape=Tape())

    @pytest.mark.parametrize("seed", range(3))
    def test_full_model_gradients_match_fd(self, seed):
        # Small end-to-end gradient check; the acceptance suite runs the
        # full 20-seed version.
        rng = np.random.default_rng(200 + seed)
        config = FnoConfig(
            arch="energy",
            n_qubits=3,
            in_channels=2,
            out_channels=1,
            width=4,
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
        assert max_rel_error(analytic, numeric) < 1e-4

    def test_checkpoint_round_trip(self):
        model = make_observables_model(2, width=16, seed=9)
        ckpt = model.to_checkpoint(meta={"note": "unit"})
        clone = FnoModel.from_checkpoint(ckpt)
        x = np.zeros((1, 14, 15), dtype=np.complex128)
        np.testing.assert_array_equal(model.forward(x), clone.forward(x))
        # Clone owns its weights.
        clone.params["lift.w"].value += 1.0
        assert not np.array_equal(clone.params["lift.w"].value, model.params["lift.w"].value)

    def test_checkpoint_shape_guard(self):
        model = make_energy_model(2, width=8, seed=0)
        ckpt = model.to_checkpoint()
        bad = dict(ckpt.params)
        bad["lift.w"] = np.zeros((3, 3), dtype=np.complex128)
        with pytest.raises(ValidationError):
            Checkpoint(config=ckpt.config, params=bad)


class TestAssembly:
    def test_embed_state_channel(self):
        np.testing.assert_allclose(embed_state_channel(16), np.arange(16) / 16, atol=0)

    def test_embed_time_values(self):
        grid = TimeGrid(0.0, math.pi / 2, 2)
        rows = embed_time(grid)
        np.testing.assert_allclose(rows[:, 0], [0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(rows[:, 1], [1.0, 0.0], atol=1e-15)

    def test_energy_assembly(self):
        states = np.full((3, 8), 1 / math.sqrt(8), dtype=np.complex128)
        x = assemble_energy_inputs(states)
        assert x.shape == (3, 2, 8)
        np.testing.assert_allclose(x[0, 0].real, np.arange(8) / 8)
        np.testing.assert_array_equal(x[:, 1, :], states)

    def test_window_assembly(self):
        grid = TimeGrid(0.0, 0.1, 15)
        values = np.ones((2, 4, 15), dtype=np.complex128)
        x = assemble_window_inputs(values, grid)
        assert x.shape == (2, 6, 15)
        np.testing.assert_allclose(x[0, 0].real, np.sin(grid.points), atol=1e-15)
        np.testing.assert_allclose(x[1, 1].real, np.cos(grid.points), atol=1e-15)
        np.testing.assert_array_equal(x[:, 2:, :], values)

    def test_dispatch(self):
        states = np.full((1, 4), 0.5, dtype=np.complex128)
        assert assemble_inputs("energy", states).shape == (1, 2, 4)
        with pytest.raises(ValidationError, match="grid"):
            assemble_inputs("time", np.ones((1, 4, 15), dtype=np.complex128))
        with pytest.raises(ValidationError):
            assemble_inputs("banana", states)

    def test_window_grid_mismatch(self):
        with pytest.raises(ValidationError):
            assemble_window_inputs(np.ones((1, 4, 10), dtype=np.complex128), TimeGrid(0, 0.1, 15))
