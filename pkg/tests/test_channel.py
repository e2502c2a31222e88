"""Tests for carrier geometry and TDL channel synthesis."""

import numpy as np
import pytest

from cebench.channel import (
    CfrTensor,
    build_grid,
    cfr_at,
    gen_channel,
    gen_pilot_sequence,
    load_profile,
    make_profile,
    preset_profile,
)


class TestBuildGrid:
    def test_paper_scale_pilot_count(self):
        # 273 PRB at comb 2 -> 1638 pilots per DMRS symbol (100 MHz layout)
        g = build_grid(n_prb=273, comb=2, dmrs_symbols=(2, 7, 11))
        assert g.n_pilots == 1638

    def test_single_prb(self):
        g = build_grid(n_prb=1, comb=2)
        assert g.n_pilots == 6

    def test_zero_prb_rejected(self):
        with pytest.raises(ValueError, match="n_prb"):
            build_grid(n_prb=0, comb=2)

    def test_duplicate_dmrs_symbols_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            build_grid(n_prb=4, dmrs_symbols=(2, 2, 7))

    def test_decreasing_dmrs_symbols_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            build_grid(n_prb=4, dmrs_symbols=(7, 2))

    def test_dmrs_symbol_range(self):
        with pytest.raises(ValueError, match=r"\[0, 13\]"):
            build_grid(n_prb=4, dmrs_symbols=(2, 14))

    def test_default_symbol_duration_mu1(self):
        g = build_grid(n_prb=4, scs_hz=30e3)
        assert g.symbol_duration_s == pytest.approx(0.5e-3 / 14, rel=1e-12)

    def test_pilot_spacing(self):
        g = build_grid(n_prb=4, scs_hz=30e3, comb=2)
        assert g.pilot_spacing_hz == 60e3
        assert np.allclose(np.diff(g.pilot_freqs_hz), 60e3)


class TestPilotSequence:
    def test_unit_modulus(self):
        p = gen_pilot_sequence(3, 64)
        assert np.max(np.abs(np.abs(p) - 1.0)) < 1e-12

    def test_deterministic(self):
        assert np.array_equal(gen_pilot_sequence(9, 128), gen_pilot_sequence(9, 128))

    def test_different_seeds_differ(self):
        a = gen_pilot_sequence(1, 256)
        b = gen_pilot_sequence(2, 256)
        assert np.any(np.abs(a - b) > 1e-9)

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            gen_pilot_sequence(1, 0)


class TestProfiles:
    def test_power_normalization(self):
        prof = make_profile([0, 1e-7, 3e-7], [1.0, 0.5, 0.25])
        assert abs(sum(prof.tap_powers_lin) - 1.0) < 1e-9

    def test_presets_exist(self):
        for name in ("short", "medium", "long"):
            prof = preset_profile(name)
            assert prof.n_taps == 3
            assert abs(sum(prof.tap_powers_lin) - 1.0) < 1e-9

    def test_decreasing_delays_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            make_profile([1e-7, 0.0], [0.5, 0.5])

    def test_negative_delay_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            make_profile([-1e-9, 1e-7], [0.5, 0.5])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            make_profile([], [])

    def test_scalar_rician_applies_to_first_tap(self):
        prof = make_profile([0, 1e-7], [0.5, 0.5], rician_k=9.0)
        assert prof.rician_k == (9.0, 0.0)

    def test_profile_file_round_trip(self, tmp_path):
        path = tmp_path / "prof.json"
        path.write_text(
            '{"delays_ns": [0, 100, 300], "powers_db": [0, -3, -6],'
            ' "doppler_hz": 55.0, "rician_k": 4.0}'
        )
        prof = load_profile(path)
        assert prof.tap_delays_s == pytest.approx((0.0, 1e-7, 3e-7), rel=1e-12)
        assert prof.doppler_hz == 55.0
        assert prof.rician_k[0] == 4.0


class TestGenChannel:
    def test_zero_doppler_constant_over_symbols(self):
        g = build_grid(n_prb=2, n_ant=1)
        prof = make_profile([0.0], [1.0], doppler_hz=0.0)
        r = gen_channel(prof, g, 14, seed=0)
        ref = r.tap_coeffs[:, :, :1]
        assert np.allclose(r.tap_coeffs, ref, atol=0, rtol=0)

    def test_deterministic_in_seed(self):
        g = build_grid(n_prb=2, n_ant=2)
        prof = preset_profile("medium", doppler_hz=100.0)
        a = gen_channel(prof, g, 14, seed=11)
        b = gen_channel(prof, g, 14, seed=11)
        assert np.array_equal(a.tap_coeffs, b.tap_coeffs)

    def test_unit_energy_monte_carlo(self):
        # Sample mean of |H|^2 over >= 1e4 pilot entries must sit in [0.95, 1.05].
        g = build_grid(n_prb=8, n_ant=2, dmrs_symbols=(2,))
        prof = preset_profile("medium", doppler_hz=50.0)
        total, count = 0.0, 0
        for seed in range(200):
            H = cfr_at(gen_channel(prof, g, 14, seed=seed), g)
            total += float(np.sum(np.abs(H.values) ** 2))
            count += H.values.size
        assert count >= 10_000
        mean = total / count
        assert 0.95 <= mean <= 1.05, f"mean |H|^2 = {mean}"

    def test_zero_symbols_rejected(self):
        g = build_grid(n_prb=2)
        prof = preset_profile("short")
        with pytest.raises(ValueError):
            gen_channel(prof, g, 0, seed=1)

    def test_doppler_decorrelates_symbols(self):
        g = build_grid(n_prb=2, n_ant=1)
        prof = make_profile([0.0], [1.0], doppler_hz=500.0)
        r = gen_channel(prof, g, 14, seed=3)
        assert np.max(np.abs(r.tap_coeffs[0, 0, 1:] - r.tap_coeffs[0, 0, 0])) > 1e-3

    def test_doppler_autocorrelation_matches_bessel(self):
        # Fading autocorrelation at lag t should follow J0(2 pi fd t);
        # oracle J0 via quadrature: (1/pi) integral_0^pi cos(x sin u) du.
        def j0(x):
            u = np.linspace(0.0, np.pi, 2001)
            return np.trapezoid(np.cos(x * np.sin(u)), u) / np.pi

        g = build_grid(n_prb=1, n_ant=1)
        fd = 400.0
        prof = make_profile([0.0], [1.0], doppler_hz=fd)
        n_sym = 14
        acorr = np.zeros(n_sym, dtype=complex)
        n_trials = 4000
        for seed in range(n_trials):
            c = gen_channel(prof, g, n_sym, seed=seed).tap_coeffs[0, 0]
            acorr += c * np.conj(c[0])
        acorr /= n_trials
        lags = np.arange(n_sym) * g.symbol_duration_s
        expected = np.array([j0(2 * np.pi * fd * t) for t in lags])
        assert np.max(np.abs(acorr.real - expected)) < 0.05
        assert np.max(np.abs(acorr.imag)) < 0.05


class TestCfrAt:
    def test_single_tap_at_zero_delay_is_flat(self):
        g = build_grid(n_prb=4, n_ant=1, dmrs_symbols=(0,))
        prof = make_profile([0.0], [1.0])
        r = gen_channel(prof, g, 1, seed=2)
        H = cfr_at(r, g, (0,))
        c = r.tap_coeffs[0, 0, 0]
        assert np.allclose(H.values[0, :, 0], c, atol=1e-14)

    def test_single_delayed_tap_phase_slope(self):
        # A tap at delay tau makes a phase ramp of -2 pi spacing tau per pilot.
        g = build_grid(n_prb=4, n_ant=1, dmrs_symbols=(0,), scs_hz=30e3, comb=2)
        prof = make_profile([1e-6], [1.0])
        r = gen_channel(prof, g, 1, seed=2)
        H = cfr_at(r, g, (0,)).values[0, :, 0]
        steps = np.angle(H[1:] * np.conj(H[:-1]))
        expected = -2 * np.pi * 60e3 * 1e-6
        assert np.allclose(steps, expected, atol=1e-10)

    def test_two_path_spectral_nulls(self):
        # Equal-power taps at 0 and 1 us: |H(f)| ~ |1 + exp(-j 2 pi f us)|,
        # nulls at 0.5 MHz + k * 1 MHz. scs 25 kHz comb 2 puts pilots every
        # 50 kHz, so nulls land on pilots 10, 30, 50, ... (spacing 1 MHz).
        g = build_grid(n_prb=10, n_ant=1, dmrs_symbols=(0,), scs_hz=25e3, comb=2)
        prof = make_profile([0.0, 1e-6], [0.5, 0.5], doppler_hz=0.0)
        r = gen_channel(prof, g, 1, seed=4)
        # Force equal known coefficients so nulls are exact.
        coeffs = np.ones_like(r.tap_coeffs) * np.sqrt(0.5)
        from cebench.channel import ChannelRealization

        r = ChannelRealization(tap_coeffs=coeffs, profile=prof, seed=4)
        H = cfr_at(r, g, (0,)).values[0, :, 0]
        null_pilots = np.arange(10, g.n_pilots, 20)
        assert np.all(np.abs(H[null_pilots]) < 1e-10)
        mags = np.abs(H)
        interior = null_pilots[(null_pilots > 0) & (null_pilots < g.n_pilots - 1)]
        for k in interior:
            assert mags[k] < mags[k - 1] and mags[k] < mags[k + 1]

    def test_linear_in_tap_coefficients(self):
        from cebench.channel import ChannelRealization

        g = build_grid(n_prb=3, n_ant=2, dmrs_symbols=(2, 7))
        prof = preset_profile("long")
        rng = np.random.default_rng(0)
        c1 = rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2))
        c2 = rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2))
        a = 2.5 - 0.5j
        h = lambda c: cfr_at(
            ChannelRealization(tap_coeffs=c, profile=prof, seed=0), g, (0, 1)
        ).values
        lhs = h(a * c1 + c2)
        rhs = a * h(c1) + h(c2)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_symbol_index_out_of_range(self):
        g = build_grid(n_prb=2, dmrs_symbols=(2, 7, 11))
        prof = preset_profile("short")
        r = gen_channel(prof, g, 3, seed=0)
        with pytest.raises(ValueError, match="out of range"):
            cfr_at(r, g, (0, 1, 5))

    def test_determinism_bit_identical(self):
        g = build_grid(n_prb=4, n_ant=2)
        prof = preset_profile("medium", doppler_hz=70.0)
        a = cfr_at(gen_channel(prof, g, 14, seed=123), g)
        b = cfr_at(gen_channel(prof, g, 14, seed=123), g)
        assert np.array_equal(a.values, b.values)

    def test_shape_invariant(self):
        g = build_grid(n_prb=5, n_ant=3, dmrs_symbols=(1, 6))
        prof = preset_profile("short")
        H = cfr_at(gen_channel(prof, g, 14, seed=9), g)
        assert H.shape == (2, 30, 3)
        with pytest.raises(ValueError, match="shape"):
            CfrTensor(values=np.zeros((1, 30, 3), dtype=complex), grid=g)
