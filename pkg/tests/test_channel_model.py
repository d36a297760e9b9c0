"""Fading draws, impairment application, and noise calibration."""

import math

import numpy as np
import pytest

from pncsim import channel_model, ofdm_modem
from pncsim.channel_model import (
    LinkChannel,
    NoiseSpec,
    apply_access_link,
    bandlimited_shift,
    measured_snr,
    sample_fading,
)
from pncsim.ofdm_modem import FrameSpec, PilotMap, build_ue_frame, demodulate_ofdm, used_signed_bins

SPEC = FrameSpec()


class TestFading:
    def test_fixed(self):
        rng = np.random.default_rng(0)
        ch = sample_fading(rng, "fixed", h_fixed=1.0 + 0.0j)
        assert ch.h == 1.0 + 0.0j

    def test_rayleigh_unit_mean_square(self):
        rng = np.random.default_rng(1)
        h2 = np.array([abs(sample_fading(rng, "rayleigh_block").h) ** 2 for _ in range(100_000)])
        assert h2.mean() == pytest.approx(1.0, abs=0.02)

    def test_seed_determinism(self):
        a = [sample_fading(np.random.default_rng(5)).h for _ in range(1)]
        b = [sample_fading(np.random.default_rng(5)).h for _ in range(1)]
        assert a == b

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            sample_fading(np.random.default_rng(0), "nakagami")


class TestLinkChannel:
    def test_delay_bound(self):
        with pytest.raises(ValueError):
            LinkChannel(h=1.0, delay=16.0)

    def test_inter_ue_delay_bound(self):
        f = np.ones(100, dtype=complex)
        with pytest.raises(ValueError):
            apply_access_link(
                f, f, LinkChannel(h=1.0, delay=-8.5), LinkChannel(h=1.0, delay=8.0), None
            )


class TestAccessLink:
    def test_single_ue_passthrough(self):
        f1 = np.arange(10, dtype=complex)
        f2 = np.zeros(10, dtype=complex)
        y = apply_access_link(f1, f2, LinkChannel(h=1.0), LinkChannel(h=0.0), None)
        assert y[:10] == pytest.approx(f1)

    def test_samplewise_sum(self):
        rng = np.random.default_rng(2)
        f1 = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        f2 = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        y = apply_access_link(f1, f2, LinkChannel(h=1.0), LinkChannel(h=1.0), None)
        assert y[:20] == pytest.approx(f1 + f2)

    def test_noise_variance(self):
        n = 1_000_000
        z = np.zeros(n, dtype=complex)
        rng = np.random.default_rng(3)
        noise = NoiseSpec(10.0)
        y = apply_access_link(z, z, LinkChannel(h=0.0), LinkChannel(h=0.0), noise, rng)
        var_re = np.var(y.real)
        var_im = np.var(y.imag)
        assert var_re == pytest.approx(noise.n0 / 2, rel=0.01)
        assert var_im == pytest.approx(noise.n0 / 2, rel=0.01)

    def test_noise_whiteness(self):
        n = 1_000_000
        rng = np.random.default_rng(4)
        noise = NoiseSpec(0.0)
        z = np.zeros(n, dtype=complex)
        y = apply_access_link(z, z, LinkChannel(h=0.0), LinkChannel(h=0.0), noise, rng)
        y = y[: n]
        p = np.mean(np.abs(y) ** 2)
        for lag in (1, 2, 5, 16):
            r = np.abs(np.mean(y[:-lag] * np.conj(y[lag:]))) / p
            assert r < 0.01

    def test_noiseless_linearity(self):
        rng = np.random.default_rng(5)
        f1 = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        f2 = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        h1, h2 = 0.7 - 0.2j, -0.4 + 0.9j
        alpha = 1.8 + 0.6j
        y_ref = apply_access_link(f1, f2, LinkChannel(h=h1), LinkChannel(h=h2), None)
        y_scaled = apply_access_link(
            alpha * f1, f2, LinkChannel(h=h1 / alpha), LinkChannel(h=h2), None
        )
        assert y_scaled == pytest.approx(y_ref)

    def test_fractional_shift_inverts(self):
        rng = np.random.default_rng(6)
        x = np.zeros(256, dtype=complex)
        # band-limited content away from the buffer edges
        grid = np.zeros(64, dtype=complex)
        bins = used_signed_bins(SPEC)
        grid[bins % 64] = rng.standard_normal(48) + 1j * rng.standard_normal(48)
        x[96:160] = np.fft.ifft(grid, norm="ortho")
        shifted = bandlimited_shift(x, 0.37)
        back = bandlimited_shift(shifted, -0.37)
        assert np.max(np.abs(back - x)) < 1e-10


class TestMeasuredSnr:
    def test_identical_inputs(self):
        x = np.ones(10, dtype=complex)
        assert math.isinf(measured_snr(x, x))

    def test_zero_signal(self):
        with pytest.raises(ValueError):
            measured_snr(np.zeros(4, dtype=complex), np.ones(4, dtype=complex))

    @pytest.mark.parametrize("ebno,expected", [(10.0, 13.01), (0.0, 3.01)])
    def test_es_n0_conversion(self, ebno, expected):
        # unit-energy symbols plus calibrated noise measure Es/N0 = Eb/N0 + 3.01
        rng = np.random.default_rng(8)
        n = 1_000_000
        clean = np.exp(2j * np.pi * rng.random(n))
        noise = NoiseSpec(ebno)
        noisy = clean + noise.sigma_per_dim * (
            rng.standard_normal(n) + 1j * rng.standard_normal(n)
        )
        assert measured_snr(clean, noisy) == pytest.approx(expected, abs=0.1)
        assert noise.es_n0_db == pytest.approx(expected, abs=0.01)

    def test_grid_calibration_across_sweep(self):
        # per-subcarrier SNR on demodulated data symbols matches the target
        # Es/N0 within 0.2 dB for every sweep point
        pilots = PilotMap()
        cap = ofdm_modem.frame_capacity_bits(SPEC, pilots)
        # UE1's active carriers only: its data plus its own pilots (the
        # bins it leaves null for UE2 carry noise but no signal)
        active = np.concatenate(
            [ofdm_modem.data_signed_bins(SPEC, pilots), pilots.pilot_signed_bins(1)]
        )
        bins = active % SPEC.fft_len
        rng = np.random.default_rng(9)
        for ebno in (0.0, 10.0, 20.0):
            noise = NoiseSpec(ebno)
            clean_vals, noisy_vals = [], []
            for _ in range(60):
                f1 = build_ue_frame(rng.integers(0, 2, cap), 1, SPEC, pilots)
                f2 = build_ue_frame(np.zeros(cap, dtype=int), 2, SPEC, pilots)
                y = apply_access_link(
                    f1.samples, f2.samples, LinkChannel(h=1.0), LinkChannel(h=0.0),
                    noise, rng, pad_before=32, pad_after=24,
                )
                grid = demodulate_ofdm(y, 32, SPEC)
                clean_vals.append(f1.grid[:, bins].ravel())
                noisy_vals.append(grid[:, bins].ravel())
            got = measured_snr(np.concatenate(clean_vals), np.concatenate(noisy_vals))
            assert got == pytest.approx(noise.es_n0_db, abs=0.2)
