import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdrelay.ofdm import (OfdmConfig, RootRaisedCosine, SquaredPulse, bpsk_demap, bpsk_map,
                          ideal_ber_bpsk, matched_sample, nominal_offset, ofdm_demodulate,
                          ofdm_modulate, pulse_shape, rrc_taps)
from sdrelay.relay import BasebandSignal

SQ = OfdmConfig(pulse=SquaredPulse())
RRC = OfdmConfig(pulse=RootRaisedCosine())
# one fine sample per chip: demodulation reads the chips directly
RAW = OfdmConfig(pulse=SquaredPulse(1.0), M=1)

# worst residual ISI of the span-8, rolloff-0.2 pulse after matched filtering
RRC_SPAN8_ISI = 6.435e-3


def rc_isi(span, rolloff=0.2, T=3.0, step=1 / 16):
    g = rrc_taps(T, rolloff, span, step)
    rc = np.convolve(g, g) * step
    c = rc.size // 2
    S = int(round(T / step))
    return rc[c], max(abs(rc[c + k * S]) for k in range(1, 2 * span) if c + k * S < rc.size)


def test_bpsk_mapping():
    np.testing.assert_array_equal(bpsk_map([0, 1, 0]), [1.0, -1.0, 1.0])
    np.testing.assert_array_equal(bpsk_demap([0.3, -0.1, 1j]), [0, 1, 0])


def test_block_length():
    chips = ofdm_modulate(np.zeros(64, int), SQ)
    assert len(chips) == 80
    assert chips.period == 2.0


def test_all_zero_bits_give_impulse():
    x = ofdm_modulate(np.zeros(64, int), SQ).samples
    body = x[0, 16:]
    assert body[0] == pytest.approx(8.0)
    np.testing.assert_allclose(body[1:], 0.0, atol=1e-13)
    np.testing.assert_allclose(x[1], 0.0, atol=1e-13)
    np.testing.assert_allclose(x[0, :16], body[-16:], atol=0)


def test_unitary_energy(rng):
    bits = rng.integers(0, 2, 640)
    x = ofdm_modulate(bits, SQ).samples
    body = x.reshape(2, 10, 80)[:, :, 16:]
    assert np.sum(body ** 2) == pytest.approx(640.0)


def test_bits_validation():
    with pytest.raises(ValueError):
        ofdm_modulate(np.zeros(63, int), SQ)
    with pytest.raises(ValueError):
        ofdm_modulate(np.full(64, 2), SQ)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_round_trip_without_pulse(n_blocks, seed):
    bits = np.random.default_rng(seed).integers(0, 2, 64 * n_blocks)
    w = ofdm_modulate(bits, RAW).samples
    np.testing.assert_array_equal(ofdm_demodulate(w, RAW, 0), bits)


def test_squared_hold():
    one = BasebandSignal(np.array([[1.0], [0.0]]), 2.0)
    y = pulse_shape(one, SQ)
    assert len(y) == 32
    np.testing.assert_array_equal(y.samples[0], np.ones(32))
    assert y.period == pytest.approx(1 / 16)


def test_rrc_taps_unit_energy():
    g = rrc_taps(3.0, 0.2, 8, 1 / 16)
    assert g.size == 2 * 8 * 48 + 1
    assert np.sum(g ** 2) / 16 == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(g, g[::-1], atol=1e-15)


def test_rrc_isolated_chip_energy():
    one = BasebandSignal(np.array([[1.0], [0.0]]), 3.0)
    y = pulse_shape(one, RRC)
    assert y.energy == pytest.approx(1.0, rel=1e-3)


def test_rrc_truncation_isi():
    peak, isi = rc_isi(8)
    assert peak == pytest.approx(1.0, abs=1e-12)
    assert isi == pytest.approx(RRC_SPAN8_ISI, rel=1e-3)
    # the untruncated pulse is ISI free; longer spans approach it
    isis = [rc_isi(s)[1] for s in (8, 16, 64)]
    assert isis[0] > isis[1] > isis[2]
    assert isis[2] < 1e-4


def test_rrc_singular_points_finite():
    # 1/(4*rolloff) lands on the grid for rolloff 0.25 and T/step = 16
    g = rrc_taps(1.0, 0.25, 4, 1 / 16)
    assert np.all(np.isfinite(g))
    mid = g.size // 2
    assert g[mid + 4] == pytest.approx((g[mid + 3] + g[mid + 5]) / 2, rel=0.05)


def test_nominal_offset():
    assert nominal_offset(SQ) == 0
    assert nominal_offset(RRC) == 8 * 48


@pytest.mark.parametrize("cfg", [SQ, RRC], ids=["squared", "rrc"])
def test_noiseless_loopback(cfg, rng):
    bits = rng.integers(0, 2, 64 * 20)
    w = pulse_shape(ofdm_modulate(bits, cfg), cfg)
    np.testing.assert_array_equal(ofdm_demodulate(w, cfg, nominal_offset(cfg)), bits)


@pytest.mark.parametrize("cfg", [SQ, RRC], ids=["squared", "rrc"])
def test_tiny_noise_loopback(cfg, rng):
    bits = rng.integers(0, 2, 64 * 20)
    w = pulse_shape(ofdm_modulate(bits, cfg), cfg).samples
    w = w + 1e-6 * rng.standard_normal(w.shape)
    np.testing.assert_array_equal(ofdm_demodulate(w, cfg, nominal_offset(cfg)), bits)


@pytest.mark.parametrize("cfg", [SQ, RRC], ids=["squared", "rrc"])
def test_window_advance_absorbed_by_cp(cfg, rng):
    bits = rng.integers(0, 2, 64 * 10)
    w = pulse_shape(ofdm_modulate(bits, cfg), cfg)
    o = nominal_offset(cfg)
    for adv in range(cfg.cp_len + 1):
        np.testing.assert_array_equal(ofdm_demodulate(w, cfg, o, advance=adv), bits)
    with pytest.raises(ValueError):
        ofdm_demodulate(w, cfg, o, advance=cfg.cp_len + 1)


def test_matched_sample_recovers_chips(rng):
    chips = ofdm_modulate(rng.integers(0, 2, 64 * 4), RRC)
    w = pulse_shape(chips, RRC)
    est = matched_sample(w, RRC, nominal_offset(RRC), len(chips))
    # chip error is at most max|chip| times the summed residual ISI taps
    g = rrc_taps(3.0, 0.2, 8, 1 / 16)
    rc = np.convolve(g, g) / 16
    c = rc.size // 2
    taps = np.abs(rc[c % 48::48])
    bound = np.abs(chips.samples).max() * (taps.sum() - abs(rc[c]) + abs(rc[c] - 1))
    err = np.abs(est - chips.samples).max()
    assert err <= bound
    assert err > 0.1 * bound  # the bound is not vacuous


def test_demodulate_short_waveform():
    w = pulse_shape(ofdm_modulate(np.zeros(64, int), SQ), SQ)
    with pytest.raises(ValueError):
        ofdm_demodulate(w, SQ, 32)  # one chip late: block no longer fits
    with pytest.raises(ValueError):
        ofdm_demodulate(w, SQ, -1)


def test_config_validation():
    with pytest.raises(ValueError):
        OfdmConfig(cp_len=64)
    with pytest.raises(ValueError):
        OfdmConfig(pulse=RootRaisedCosine(rolloff=1.0))
    with pytest.raises(ValueError):
        OfdmConfig(pulse=SquaredPulse(1.5))
    with pytest.raises(ValueError):
        OfdmConfig(M=0)


def test_ideal_ber_values():
    assert ideal_ber_bpsk(1.0) == pytest.approx(0.0786, abs=1e-4)
    assert ideal_ber_bpsk(10 ** 0.2) == pytest.approx(0.0375, abs=1e-4)
    assert ideal_ber_bpsk(np.inf) == 0.0
    np.testing.assert_allclose(ideal_ber_bpsk([0.0, 1.0]), [0.5, ideal_ber_bpsk(1.0)])
    with pytest.raises(ValueError):
        ideal_ber_bpsk(-1.0)


def test_ideal_ber_monte_carlo():
    rng = np.random.default_rng(99)
    n = 2_000_000
    mc = np.count_nonzero(1.0 + np.sqrt(0.5) * rng.standard_normal(n) < 0) / n
    p = ideal_ber_bpsk(1.0)
    assert abs(mc - p) < 4 * np.sqrt(p * (1 - p) / n)
