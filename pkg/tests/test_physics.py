import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvparallel.errors import InsufficientSamplesError, InvalidArgumentError, SingularModelError
from nvparallel.physics import (
    CrosstalkModel,
    EsrLineModel,
    MicrowaveDrive,
    SpinEchoModel,
    ac_zeeman_shift,
    esr_signal,
    fit_crosstalk_curve,
    flip_probability,
    gaussian_common_phase,
    ideal_correlation_mc,
    phase_per_pi_pulse,
    pi_pulse_duration,
    qpn_correlation_gaussian,
    rabi_contrast,
    scc_crosstalk_snr,
    spin_echo_signal,
    spin_repolarization_prob,
    voigt_peak_normalized,
)

from oracles import voigt_by_convolution


def test_rabi_contrast_at_45_mhz():
    # "on the order of 3%" for an 8 MHz drive detuned by 45 MHz
    c = rabi_contrast(MicrowaveDrive(2.813e9, 2.858e9, 8e6))
    assert c == pytest.approx(64 / (45**2 + 64), rel=1e-12)
    assert c == pytest.approx(0.0306, abs=1e-4)


def test_phase_per_pi_pulse():
    # around 70 mrad per pi pulse on the spectator orientation
    phi = phase_per_pi_pulse(MicrowaveDrive(2.858e9, 2.813e9, 8e6))
    assert phi == pytest.approx(0.070, abs=0.002)


@given(st.floats(2.5e9, 3.2e9), st.floats(1e6, 200e6), st.floats(1e6, 20e6))
def test_ac_zeeman_partial_fractions(w0, delta, rabi):
    w1 = w0 + delta
    d = MicrowaveDrive(w0, w1, rabi)
    expected = 0.25 * rabi**2 * (0.5 / (w0 - w1) + 0.5 / (w0 + w1))
    assert ac_zeeman_shift(d) == pytest.approx(expected, rel=1e-9)
    # pushed away from the drive tone
    assert ac_zeeman_shift(d) < 0
    assert ac_zeeman_shift(MicrowaveDrive(w0, w0 - delta, rabi)) > 0


def test_ac_zeeman_scaling_and_singularity():
    d1 = MicrowaveDrive(2.858e9, 2.813e9, 8e6)
    d2 = MicrowaveDrive(2.858e9, 2.813e9, 16e6)
    assert ac_zeeman_shift(d2) == pytest.approx(4 * ac_zeeman_shift(d1))
    assert ac_zeeman_shift(MicrowaveDrive(2.858e9, 2.813e9, 8e6, delta_ms=2)) == pytest.approx(2 * ac_zeeman_shift(d1))
    with pytest.raises(SingularModelError):
        ac_zeeman_shift(MicrowaveDrive(2.858e9, 2.858e9, 8e6))


def test_flip_probability_limits():
    on = MicrowaveDrive(2.87e9, 2.87e9, 8e6)
    assert flip_probability(on, math.pi) == pytest.approx(1.0)
    assert flip_probability(on, math.pi / 2) == pytest.approx(0.5)
    assert flip_probability(on, 0.0) == 0.0
    off = MicrowaveDrive(2.813e9, 2.858e9, 8e6)
    assert 0 <= flip_probability(off) <= rabi_contrast(off)
    assert pi_pulse_duration(8e6) == pytest.approx(62.5e-9)


def test_invalid_drive():
    with pytest.raises(InvalidArgumentError):
        MicrowaveDrive(2.87e9, 2.87e9, 0.0)
    with pytest.raises(InvalidArgumentError):
        MicrowaveDrive(2.87e9, 2.87e9, 8e6, delta_ms=3)


@pytest.mark.parametrize("g,l", [(1.0, 0.5), (2.0, 2.0), (0.5, 3.0)])
def test_voigt_matches_numerical_convolution(g, l):
    x = np.array([0.0, 0.3, 1.0, 2.5, 6.0])
    np.testing.assert_allclose(voigt_peak_normalized(x, g, l), voigt_by_convolution(x, g, l), rtol=1e-6, atol=1e-9)


def test_voigt_gaussian_limit_and_fwhm():
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(voigt_peak_normalized(x, 2.0, 0.0), np.exp(-4 * math.log(2) * x**2 / 4.0), atol=1e-12)
    assert voigt_peak_normalized(1.0, 2.0, 0.0) == pytest.approx(0.5)


def test_esr_signal_two_lines():
    m = EsrLineModel(2.80e9, 2.94e9, 2e6, 1e6, contrast=0.2)
    # the far line's Lorentzian tail adds a few ppm
    assert esr_signal(2.80e9, m) == pytest.approx(0.2, rel=1e-4)
    assert esr_signal(2.87e9, m) < 1e-3
    with pytest.raises(InvalidArgumentError):
        EsrLineModel(2.8e9, 2.9e9, 0.0, 1e6)


def test_spin_echo_shape():
    m = SpinEchoModel(0.5, 10e-6, 75e-6, (0.4, 0.3))
    assert spin_echo_signal(0.0, m) == pytest.approx(0.0, abs=1e-12)
    assert spin_echo_signal(40e-6, m) == pytest.approx(0.5, abs=1e-5)
    # revival brings the population back toward m_s = 0
    assert spin_echo_signal(75e-6, m) == pytest.approx(0.1, abs=1e-6)
    assert spin_echo_signal(150e-6, m) == pytest.approx(0.2, abs=1e-6)
    with pytest.raises(InvalidArgumentError):
        spin_echo_signal(-1e-6, m)


def test_spin_echo_oscillations_can_leave_unit_interval():
    # both tones are in phase at the first revival, so the dip overshoots zero
    m = SpinEchoModel(0.5, 10e-6, 75e-6, (0.4, 0.3), (2 * math.pi * 2e5, 2 * math.pi * 4e5))
    assert spin_echo_signal(75e-6, m) == pytest.approx(0.5 - 0.8, abs=1e-6)


@pytest.mark.parametrize("v", [0.1, 0.5, 1.0, 3.0])
def test_qpn_against_monte_carlo(v):
    r, se = ideal_correlation_mc(gaussian_common_phase(v), 400_000, np.random.default_rng(int(v * 10)))
    assert abs(r - qpn_correlation_gaussian(v)) < 4 * se


def test_qpn_limits():
    assert qpn_correlation_gaussian(0.0) == 0.0
    assert qpn_correlation_gaussian(1e-12) == pytest.approx(1e-12, rel=1e-6)
    assert qpn_correlation_gaussian(50.0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(InvalidArgumentError):
        qpn_correlation_gaussian(-1.0)
    with pytest.raises(InsufficientSamplesError):
        ideal_correlation_mc(gaussian_common_phase(1.0), 10, np.random.default_rng(0))


@given(st.floats(0, 20), st.floats(0, 20))
def test_qpn_monotone(a, b):
    lo, hi = sorted((a, b))
    assert qpn_correlation_gaussian(lo) <= qpn_correlation_gaussian(hi)


def test_crosstalk_curve_and_repolarization():
    m = CrosstalkModel()
    assert scc_crosstalk_snr(0.0, m) == pytest.approx(m.floor_snr - m.dip_depth)
    assert scc_crosstalk_snr(10.0, m) == pytest.approx(m.floor_snr)
    # 1/e^2 radius
    assert spin_repolarization_prob(m.waist_um, m) == pytest.approx(m.repolarization_prob * math.exp(-2))
    with pytest.raises(InvalidArgumentError):
        scc_crosstalk_snr(-1.0, m)
    with pytest.raises(InvalidArgumentError):
        CrosstalkModel(dip_depth=2.0)


def test_fit_crosstalk_recovers_parameters():
    truth = CrosstalkModel(waist_um=1.2, floor_snr=0.9, dip_depth=0.4)
    rng = np.random.default_rng(5)
    d = np.linspace(0, 4, 41)
    y = scc_crosstalk_snr(d, truth) + rng.normal(0, 0.01, d.size)
    model, err = fit_crosstalk_curve(d, y, sigma=np.full(d.size, 0.01))
    assert abs(model.waist_um - 1.2) < 4 * err["waist_um"]
    assert abs(model.dip_depth - 0.4) < 4 * err["dip_depth"]
    assert abs(model.floor_snr - 0.9) < 4 * err["floor_snr"]


def test_qpn_z_scores_are_standard_normal():
    # the per-run z used by the acceptance criterion, over many replicates
    rng = np.random.default_rng(77)
    exact = qpn_correlation_gaussian(1.0)
    z = []
    for _ in range(300):
        r, se = ideal_correlation_mc(gaussian_common_phase(1.0), 20_000, rng)
        z.append((r - exact) / se)
    z = np.array(z)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert 0.85 < z.std(ddof=1) < 1.15
