"""Closed-form response models used by the simulator and by fits.

All frequencies are in Hz (cycles per second), never rad/s, except the
nuclear-spin oscillation frequencies of the spin echo model which enter as
``cos(omega t)`` and are therefore angular.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import optimize, special

from .errors import InsufficientSamplesError, InvalidArgumentError, SingularModelError


@dataclass(frozen=True)
class MicrowaveDrive:
    resonance_hz: float
    drive_hz: float
    rabi_hz: float
    delta_ms: int = 1

    def __post_init__(self):
        for name in ("resonance_hz", "drive_hz", "rabi_hz"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"{name} must be a positive frequency, got {v}")
        if self.delta_ms not in (1, 2):
            raise InvalidArgumentError("delta_ms must be 1 or 2")

    @property
    def detuning_hz(self):
        return self.drive_hz - self.resonance_hz


def rabi_contrast(drive):
    """Amplitude of off-resonant Rabi oscillations, ``O^2 / (d^2 + O^2)``."""
    return drive.rabi_hz**2 / (drive.detuning_hz**2 + drive.rabi_hz**2)


def flip_probability(drive, angle=math.pi):
    """Population transferred by a square pulse of nominal on-resonance ``angle``.

    The pulse lasts ``angle / (2 pi rabi_hz)``; off resonance the population
    oscillates at the generalized Rabi frequency with amplitude
    :func:`rabi_contrast`.
    """
    ratio = math.sqrt(1.0 + (drive.detuning_hz / drive.rabi_hz) ** 2)
    return rabi_contrast(drive) * math.sin(0.5 * angle * ratio) ** 2


def ac_zeeman_shift(drive):
    """Frequency shift (Hz) of a transition at ``resonance_hz`` from an off-resonant tone."""
    w0, w1 = drive.resonance_hz, drive.drive_hz
    if w0 == w1:
        raise SingularModelError("AC Zeeman shift diverges on resonance")
    return 0.25 * drive.delta_ms * drive.rabi_hz**2 * w0 / (w0**2 - w1**2)


def pi_pulse_duration(rabi_hz):
    return 1.0 / (2.0 * rabi_hz)


def phase_per_pi_pulse(drive):
    """Phase (rad) accumulated by a spectator transition during one pi pulse."""
    return 2.0 * math.pi * ac_zeeman_shift(drive) * pi_pulse_duration(drive.rabi_hz)


# ---------------------------------------------------------------------------
# ESR line shape

@dataclass(frozen=True)
class EsrLineModel:
    """Two identical Voigt lines, each scaled to 1 at its own center.

    Widths are full widths at half maximum of the Gaussian and Lorentzian
    components.
    """

    center_low_hz: float
    center_high_hz: float
    gaussian_width_hz: float
    lorentzian_width_hz: float
    contrast: float = 1.0

    def __post_init__(self):
        if not self.gaussian_width_hz > 0:
            raise InvalidArgumentError("gaussian_width_hz must be > 0")
        if not self.lorentzian_width_hz >= 0:
            raise InvalidArgumentError("lorentzian_width_hz must be >= 0")


_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def voigt_peak_normalized(x, gaussian_fwhm, lorentzian_fwhm):
    """Voigt profile with value 1 at ``x = 0``, via the Faddeeva function."""
    sigma = gaussian_fwhm * _FWHM_TO_SIGMA
    gamma = 0.5 * lorentzian_fwhm
    scale = sigma * math.sqrt(2.0)
    z = (np.asarray(x, dtype=float) + 1j * gamma) / scale
    return special.wofz(z).real / special.wofz(1j * gamma / scale).real


def esr_signal(freq_hz, model):
    c = model.contrast
    g, l = model.gaussian_width_hz, model.lorentzian_width_hz
    f = np.asarray(freq_hz, dtype=float)
    return c * (voigt_peak_normalized(f - model.center_low_hz, g, l) + voigt_peak_normalized(f - model.center_high_hz, g, l))


# ---------------------------------------------------------------------------
# spin echo

@dataclass(frozen=True)
class SpinEchoModel:
    baseline: float
    collapse_time_s: float
    revival_time_s: float
    revival_amps: tuple = (0.0, 0.0)
    osc_freqs_rad_per_s: tuple = ()

    def __post_init__(self):
        if not self.collapse_time_s > 0 or not self.revival_time_s > 0:
            raise InvalidArgumentError("collapse and revival times must be > 0")
        if len(self.revival_amps) != 2:
            raise InvalidArgumentError("exactly two revival amplitudes")
        if len(self.osc_freqs_rad_per_s) not in (0, 2):
            raise InvalidArgumentError("oscillation frequencies: none or two")


def spin_echo_signal(total_evolution_s, model):
    """Empirical echo population versus total evolution time ``t = 2 tau``.

    Not clamped: with oscillating revivals the signal may leave [0, 1].
    """
    t = np.asarray(total_evolution_s, dtype=float)
    if np.any(t < 0):
        raise InvalidArgumentError("evolution time must be >= 0")
    tc, tr = model.collapse_time_s, model.revival_time_s
    revivals = sum(a * np.exp(-(((t - tr * i) / tc) ** 2)) for i, a in enumerate(model.revival_amps, start=1))
    if model.osc_freqs_rad_per_s:
        revivals = revivals * sum(np.cos(w * t) for w in model.osc_freqs_rad_per_s)
    return model.baseline - model.baseline * np.exp(-((t / tc) ** 2)) - revivals


# ---------------------------------------------------------------------------
# correlations and quantum projection noise

def qpn_correlation_gaussian(phase_variance_rad2):
    """``<sin phi sin phi>`` for a shared Gaussian phase of the given variance."""
    v = np.asarray(phase_variance_rad2, dtype=float)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise InvalidArgumentError("phase variance must be finite and >= 0")
    return 0.5 * -np.expm1(-2.0 * v)


def ideal_correlation_mc(phase_sampler, n_samples, rng):
    """Monte Carlo estimate of ``<sin(phi1) sin(phi2)>``.

    ``phase_sampler(rng, n)`` must return two arrays of length ``n``.
    Returns ``(r, standard_error)``.
    """
    if n_samples < 100:
        raise InsufficientSamplesError("need at least 100 samples")
    phi1, phi2 = phase_sampler(rng, n_samples)
    prod = np.sin(phi1) * np.sin(phi2)
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(n_samples))


def gaussian_common_phase(variance):
    """Sampler for ``phi1 = phi2 ~ N(0, variance)``."""
    sd = math.sqrt(variance)

    def sampler(rng, n):
        phi = rng.normal(0.0, sd, n)
        return phi, phi

    return sampler


# ---------------------------------------------------------------------------
# SCC optical crosstalk

@dataclass(frozen=True)
class CrosstalkModel:
    """Gaussian dip in spin SNR versus displacement of a preceding SCC pulse.

    ``waist_um`` is the 1/e^2 radius.  ``repolarization_prob`` is the
    probability that a spectator NV at zero distance has its spin reset by one
    SCC pulse; it is not pinned by the data and is a free parameter.
    """

    waist_um: float = 1.4
    floor_snr: float = 1.0
    dip_depth: float = 0.5
    repolarization_prob: float = 0.5

    def __post_init__(self):
        if not self.waist_um > 0:
            raise InvalidArgumentError("waist_um must be > 0")
        if not 0.0 <= self.dip_depth <= self.floor_snr:
            raise InvalidArgumentError("need 0 <= dip_depth <= floor_snr")
        if not 0.0 <= self.repolarization_prob <= 1.0:
            raise InvalidArgumentError("repolarization_prob must be a probability")


def _gaussian_profile(distance_um, waist_um):
    d = np.asarray(distance_um, dtype=float)
    return np.exp(-2.0 * (d / waist_um) ** 2)


def scc_crosstalk_snr(displacement_um, model):
    d = np.asarray(displacement_um, dtype=float)
    if np.any(d < 0):
        raise InvalidArgumentError("displacement must be >= 0")
    return model.floor_snr - model.dip_depth * _gaussian_profile(d, model.waist_um)


def spin_repolarization_prob(distance_um, model):
    """Per-pulse probability that a spectator spin is reset to m_s=0."""
    return model.repolarization_prob * _gaussian_profile(distance_um, model.waist_um)


def fit_crosstalk_curve(displacement_um, snr, sigma=None, p0=None):
    """Least-squares fit of the Gaussian dip; returns ``(CrosstalkModel, stderr)``."""
    d = np.asarray(displacement_um, dtype=float)
    y = np.asarray(snr, dtype=float)
    if p0 is None:
        floor = float(np.median(y[d >= np.percentile(d, 75)]))
        p0 = (floor - float(y.min()), 1.0, floor)

    def f(x, depth, waist, floor):
        return floor - depth * np.exp(-2.0 * (x / waist) ** 2)

    popt, pcov = optimize.curve_fit(f, d, y, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
                                    bounds=([0.0, 1e-6, -np.inf], [np.inf, np.inf, np.inf]))
    depth, waist, floor = popt
    err = np.sqrt(np.diag(pcov))
    model = CrosstalkModel(waist_um=float(waist), floor_snr=float(floor), dip_depth=float(min(depth, floor)))
    return model, {"dip_depth": float(err[0]), "waist_um": float(err[1]), "floor_snr": float(err[2])}
