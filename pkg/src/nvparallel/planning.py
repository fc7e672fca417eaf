"""Throughput and scalability estimates for serial versus parallel readout.

Times are in seconds, rates in Hz, distances in µm and RF frequencies in MHz.
"""
from dataclasses import dataclass, replace
import io
import math

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class ModalityParams:
    """Single-shot SNR and time budget of one measurement technique.

    Serial terms are paid once per NV, parallel terms once per shot.
    """

    single_shot_snr: float
    t_overhead_serial_s: float = 0.0
    t_interrogate_serial_s: float = 0.0
    t_overhead_parallel_s: float = 0.0
    t_interrogate_parallel_s: float = 0.0
    prefactor_independent: float = 1.0
    prefactor_correlated: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.single_shot_snr <= 1.0:
            raise InvalidArgumentError(f"single_shot_snr must be in (0, 1], got {self.single_shot_snr}")
        for name in ("t_overhead_serial_s", "t_interrogate_serial_s", "t_overhead_parallel_s", "t_interrogate_parallel_s"):
            if not getattr(self, name) >= 0.0:
                raise InvalidArgumentError(f"{name} must be >= 0")

    @property
    def per_nv_s(self):
        return self.t_overhead_serial_s + self.t_interrogate_serial_s

    @property
    def per_shot_s(self):
        return self.t_overhead_parallel_s + self.t_interrogate_parallel_s


# name -> (k, t_o,s, t_o,p, which interrogation time is variable)
_PRESETS = {
    "conventional-serial": (0.03, 0.3e-6, 0.0, "serial"),
    "conventional-parallel": (0.02, 0.0, 0.3e-6, "parallel"),
    "scc-serial": (0.25, 5e-3, 0.0, "serial"),
    "scc-parallel": (0.25, 21e-6, 62e-3, "parallel"),
    "scc-parallel-projected": (0.25, 21e-6, 17e-3, "parallel"),
}
PRESET_NAMES = tuple(_PRESETS)


def modality_preset(name, t_interrogate_s, prefactor_independent=1.0, prefactor_correlated=1.0):
    """Built-in technique with its interrogation time filled in."""
    try:
        k, tos, top, variable = _PRESETS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown modality {name!r}; choose from {PRESET_NAMES}") from None
    tis, tip = (t_interrogate_s, 0.0) if variable == "serial" else (0.0, t_interrogate_s)
    return ModalityParams(k, tos, tis, top, tip, prefactor_independent, prefactor_correlated)


def _check_n(n, minimum):
    n = np.asarray(n)
    if np.any(n < minimum):
        raise InvalidArgumentError(f"n must be >= {minimum}")
    return n


def time_to_unit_snr_independent(params, n):
    """``A k^-2 [n (t_os + t_is) + t_op + t_ip]`` for ``n`` independent NVs."""
    n = _check_n(n, 1)
    k = params.single_shot_snr
    return params.prefactor_independent / k**2 * (n * params.per_nv_s + params.per_shot_s)


def time_to_unit_snr_correlated(params, n, mode):
    """Time to resolve all pairwise correlations among ``n`` NVs.

    ``serial`` measures each of the ``n(n-1)/2`` pairs on its own; ``parallel``
    reads every NV in every shot.
    """
    n = _check_n(n, 2)
    pref = params.prefactor_correlated / params.single_shot_snr**4
    if mode == "serial":
        return pref * n * (n - 1) / 2 * params.per_nv_s
    if mode == "parallel":
        return pref * (n * params.per_nv_s + params.per_shot_s)
    raise InvalidArgumentError("mode must be 'serial' or 'parallel'")


def speedup(slow, fast, n):
    return time_to_unit_snr_independent(slow, n) / time_to_unit_snr_independent(fast, n)


def crossover_n(slow, fast, n_max=100_000):
    """Smallest ``n`` at which ``fast`` needs less time than ``slow``, or None."""
    n = np.arange(1, n_max + 1)
    wins = np.nonzero(time_to_unit_snr_independent(fast, n) < time_to_unit_snr_independent(slow, n))[0]
    return int(n[wins[0]]) if wins.size else None


# ---------------------------------------------------------------------------
# scalability

@dataclass(frozen=True)
class ScalabilityParams:
    sq_relaxation_rate_hz: float
    aod_access_time_s: float = 10e-6
    dispersion_um_per_mhz: float = 2.76
    rf_bandwidth_mhz: float = 45.0
    nv_density_per_um2: float = 0.59
    beam_fraction: float = 1.0

    def __post_init__(self):
        for name in ("sq_relaxation_rate_hz", "aod_access_time_s", "dispersion_um_per_mhz", "rf_bandwidth_mhz",
                     "nv_density_per_um2", "beam_fraction"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if self.beam_fraction > 1:
            raise InvalidArgumentError("beam_fraction must be <= 1")

    @classmethod
    def from_contrast_time(cls, contrast_time_s, **kw):
        """Build from the 1/e spin-contrast time ``1 / (3 Omega)``."""
        return cls(1.0 / (3.0 * contrast_time_s), **kw)


AOD_PRESETS = {
    "520nm": {"dispersion_um_per_mhz": 2.76, "rf_bandwidth_mhz": 45.0},
    "638nm": {"dispersion_um_per_mhz": 3.33, "rf_bandwidth_mhz": 40.0},
}

# 1/e spin-contrast times at room temperature
CONTRAST_TIMES_S = {"bulk": 5e-3, "shallow": 3e-3, "nanodiamond": 1e-3}
CRYOGENIC_CONTRAST_TIME_S = 10.0

_EPS = 1e-9


def _floor(x):
    # guard against 499.99999999 from rounding in the products
    return int(math.floor(x * (1 + _EPS)))


def n_relaxation_curve(sq_relaxation_rate_hz, aod_access_time_s, beam_fraction):
    """Real-valued relaxation bound; access time scales with the beam size."""
    s = np.asarray(beam_fraction, dtype=float)
    return 1.0 / (3.0 * sq_relaxation_rate_hz * aod_access_time_s * s)


def n_bandwidth_curve(nv_density_per_um2, dispersion_um_per_mhz, rf_bandwidth_mhz, beam_fraction):
    """Real-valued bandwidth bound over a square field of view."""
    s = np.asarray(beam_fraction, dtype=float)
    return nv_density_per_um2 * (s * dispersion_um_per_mhz * rf_bandwidth_mhz) ** 2


def max_n_relaxation(sq_relaxation_rate_hz, aod_access_time_s, beam_fraction=1.0):
    """NVs convertable in series before the spin contrast drops to 1/e."""
    if not (sq_relaxation_rate_hz > 0 and aod_access_time_s > 0 and beam_fraction > 0):
        raise InvalidArgumentError("inputs must be positive")
    return _floor(float(n_relaxation_curve(sq_relaxation_rate_hz, aod_access_time_s, beam_fraction)))


def max_n_bandwidth(nv_density_per_um2, dispersion_um_per_mhz, rf_bandwidth_mhz, beam_fraction=1.0):
    """NVs inside the field of view spanned by the AOD bandwidth."""
    if not (nv_density_per_um2 > 0 and dispersion_um_per_mhz > 0 and rf_bandwidth_mhz > 0 and beam_fraction > 0):
        raise InvalidArgumentError("inputs must be positive")
    return _floor(float(n_bandwidth_curve(nv_density_per_um2, dispersion_um_per_mhz, rf_bandwidth_mhz, beam_fraction)))


def binding_bandwidth_bound(nv_density_per_um2, aods=("520nm", "638nm"), beam_fraction=1.0):
    """Smallest bandwidth bound over the configured AODs, with its name."""
    bounds = {name: max_n_bandwidth(nv_density_per_um2, beam_fraction=beam_fraction, **AOD_PRESETS[name]) for name in aods}
    name = min(bounds, key=bounds.get)
    return name, bounds[name]


@dataclass(frozen=True)
class BeamOptimum:
    beam_fraction: float
    n_max: float

    @property
    def n_max_int(self):
        return _floor(self.n_max)


def optimal_beam_fraction(scal):
    """Beam size where the relaxation and bandwidth bounds meet.

    Returns
    -------
    BeamOptimum
        ``s* = (n_relax(1) / n_bw(1))^(1/3)`` and ``n* = n_relax(1) / s*``.
        When ``s* > 1`` the beam fills the aperture and ``n*`` is the smaller
        of the two bounds at ``s = 1``.
    """
    r = float(n_relaxation_curve(scal.sq_relaxation_rate_hz, scal.aod_access_time_s, 1.0))
    w = float(n_bandwidth_curve(scal.nv_density_per_um2, scal.dispersion_um_per_mhz, scal.rf_bandwidth_mhz, 1.0))
    s = (r / w) ** (1.0 / 3.0)
    if s >= 1.0:
        return BeamOptimum(1.0, min(r, w))
    return BeamOptimum(s, r / s)


def scalability_report(density=0.59, aod="520nm"):
    """Optimum per relaxation context plus the cryogenic limit."""
    out = {}
    contexts = dict(CONTRAST_TIMES_S, cryogenic=CRYOGENIC_CONTRAST_TIME_S)
    for name, tc in contexts.items():
        scal = ScalabilityParams.from_contrast_time(tc, nv_density_per_um2=density, **AOD_PRESETS[aod])
        opt = optimal_beam_fraction(scal)
        out[name] = {
            "contrast_time_s": tc,
            "n_relaxation_full_beam": max_n_relaxation(scal.sq_relaxation_rate_hz, scal.aod_access_time_s),
            "beam_fraction": opt.beam_fraction,
            "n_max": opt.n_max,
        }
    return out


# ---------------------------------------------------------------------------
# tables

def _table(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    return buf.getvalue()


def independent_curves(n_values, t_interrogate_s=100e-6, names=PRESET_NAMES):
    """Time to unit SNR versus n for every technique, as CSV text."""
    params = [modality_preset(m, t_interrogate_s) for m in names]
    rows = [[int(n)] + [float(time_to_unit_snr_independent(p, n)) for p in params] for n in n_values]
    return _table(["n"] + list(names), rows)


def interrogation_curves(t_values, n=100, names=PRESET_NAMES):
    rows = [[float(t)] + [float(time_to_unit_snr_independent(modality_preset(m, t), n)) for m in names]
            for t in t_values]
    return _table(["t_interrogate_s"] + list(names), rows)


def correlated_curves(n_values, t_interrogate_s=100e-6):
    ser = modality_preset("scc-serial", t_interrogate_s)
    par = modality_preset("scc-parallel", t_interrogate_s)
    rows = [[int(n), float(time_to_unit_snr_correlated(ser, n, "serial")),
             float(time_to_unit_snr_correlated(par, n, "parallel"))] for n in n_values]
    return _table(["n", "scc-serial", "scc-parallel"], rows)


def beam_size_curves(s_values, density=0.59, aod="520nm"):
    cols = ["beam_fraction", "bandwidth"] + [f"relaxation_{c}" for c in CONTRAST_TIMES_S]
    rows = []
    for s in s_values:
        row = [float(s), float(n_bandwidth_curve(density, beam_fraction=s, **AOD_PRESETS[aod]))]
        row += [float(n_relaxation_curve(1.0 / (3.0 * tc), 10e-6, s)) for tc in CONTRAST_TIMES_S.values()]
        rows.append(row)
    return _table(cols, rows)
