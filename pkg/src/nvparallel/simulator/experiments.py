"""Canonical NV layout, sequence builders and the correlation experiments."""
import math

import numpy as np
from scipy import optimize

from ..errors import ConfigError, InvalidArgumentError
from ..physics import CrosstalkModel
from ..statmodels import BimodalChargeModel, SkewNormalParams, optimal_threshold, skew_normal_cdf, skew_normal_sf
from .core import (
    ChargePolarizeSerial,
    Ionize,
    MicrowavePulse,
    NvCenter,
    RatesConfig,
    Readout,
    SccSerial,
    SequenceConfig,
    SpinPolarizeGlobal,
    run_shots,
)

ZERO_FIELD_SPLITTING_HZ = 2.870e9
DRIVE_A_HZ = 2.813e9
DRIVE_B_HZ = 2.858e9
CHARGE_INIT_SUCCESS = 0.77
READOUT_SURVIVAL = 0.9756

# Rates reproducing the repeated-initialization data: f0 follows from
# n0 = (1 - f0) N, f- is picked inside the measured range, and (a, b) are
# solved from the fitted (c1, c2).
REINIT_RATES = RatesConfig(fidelity_nvm=0.95, fidelity_nv0=0.934, survival_nvm=0.97560, init_success=0.79195)

# (x, y) in µm relative to the field-of-view center, and orientation
_LAYOUT = [
    ((-3.1, -2.6), "A"),
    ((-0.9, -3.3), "B"),
    ((1.6, -2.9), "A"),
    ((3.3, -1.4), "B"),
    ((-2.6, -1.0), "B"),
    ((-0.3, -0.4), "A"),
    ((2.1, -0.1), "A"),
    ((-3.2, 1.7), "B"),
    ((-0.5, 0.9), "A"),
    ((1.5, 2.4), "B"),
    ((2.7, 3.3), "A"),
    ((-1.9, 3.4), "C"),
    ((3.8, -3.4), "D"),
]

_RES_LOW = {"A": DRIVE_A_HZ, "B": DRIVE_B_HZ, "C": 2.837e9, "D": 2.846e9}
_C13_PAIRS = [(), (1.9e6, 2.3e6), (), (), (2.6e6, 3.1e6), (), (), (1.4e6, 1.8e6), (), ()]


def default_brightness(scale=1.0):
    """Count distributions for a 50 ms, 589 nm readout, scaled by brightness."""
    return BimodalChargeModel(
        0.5,
        SkewNormalParams(40.0 * scale, 8.0 * math.sqrt(scale), 2.0),
        SkewNormalParams(110.0 * scale, 12.0 * math.sqrt(scale), -1.0),
    )


def default_layout(scc_fidelity_given_ms0=0.8, scc_fidelity_given_ms1=0.6):
    """Thirteen NVs in an ~8 µm field of view; ids 0-9 are A/B and usable."""
    rng = np.random.default_rng(20240613)
    jitter = rng.normal(0.0, 0.3e6, len(_LAYOUT))
    scales = 1.0 + 0.05 * rng.standard_normal(len(_LAYOUT))
    nvs = []
    for i, ((x, y), o) in enumerate(_LAYOUT):
        low = _RES_LOW[o] + jitter[i]
        nvs.append(NvCenter(
            id=i,
            position_um=(x, y),
            orientation=o,
            resonance_low_hz=float(low),
            resonance_high_hz=float(2 * ZERO_FIELD_SPLITTING_HZ - low),
            scc_fidelity_given_ms0=scc_fidelity_given_ms0,
            scc_fidelity_given_ms1=scc_fidelity_given_ms1,
            c13_osc_freqs=_C13_PAIRS[i] if i < len(_C13_PAIRS) else (),
            brightness_model=default_brightness(float(scales[i])),
        ))
    return nvs


def usable_ids(nvs):
    return [nv.id for nv in nvs if nv.usable]


def readout_fidelities(model, threshold=None):
    """``(f_nvm, f_nv0)`` of a threshold applied to a brightness model."""
    if threshold is None:
        threshold = optimal_threshold(model).threshold
    f_nvm = float(skew_normal_sf(threshold, model.mode_nvm))
    f_nv0 = float(skew_normal_cdf(threshold, model.mode_nv0))
    return f_nvm, f_nv0


def isolated_spin_snr(nv, init_success=CHARGE_INIT_SUCCESS, survival=READOUT_SURVIVAL, threshold=None):
    """Expected single-shot SNR of one NV with no optical or microwave crosstalk."""
    f_nvm, f_nv0 = readout_fidelities(nv.brightness_model, threshold)
    u0 = init_success * survival * nv.scc_fidelity_given_ms0
    u1 = init_success * survival * (1.0 - nv.scc_fidelity_given_ms1)
    p0 = u0 * f_nvm + (1 - u0) * (1 - f_nv0)
    p1 = u1 * f_nvm + (1 - u1) * (1 - f_nv0)
    return (p0 - p1) / math.sqrt(p0 * (1 - p0) + p1 * (1 - p1))


def tune_scc_fidelities(nvs, target_snr, init_success=CHARGE_INIT_SUCCESS, survival=READOUT_SURVIVAL):
    """Return copies of ``nvs`` whose ``scc_fidelity_given_ms1`` gives ``target_snr``.

    ``scc_fidelity_given_ms0`` is kept; the ms=±1 ionization probability is
    solved for each NV in isolation.
    """
    from dataclasses import replace

    out = []
    for nv in nvs:
        def gap(f1, nv=nv):
            return isolated_spin_snr(replace(nv, scc_fidelity_given_ms1=f1), init_success, survival) - target_snr

        if gap(0.0) > 0 or gap(1.0) < 0:
            raise InvalidArgumentError(f"SNR {target_snr} unreachable for NV {nv.id}")
        out.append(replace(nv, scc_fidelity_given_ms1=optimize.brentq(gap, 0.0, 1.0, xtol=1e-12)))
    return out


def spin_reference_sequence(targets, prep_ms1=False, crosstalk=None, init_success=CHARGE_INIT_SUCCESS,
                            survival=READOUT_SURVIVAL):
    """Charge init, spin polarization, optional pi pulse on A and B, serialized SCC."""
    steps = [
        Ionize(tuple(targets)),
        ChargePolarizeSerial(tuple(targets), init_success),
        SpinPolarizeGlobal(),
    ]
    if prep_ms1:
        steps.append(MicrowavePulse(("A", "B")))
    steps += [
        SccSerial(tuple(targets), crosstalk=crosstalk),
        Readout(50.0, survival=survival),
    ]
    return SequenceConfig(tuple(steps))


PATTERNS = ("reference", "block", "checkerboard", "orientation")


def correlation_sequence(pattern, nvs, targets=None, crosstalk=CrosstalkModel(), init_success=CHARGE_INIT_SUCCESS,
                         survival=READOUT_SURVIVAL):
    """Sequence for one of the correlation patterns on ``targets`` (default ids 0-9)."""
    if pattern not in PATTERNS:
        raise ConfigError(f"unknown correlation pattern {pattern!r}; choose from {PATTERNS}")
    targets = tuple(range(10)) if targets is None else tuple(targets)
    half = len(targets) // 2
    ordering, inserted = targets, ()
    if pattern == "block":
        inserted = ((half, ("A", "B")),)
    elif pattern == "checkerboard":
        ordering = targets[0::2] + targets[1::2]
        inserted = ((len(targets[0::2]), ("A", "B")),)
    steps = [
        Ionize(targets),
        ChargePolarizeSerial(targets, init_success),
        SpinPolarizeGlobal(),
    ]
    if pattern != "reference":
        steps.append(MicrowavePulse(("A", "B"), random=True))
    if pattern == "orientation":
        steps.append(MicrowavePulse(("A",)))
    steps += [SccSerial(ordering, inserted, crosstalk=crosstalk), Readout(50.0, survival=survival)]
    return SequenceConfig(tuple(steps))


def ideal_correlation_signs(pattern, nvs, targets=None):
    """Sign matrix (+1/-1, 0 for the reference) of the induced correlations."""
    if pattern not in PATTERNS:
        raise ConfigError(f"unknown correlation pattern {pattern!r}")
    targets = list(range(10)) if targets is None else list(targets)
    n = len(targets)
    if pattern == "reference":
        return np.eye(n)
    by_id = {nv.id: nv for nv in nvs}
    if pattern == "block":
        group = np.array([k >= n // 2 for k in range(n)])
    elif pattern == "checkerboard":
        group = np.array([k % 2 == 1 for k in range(n)])
    else:
        group = np.array([by_id[i].orientation == "A" for i in targets])
    return np.where(group[:, None] == group[None, :], 1.0, -1.0)


def correlation_experiment(nvs, pattern, n_shots, rng_seed, targets=None, crosstalk=CrosstalkModel(),
                           thresholds=None, threads=1):
    """Simulate one correlation pattern; returns :class:`ShotRecords` for ``targets``."""
    targets = tuple(range(10)) if targets is None else tuple(targets)
    by_id = {nv.id: nv for nv in nvs}
    missing = [i for i in targets if i not in by_id]
    if missing:
        raise ConfigError(f"unknown NV ids {missing}")
    seq = correlation_sequence(pattern, nvs, targets, crosstalk)
    sub = [by_id[i] for i in targets]
    return run_shots(sub, seq, n_shots, rng_seed, thresholds=thresholds, threads=threads)
