import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from nvparallel.errors import InvalidArgumentError
from nvparallel.planning import (
    CONTRAST_TIMES_S,
    ModalityParams,
    ScalabilityParams,
    binding_bandwidth_bound,
    crossover_n,
    independent_curves,
    max_n_bandwidth,
    max_n_relaxation,
    modality_preset,
    n_bandwidth_curve,
    n_relaxation_curve,
    optimal_beam_fraction,
    scalability_report,
    speedup,
    time_to_unit_snr_correlated,
    time_to_unit_snr_independent,
)

T_I = 100e-6
SLOW = modality_preset("conventional-serial", T_I)
FAST = modality_preset("scc-parallel", T_I)


def test_hand_computed_times():
    # (1/0.03)^2 * 10 * (0.3 µs + 100 µs)
    assert time_to_unit_snr_independent(SLOW, 10) == pytest.approx(10 * 100.3e-6 / 0.03**2)
    # 16 * (10 * 21 µs + 62 ms + 100 µs)
    assert time_to_unit_snr_independent(FAST, 10) == pytest.approx(16 * (210e-6 + 62.1e-3))
    assert time_to_unit_snr_independent(FAST, 10) == pytest.approx(1.0, abs=0.01)


def test_speedup_at_10_and_100():
    assert speedup(SLOW, FAST, 10) > 1.05
    assert speedup(SLOW, FAST, 100) == pytest.approx(10.8, abs=0.5)
    n = crossover_n(SLOW, FAST)
    assert n <= 10
    assert speedup(SLOW, FAST, n) > 1 >= speedup(SLOW, FAST, n - 1)


def test_no_crossover_when_parallel_never_wins():
    # more per-NV time and a fixed overhead: loses for every n
    worse = ModalityParams(0.03, 200e-6, 0.0, 1e-3, 0.0)
    assert crossover_n(SLOW, worse, n_max=1000) is None


@given(st.integers(1, 10_000), st.floats(0, 1e-2))
def test_time_is_monotone_in_n_and_interrogation(n, t):
    for name in ("conventional-serial", "scc-serial", "scc-parallel"):
        p = modality_preset(name, t)
        assert time_to_unit_snr_independent(p, n + 1) >= time_to_unit_snr_independent(p, n)
        assert time_to_unit_snr_independent(modality_preset(name, t + 1e-6), n) > time_to_unit_snr_independent(p, n)


def test_correlated_two_nvs():
    p = ModalityParams(0.5, 1e-3, 0.0, 2e-3, 0.0)
    # a single pair: serial pays n(n-1)/2 = 1 per-NV time
    assert time_to_unit_snr_correlated(p, 2, "serial") == pytest.approx(16 * 1e-3)
    assert time_to_unit_snr_correlated(p, 2, "parallel") == pytest.approx(16 * (2e-3 + 2e-3))
    ser = modality_preset("scc-serial", T_I)
    assert time_to_unit_snr_correlated(ser, 100, "serial") == pytest.approx(256 * 4950 * 5.1e-3)
    with pytest.raises(InvalidArgumentError):
        time_to_unit_snr_correlated(p, 1, "serial")
    with pytest.raises(InvalidArgumentError):
        time_to_unit_snr_correlated(p, 5, "diagonal")


def test_invalid_modality():
    with pytest.raises(InvalidArgumentError):
        ModalityParams(0.0)
    with pytest.raises(InvalidArgumentError):
        ModalityParams(0.5, t_overhead_serial_s=-1.0)
    with pytest.raises(InvalidArgumentError):
        modality_preset("telepathy", T_I)


def test_relaxation_bound_bulk():
    omega = 1 / (3 * CONTRAST_TIMES_S["bulk"])
    assert max_n_relaxation(omega, 10e-6) == 500


def test_bandwidth_bound():
    assert max_n_bandwidth(0.59, 2.76, 45.0) == pytest.approx(9100, abs=100)
    assert max_n_bandwidth(0.59, 2.76, 45.0) == math.floor(0.59 * (2.76 * 45) ** 2)


@given(st.floats(0.05, 1.0))
def test_halving_beam_scales_bounds(s):
    omega = 1 / (3 * 5e-3)
    assert n_relaxation_curve(omega, 10e-6, s / 2) == pytest.approx(2 * n_relaxation_curve(omega, 10e-6, s))
    assert n_bandwidth_curve(0.59, 2.76, 45, s / 2) == pytest.approx(n_bandwidth_curve(0.59, 2.76, 45, s) / 4)


@pytest.mark.parametrize("context", sorted(CONTRAST_TIMES_S))
def test_intersection_by_root_finding(context):
    scal = ScalabilityParams.from_contrast_time(CONTRAST_TIMES_S[context])
    gap = lambda s: (n_relaxation_curve(scal.sq_relaxation_rate_hz, scal.aod_access_time_s, s)
                     - n_bandwidth_curve(scal.nv_density_per_um2, scal.dispersion_um_per_mhz, scal.rf_bandwidth_mhz, s))
    s_root = optimize.brentq(gap, 1e-3, 1.0, xtol=1e-14)
    opt = optimal_beam_fraction(scal)
    assert opt.beam_fraction == pytest.approx(s_root, rel=1e-10)
    n_bw = n_bandwidth_curve(scal.nv_density_per_um2, scal.dispersion_um_per_mhz, scal.rf_bandwidth_mhz, s_root)
    assert opt.n_max == pytest.approx(n_bw, rel=1e-9)


def test_bulk_intersection_values():
    opt = optimal_beam_fraction(ScalabilityParams.from_contrast_time(5e-3))
    assert opt.beam_fraction == pytest.approx(0.380, abs=1e-3)
    assert opt.n_max == pytest.approx(1315, abs=1)
    # reported estimate of about 1100, within the accepted +-25 %
    assert abs(opt.n_max / 1100 - 1) < 0.25


def test_equal_bounds_meet_at_full_aperture():
    w = n_bandwidth_curve(0.59, 2.76, 45.0, 1.0)
    scal = ScalabilityParams(1.0 / (3 * 10e-6 * w))
    opt = optimal_beam_fraction(scal)
    assert opt.beam_fraction == pytest.approx(1.0, abs=1e-12)
    assert opt.n_max == pytest.approx(w)


def test_cryogenic_limit_is_bandwidth():
    rep = scalability_report()
    assert rep["cryogenic"]["beam_fraction"] == 1.0
    assert rep["cryogenic"]["n_max"] == pytest.approx(n_bandwidth_curve(0.59, 2.76, 45.0, 1.0))
    ns = [rep[c]["n_max"] for c in ("nanodiamond", "shallow", "bulk", "cryogenic")]
    assert ns == sorted(ns)


def test_binding_aod_is_smaller_bandwidth():
    name, n = binding_bandwidth_bound(0.59)
    assert name == "520nm"
    assert n == min(max_n_bandwidth(0.59, 2.76, 45.0), max_n_bandwidth(0.59, 3.33, 40.0))


def test_invalid_scalability_inputs():
    with pytest.raises(InvalidArgumentError):
        ScalabilityParams(0.0)
    with pytest.raises(InvalidArgumentError):
        ScalabilityParams(1.0, beam_fraction=1.5)
    with pytest.raises(InvalidArgumentError):
        max_n_relaxation(-1.0, 1e-5)


def test_curve_table_shape():
    text = independent_curves([1, 10, 100])
    lines = text.strip().splitlines()
    assert len(lines) == 4
    assert lines[0].split(",")[0] == "n"
    assert float(lines[2].split(",")[1]) == pytest.approx(float(time_to_unit_snr_independent(SLOW, 10)), rel=1e-8)
