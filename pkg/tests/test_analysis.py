import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvparallel.analysis import (
    BaselineContaminationWarning,
    ConditionalInitModel,
    CorrelationAccumulator,
    actual_from_measured,
    coeffs_from_rates,
    conditional_model_predict,
    correlation_matrix,
    disk_mask,
    estimate_baseline,
    fit_conditional_model,
    fit_thresholds,
    four_term_step,
    integrate_counts,
    measured_from_actual,
    model_from_rates,
    normalize_spin_signal,
    spin_snr,
    threshold_records,
)
from nvparallel.errors import (
    ConfigError,
    DegenerateReadoutError,
    GeometryError,
    InsufficientSamplesError,
    InvalidArgumentError,
    SingularModelError,
    UndefinedCorrelationError,
    ZeroContrastError,
)
from nvparallel.simulator import REINIT_RATES, CameraModel, RatesConfig, default_layout, run_shots, spin_reference_sequence

from oracles import conditional_chain_expectation, disk_pixel_count, pearson_matrix


@pytest.mark.parametrize("radius", [0, 1, 2.5, 5, 12, 12.7])
def test_disk_pixel_count(radius):
    mask = disk_mask((60, 60), (30, 30), radius)
    assert mask.sum() == disk_pixel_count(radius)


def test_twelve_pixel_disk_has_441_pixels():
    assert disk_mask((100, 100), (50, 50), 12).sum() == 441


def test_clipped_disk_is_rejected():
    with pytest.raises(GeometryError):
        disk_mask((50, 50), (5, 25), 12)


def test_integrate_counts_of_flat_frame():
    frame = np.full((60, 60), 520.0)
    got = integrate_counts(frame, (30, 30), 12, 500.0, 20.0)
    assert got == pytest.approx(441 * 20 / 20)


def test_baseline_is_median_of_mask():
    rng = np.random.default_rng(0)
    cam = CameraModel()
    frame = 500 + 4 * rng.standard_normal(cam.shape)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        b = estimate_baseline(frame, cam.mask_region)
    assert b == pytest.approx(500, abs=0.1)


def test_lit_mask_warns():
    rng = np.random.default_rng(1)
    cam = CameraModel()
    frame = 500 + 4 * rng.standard_normal(cam.shape)
    frame[:, :cam.mask_columns] += 3.0
    with pytest.warns(BaselineContaminationWarning):
        estimate_baseline(frame, cam.mask_region)


def test_empty_mask_is_config_error():
    with pytest.raises(ConfigError):
        estimate_baseline(np.zeros((5, 5)), np.zeros((5, 5), dtype=bool))


@pytest.fixture(scope="module")
def refs():
    nvs = default_layout()[:10]
    r0 = run_shots(nvs, spin_reference_sequence(range(10)), 40_000, 1)
    r1 = run_shots(nvs, spin_reference_sequence(range(10), True), 40_000, 2)
    return r0, r1


def test_threshold_records_is_strict(refs):
    r0, _ = refs
    t = {int(i): float(r0.counts[0, k]) for k, i in enumerate(r0.nv_ids)}
    out = threshold_records(r0, t)
    # a count equal to its threshold reads as NV0
    assert np.all(out.charge_bit[0] == 0)
    with pytest.raises(ConfigError):
        threshold_records(r0, {0: 1.0})
    with pytest.raises(ConfigError):
        threshold_records(r0, [1.0, 2.0])


def test_fitted_thresholds_close_to_truth(refs):
    r0, _ = refs
    fitted = fit_thresholds(r0)
    truth = dict(zip(r0.nv_ids.tolist(), r0.thresholds))
    for k in fitted:
        assert fitted[k] == pytest.approx(truth[k], abs=3.0)


def test_normalization_maps_references_to_zero_and_one(refs):
    r0, r1 = refs
    np.testing.assert_allclose(normalize_spin_signal(r0, r0, r1), 0.0, atol=1e-12)
    np.testing.assert_allclose(normalize_spin_signal(r1, r0, r1), 1.0, atol=1e-12)
    snr = spin_snr(r0, r1)
    assert np.all(snr > 0.1)


@given(st.floats(0.1, 3.0), st.floats(-0.5, 0.5))
def test_normalization_is_affine_invariant(gain, offset):
    rng = np.random.default_rng(0)
    p0, p1, ps = rng.random(5), rng.random(5) + 1.0, rng.random(5)
    aff = lambda p: (gain * p + offset)[None, :]
    np.testing.assert_allclose(normalize_spin_signal(aff(ps), aff(p0), aff(p1)),
                               normalize_spin_signal(ps[None], p0[None], p1[None]), rtol=1e-9, atol=1e-9)


def test_zero_contrast():
    x = np.ones((10, 3))
    with pytest.raises(ZeroContrastError):
        normalize_spin_signal(x, x, x)


def test_correlation_matches_numpy(refs):
    r0, _ = refs
    cm = correlation_matrix(r0)
    np.testing.assert_allclose(cm.values, pearson_matrix(r0.charge_bit), atol=1e-12)
    np.testing.assert_array_equal(np.diag(cm.values), 1.0)
    np.testing.assert_array_equal(cm.values, cm.values.T)
    assert cm.standard_errors[0, 1] == pytest.approx(1 / math.sqrt(40_000 - 3))
    cc = correlation_matrix(r0, use="counts")
    np.testing.assert_allclose(cc.values, pearson_matrix(r0.counts), atol=1e-12)


def test_constant_column_is_undefined():
    x = np.random.default_rng(0).integers(0, 2, (2000, 3))
    x[:, 1] = 1
    with pytest.raises(UndefinedCorrelationError):
        correlation_matrix(x)
    with pytest.raises(InsufficientSamplesError):
        correlation_matrix(x[:10])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_accumulator_merge_is_bitwise_order_free(n_parts, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, (3000, 4))
    cuts = np.sort(rng.integers(0, 3000, n_parts))
    parts = np.split(x, cuts)
    whole = CorrelationAccumulator(4).update(x).result()
    fwd = CorrelationAccumulator(4)
    for p in parts:
        fwd = fwd.merge(CorrelationAccumulator(4).update(p))
    rev = CorrelationAccumulator(4)
    for p in parts[::-1]:
        rev = rev.merge(CorrelationAccumulator(4).update(p))
    np.testing.assert_array_equal(fwd.result().values, whole.values)
    np.testing.assert_array_equal(rev.result().values, whole.values)


# --- conditional initialization ----------------------------------------------

def test_iterating_four_terms_equals_closed_form():
    r, n = REINIT_RATES, 10
    model = model_from_rates(r, n)
    seq = [model.n0]
    for _ in range(15):
        seq.append(four_term_step(seq[-1], n, r))
    np.testing.assert_allclose(conditional_model_predict(model, np.arange(16)), seq, rtol=1e-12)


def test_closed_form_matches_exact_propagation():
    r = REINIT_RATES
    exact = conditional_chain_expectation(r.fidelity_nvm, r.fidelity_nv0, r.survival_nvm, r.init_success, 10, 12)
    np.testing.assert_allclose(conditional_model_predict(model_from_rates(r, 10), np.arange(13)), exact, rtol=1e-12)


def test_reinit_rates_coefficients():
    c1, c2 = coeffs_from_rates(REINIT_RATES)
    assert c1 == pytest.approx(0.225, abs=1e-3)
    assert c2 == pytest.approx(0.705, abs=1e-3)
    m = model_from_rates(REINIT_RATES, 10)
    assert m.steady_state == pytest.approx(9.097, abs=2e-3)


@given(st.floats(0, 100), st.floats(0.55, 1.0), st.floats(0.55, 1.0))
def test_measured_actual_inverse(n, fm, f0):
    back = actual_from_measured(measured_from_actual(n, 100, fm, f0), 100, fm, f0)
    assert back == pytest.approx(n, rel=1e-9, abs=1e-9)


def test_degenerate_readout():
    with pytest.raises(DegenerateReadoutError):
        actual_from_measured(3.0, 10, 0.5, 0.5)


def test_singular_model():
    with pytest.raises(SingularModelError):
        conditional_model_predict(ConditionalInitModel(0.0, 1.0, 0.1, 10), 3)
    with pytest.raises(SingularModelError):
        ConditionalInitModel(0.0, 1.0, 0.1, 10).steady_state


def test_fit_recovers_coefficients():
    truth = ConditionalInitModel(0.66, 0.225, 0.705, 10)
    x = np.arange(12)
    sigma = np.full(12, 0.01)
    y = conditional_model_predict(truth, x) + np.random.default_rng(3).normal(0, 0.01, 12)
    fit = fit_conditional_model(y, 10, sigma=sigma)
    for name in ("n0", "c1", "c2"):
        assert abs(getattr(fit.model, name) - getattr(truth, name)) < 4 * fit.stderr[name]
    with pytest.raises(InsufficientSamplesError):
        fit_conditional_model(y[:3], 10)


def test_rates_must_be_identifiable():
    with pytest.raises(InvalidArgumentError):
        RatesConfig(0.4, 0.5)


def test_disk_sum_z_scores_are_standard_normal():
    from nvparallel.acceptance import propagated_sigma, random_layout
    from nvparallel.simulator import render_frame

    cam = CameraModel()
    rng = np.random.default_rng(21)
    n_mask = cam.height_px * cam.mask_columns
    z = []
    for _ in range(60):
        nvs = random_layout(rng, cam, 4)
        counts = rng.uniform(20.0, 200.0, 4)
        frame = render_frame(counts, nvs, cam, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BaselineContaminationWarning)
            b = estimate_baseline(frame, cam.mask_region)
        for nv, c in zip(nvs, counts):
            center = cam.to_px(nv.position_um)
            got = integrate_counts(frame, center, cam.integration_radius_px, b, cam.adu_per_photon)
            n_pix = int(disk_mask(cam.shape, center, cam.integration_radius_px).sum())
            z.append((got - c) / float(propagated_sigma(c, cam, n_pix, n_mask)))
    z = np.array(z)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert 0.85 < z.std(ddof=1) < 1.15
