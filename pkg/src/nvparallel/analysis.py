"""Estimation over camera frames and shot records.

Covers the image pipeline (baseline from a masked strip, disk integration),
thresholding, reference normalization of spin signals, pairwise correlation
matrices and the closed-form model for repeated conditional charge
initialization.
"""
from dataclasses import dataclass, replace
import math
import warnings

import numpy as np
from scipy import optimize

from .errors import (
    ConfigError,
    DegenerateReadoutError,
    FitError,
    GeometryError,
    InsufficientSamplesError,
    InvalidArgumentError,
    SingularModelError,
    UndefinedCorrelationError,
    ZeroContrastError,
)
from .statmodels import fit_bimodal, optimal_threshold


class BaselineContaminationWarning(UserWarning):
    """The masked strip looks brighter than the dark level of the frame."""


# ---------------------------------------------------------------------------
# image pipeline

def disk_mask(shape, center_px, radius_px):
    """Boolean mask of pixels whose centers lie within ``radius_px`` of ``center_px``.

    ``center_px`` is ``(x, y)`` = ``(column, row)``; pixel centers sit on
    integer coordinates.
    """
    cx, cy = center_px
    rows, cols = shape
    if cx - radius_px < -0.5 or cy - radius_px < -0.5 or cx + radius_px > cols - 0.5 or cy + radius_px > rows - 0.5:
        raise GeometryError(f"disk at ({cx:.1f}, {cy:.1f}) r={radius_px} is clipped by the {cols}x{rows} frame")
    y, x = np.ogrid[:rows, :cols]
    return (x - cx) ** 2 + (y - cy) ** 2 <= radius_px**2 + 1e-9


def integrate_counts(frame, center_px, radius_px, baseline_adu, adu_per_photon):
    """Approximate photon number summed over a disk after baseline subtraction."""
    frame = np.asarray(frame, dtype=float)
    mask = disk_mask(frame.shape, center_px, radius_px)
    return float(np.sum(frame[mask] - baseline_adu) / adu_per_photon)


def estimate_baseline(frame, mask_region):
    """Median of the pixels under ``mask_region`` (bool array or index tuple).

    Warns with :class:`BaselineContaminationWarning` when the masked mean sits
    more than five standard errors above the frame's dark level, estimated
    from the global lower decile.
    """
    frame = np.asarray(frame, dtype=float)
    masked = frame[mask_region].ravel()
    if masked.size == 0:
        raise ConfigError("baseline mask selects no pixels")
    median = float(np.median(masked))
    mad_sigma = 1.4826 * float(np.median(np.abs(masked - median)))
    if mad_sigma > 0:
        # For Gaussian dark pixels the lower decile is 1.2816 sigma below the mean.
        dark = float(np.percentile(frame, 10)) + 1.2816 * mad_sigma
        if masked.mean() - dark > 5.0 * mad_sigma / math.sqrt(masked.size):
            warnings.warn("masked region appears to receive light; baseline biased high",
                          BaselineContaminationWarning, stacklevel=2)
    return median


# ---------------------------------------------------------------------------
# thresholds and spin normalization

def _threshold_vector(records, thresholds):
    if isinstance(thresholds, dict):
        missing = [i for i in records.nv_ids if int(i) not in thresholds]
        if missing:
            raise ConfigError(f"no threshold for NV {missing}")
        return np.array([thresholds[int(i)] for i in records.nv_ids], dtype=float)
    t = np.asarray(thresholds, dtype=float)
    if t.shape != (len(records.nv_ids),):
        raise ConfigError(f"expected {len(records.nv_ids)} thresholds, got shape {t.shape}")
    return t


def threshold_records(records, thresholds):
    """Copy of ``records`` with ``charge_bit = counts > threshold`` (strict)."""
    t = _threshold_vector(records, thresholds)
    return replace(records, charge_bit=(records.counts > t).astype(np.int8), thresholds=t)


def fit_thresholds(records):
    """Per-NV thresholds fitted from the records' own count histograms."""
    out = {}
    for k, nv in enumerate(records.nv_ids):
        fit = fit_bimodal(records.counts[:, k])
        out[int(nv)] = optimal_threshold(fit.model).threshold
    return out


def _bit_means(x):
    bits = getattr(x, "charge_bit", x)
    return np.asarray(bits, dtype=float).mean(axis=0)


def normalize_spin_signal(signal_records, ref_records_ms0, ref_records_ms1):
    """``(P_sig - P_ms0) / (P_ms1 - P_ms0)`` per NV from mean charge bits."""
    p0 = _bit_means(ref_records_ms0)
    p1 = _bit_means(ref_records_ms1)
    ps = _bit_means(signal_records)
    contrast = p1 - p0
    if np.any(contrast == 0):
        bad = np.nonzero(contrast == 0)[0].tolist()
        raise ZeroContrastError(f"reference populations equal for NV column(s) {bad}")
    return (ps - p0) / contrast


def spin_snr(bits_ms0, bits_ms1):
    """Single-shot SNR ``(P0 - P1) / sqrt(P0(1-P0) + P1(1-P1))`` per NV."""
    p0 = _bit_means(bits_ms0)
    p1 = _bit_means(bits_ms1)
    return (p0 - p1) / np.sqrt(p0 * (1 - p0) + p1 * (1 - p1))


# ---------------------------------------------------------------------------
# correlations

@dataclass
class CorrelationMatrix:
    values: np.ndarray
    standard_errors: np.ndarray
    n_shots: int
    nv_ids: tuple = ()

    @property
    def size(self):
        return self.values.shape[0]

    def off_diagonal(self):
        iu = np.triu_indices(self.size, 1)
        return self.values[iu]


class CorrelationAccumulator:
    """Mergeable sufficient statistics (n, sums, cross products) for Pearson r.

    Integer inputs accumulate exactly, so partial results merge to the same
    bits regardless of batch order.
    """

    def __init__(self, n_columns, exact=True):
        dtype = np.int64 if exact else float
        self.n = 0
        self.sums = np.zeros(n_columns, dtype=dtype)
        self.cross = np.zeros((n_columns, n_columns), dtype=dtype)

    def update(self, x):
        x = np.asarray(x)
        x = x.astype(self.sums.dtype, copy=False)
        self.n += x.shape[0]
        self.sums += x.sum(axis=0)
        self.cross += x.T @ x
        return self

    def merge(self, other):
        out = CorrelationAccumulator(len(self.sums), exact=self.sums.dtype == np.int64)
        out.n = self.n + other.n
        out.sums = self.sums + other.sums
        out.cross = self.cross + other.cross
        return out

    def result(self, nv_ids=()):
        n = self.n
        if n < 4:
            raise InsufficientSamplesError("need more shots for a correlation estimate")
        s = self.sums.astype(float)
        cov = self.cross.astype(float) - np.outer(s, s) / n
        var = np.diag(cov).copy()
        zero = np.nonzero(var <= 0)[0]
        if zero.size:
            k = int(zero[0])
            name = nv_ids[k] if len(nv_ids) > k else k
            raise UndefinedCorrelationError(f"NV {name} has zero variance; correlation undefined", nv_id=name)
        r = cov / np.sqrt(np.outer(var, var))
        r = np.clip(0.5 * (r + r.T), -1.0, 1.0)
        np.fill_diagonal(r, 1.0)
        se = np.full_like(r, 1.0 / math.sqrt(n - 3))
        np.fill_diagonal(se, 0.0)
        return CorrelationMatrix(r, se, n, tuple(nv_ids))


def correlation_matrix(records, use="bits", min_shots=1000):
    """Pearson correlation between NV columns of per-shot charge bits (or counts)."""
    if use == "bits":
        x = np.asarray(getattr(records, "charge_bit", records))
        exact = True
    elif use == "counts":
        x = np.asarray(records.counts, dtype=float)
        exact = False
    else:
        raise InvalidArgumentError(f"use must be 'bits' or 'counts', not {use!r}")
    if x.ndim != 2 or x.shape[1] < 2:
        raise InvalidArgumentError("need a (shots, NVs) array with at least 2 NVs")
    if x.shape[0] < min_shots:
        raise InsufficientSamplesError(f"need at least {min_shots} shots, got {x.shape[0]}")
    ids = tuple(int(i) for i in getattr(records, "nv_ids", range(x.shape[1])))
    if not exact:
        # center first so float accumulation does not cancel catastrophically
        x = x - x.mean(axis=0)
    return CorrelationAccumulator(x.shape[1], exact=exact).update(x).result(ids)


# ---------------------------------------------------------------------------
# conditional initialization model

@dataclass(frozen=True)
class ConditionalInitModel:
    n0: float
    c1: float
    c2: float
    n_total: int

    @property
    def steady_state(self):
        if self.c1 == 1.0:
            raise SingularModelError("c1 = 1 has no steady state")
        return self.c2 * self.n_total / (1.0 - self.c1)


def conditional_model_predict(model, attempt):
    """Expected measured NV- count after ``attempt`` conditional attempts."""
    i = np.asarray(attempt)
    if np.any(i < 0):
        raise InvalidArgumentError("attempt must be >= 0")
    c1 = model.c1
    if c1 == 1.0:
        raise SingularModelError("closed form is singular at c1 = 1")
    geo = (1.0 - c1**i) / (1.0 - c1)
    return c1**i * model.n0 + model.c2 * model.n_total * geo


def _readout_denominator(f_nvm, f_nv0):
    d = f_nvm + f_nv0 - 1.0
    if d <= 0:
        raise DegenerateReadoutError(f"f_nvm + f_nv0 = {f_nvm + f_nv0:.6g} <= 1")
    return d


def coeffs_from_rates(rates):
    """Recurrence coefficients ``(c1, c2)`` of ``n_i = c1 n_{i-1} + c2 N``."""
    fm, f0, a, b = rates.fidelity_nvm, rates.fidelity_nv0, rates.survival_nvm, rates.init_success
    d = _readout_denominator(fm, f0)
    g = (fm**2 * a - (1 - f0) ** 2) / d
    beta = fm * b + (1 - f0) * (1 - b)
    return g - beta, beta + (1 - f0) ** 2 - (1 - f0) * g


def measured_from_actual(n_actual, n_total, f_nvm, f_nv0):
    return f_nvm * n_actual + (1.0 - f_nv0) * (n_total - n_actual)


def actual_from_measured(n_measured, n_total, f_nvm, f_nv0):
    """Invert the readout-error map: actual NV- count from the measured one."""
    return (n_measured - (1.0 - f_nv0) * n_total) / _readout_denominator(f_nvm, f_nv0)


def four_term_step(n_prev, n_total, rates):
    """One attempt of the readout/re-initialization bookkeeping.

    Sum of: NV- read correctly twice and not ionized in between; NV0 misread
    as NV- twice; NVs read as NV0, re-initialized and read as NV-; NVs read as
    NV0 whose re-initialization failed but which are misread as NV-.
    """
    fm, f0, a, b = rates.fidelity_nvm, rates.fidelity_nv0, rates.survival_nvm, rates.init_success
    actual = actual_from_measured(n_prev, n_total, fm, f0)
    return (
        fm**2 * a * actual
        + (1 - f0) ** 2 * (n_total - actual)
        + fm * b * (n_total - n_prev)
        + (1 - f0) * (1 - b) * (n_total - n_prev)
    )


def model_from_rates(rates, n_total, n0=None):
    """Closed-form model implied by physical rates; ``n0`` defaults to all-NV0 start."""
    c1, c2 = coeffs_from_rates(rates)
    if n0 is None:
        n0 = (1.0 - rates.fidelity_nv0) * n_total
    return ConditionalInitModel(float(n0), float(c1), float(c2), int(n_total))


@dataclass
class ConditionalInitFit:
    model: ConditionalInitModel
    stderr: dict
    residual_rms: float


def fit_conditional_model(means, n_total, sigma=None, attempts=None, p0=None):
    """Least-squares fit of the closed form over ``(n0, c1, c2)``.

    Unweighted unless per-point standard errors ``sigma`` are given.
    """
    y = np.asarray(means, dtype=float)
    if y.size < 4:
        raise InsufficientSamplesError("need at least 4 attempt points")
    i = np.arange(y.size) if attempts is None else np.asarray(attempts, dtype=float)

    def f(x, n0, c1, c2):
        return c1**x * n0 + c2 * n_total * (1.0 - c1**x) / (1.0 - c1)

    if p0 is None:
        n_inf = y[-1]
        c1_guess = 0.3
        p0 = (y[0], c1_guess, n_inf * (1 - c1_guess) / n_total)
    try:
        popt, pcov, info, msg, ier = optimize.curve_fit(
            f, i, y, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
            bounds=([-np.inf, -0.999999, -np.inf], [np.inf, 0.999999, np.inf]),
            full_output=True, maxfev=20000, xtol=1e-15, ftol=1e-15, gtol=1e-15,
        )
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"conditional-initialization fit failed: {exc}", best=None) from exc
    if ier not in (1, 2, 3, 4):
        raise FitError(msg, best=ConditionalInitModel(*popt, n_total))
    err = np.sqrt(np.diag(pcov)) if np.all(np.isfinite(pcov)) else np.full(3, np.nan)
    model = ConditionalInitModel(float(popt[0]), float(popt[1]), float(popt[2]), int(n_total))
    resid = y - f(i, *popt)
    return ConditionalInitFit(model, dict(zip(("n0", "c1", "c2"), map(float, err))),
                              float(np.sqrt(np.mean(resid**2))))
