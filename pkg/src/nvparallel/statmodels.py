"""Count statistics for single-shot charge-state readout.

The integrated counts recorded for one NV center in one exposure follow a
two-component skew-normal mixture, one component per charge state.  This
module evaluates that mixture, fits it to data, picks the threshold that
maximizes the total readout success probability and draws synthetic counts.

Counts are treated as continuous reals throughout.
"""
from dataclasses import dataclass, field
from enum import IntEnum
import math

import numpy as np
from scipy import optimize, special
from scipy.signal import find_peaks

from .errors import (
    AmbiguousThresholdError,
    DegenerateFitError,
    FitError,
    InsufficientSamplesError,
    InvalidArgumentError,
)

_LOG2 = math.log(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_HWHM_TO_SIGMA = 1.0 / math.sqrt(2.0 * math.log(2.0))


class ChargeState(IntEnum):
    NV0 = 0
    NVM = 1

    @classmethod
    def parse(cls, value):
        if isinstance(value, ChargeState):
            return value
        if isinstance(value, str):
            key = value.upper().replace("-", "M").replace("⁻", "M")
            if key in ("NV0", "NVM"):
                return cls[key]
        if value in (0, 1):
            return cls(int(value))
        raise InvalidArgumentError(f"unknown charge state {value!r}")


def _check_finite(**values):
    for name, v in values.items():
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError(f"{name} must be finite")


@dataclass(frozen=True)
class SkewNormalParams:
    """Location, scale and shape of one skew-normal count distribution."""

    location: float
    scale: float
    shape: float = 0.0

    def __post_init__(self):
        _check_finite(location=self.location, scale=self.scale, shape=self.shape)
        if not self.scale > 0:
            raise InvalidArgumentError(f"scale must be > 0, got {self.scale}")

    @property
    def delta(self):
        return self.shape / math.sqrt(1.0 + self.shape**2)

    @property
    def mean(self):
        return self.location + self.scale * self.delta * _SQRT_2_OVER_PI

    @property
    def std(self):
        return self.scale * math.sqrt(1.0 - 2.0 * self.delta**2 / math.pi)

    def to_dict(self):
        return {"location": self.location, "scale": self.scale, "shape": self.shape}

    @classmethod
    def from_dict(cls, d):
        return cls(**_strict(d, {"location", "scale"}, {"shape"}))


@dataclass(frozen=True)
class BimodalChargeModel:
    """Mixture ``p_nv0 * g_nv0 + p_nvm * g_nvm``; NV- is the bright mode."""

    p_nv0: float
    mode_nv0: SkewNormalParams
    mode_nvm: SkewNormalParams

    def __post_init__(self):
        _check_finite(p_nv0=self.p_nv0)
        if not 0.0 <= self.p_nv0 <= 1.0:
            raise InvalidArgumentError(f"p_nv0 must lie in [0, 1], got {self.p_nv0}")
        if not self.mode_nvm.location > self.mode_nv0.location:
            raise InvalidArgumentError("NV- mode must be brighter than the NV0 mode")

    @property
    def p_nvm(self):
        return 1.0 - self.p_nv0

    def mode(self, charge_state):
        cs = ChargeState.parse(charge_state)
        return self.mode_nvm if cs is ChargeState.NVM else self.mode_nv0

    def with_weight(self, p_nv0):
        return BimodalChargeModel(p_nv0, self.mode_nv0, self.mode_nvm)

    def to_dict(self):
        return {
            "p_nv0": self.p_nv0,
            "mode_nv0": self.mode_nv0.to_dict(),
            "mode_nvm": self.mode_nvm.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        d = _strict(d, {"p_nv0", "mode_nv0", "mode_nvm"})
        return cls(
            float(d["p_nv0"]),
            SkewNormalParams.from_dict(d["mode_nv0"]),
            SkewNormalParams.from_dict(d["mode_nvm"]),
        )


@dataclass(frozen=True)
class ThresholdResult:
    """Optimal threshold and the per-state readout success probabilities.

    ``fidelity_nv0`` and ``fidelity_nvm`` are conditional on the charge state
    (``P(C < t | NV0)`` and ``P(C > t | NV-)``).  ``success_total`` is the
    maximized objective ``P(C < t and NV0) + P(C > t and NV-)``, i.e. the
    weight-averaged fidelity.
    """

    threshold: float
    fidelity_nv0: float
    fidelity_nvm: float
    success_total: float


@dataclass
class CountHistogram:
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    total_shots: int = field(default=None)

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.bin_counts = np.asarray(self.bin_counts)
        if self.bin_edges.ndim != 1 or len(self.bin_edges) != len(self.bin_counts) + 1:
            raise InvalidArgumentError("need len(bin_edges) == len(bin_counts) + 1")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise InvalidArgumentError("bin edges must be strictly increasing")
        if np.any(self.bin_counts < 0) or np.any(self.bin_counts != np.round(self.bin_counts)):
            raise InvalidArgumentError("bin counts must be non-negative integers")
        self.bin_counts = self.bin_counts.astype(np.int64)
        total = int(self.bin_counts.sum())
        if self.total_shots is None:
            self.total_shots = total
        elif int(self.total_shots) != total:
            raise InvalidArgumentError("total_shots does not match sum of bin counts")

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @classmethod
    def from_samples(cls, samples, bins="fd"):
        samples = np.asarray(samples, dtype=float)
        counts, edges = np.histogram(samples, bins=bins)
        return cls(edges, counts)


def _strict(d, required, optional=()):
    keys = set(d)
    unknown = keys - set(required) - set(optional)
    if unknown:
        raise InvalidArgumentError(f"unknown keys: {sorted(unknown)}")
    missing = set(required) - keys
    if missing:
        raise InvalidArgumentError(f"missing keys: {sorted(missing)}")
    return dict(d)


# ---------------------------------------------------------------------------
# densities

def skew_normal_logpdf(x, params):
    x = np.asarray(x, dtype=float)
    _check_finite(x=x)
    z = (x - params.location) / params.scale
    return _LOG2 - math.log(params.scale) - 0.5 * z**2 - 0.5 * math.log(2 * math.pi) + special.log_ndtr(
        params.shape * z
    )


def skew_normal_pdf(x, params):
    """Skew-normal density ``2 phi(z) Phi(shape z) / scale``."""
    x = np.asarray(x, dtype=float)
    _check_finite(x=x)
    z = (x - params.location) / params.scale
    return 2.0 * np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi) * special.ndtr(params.shape * z) / params.scale


def skew_normal_cdf(x, params):
    z = (np.asarray(x, dtype=float) - params.location) / params.scale
    return np.clip(special.ndtr(z) - 2.0 * special.owens_t(z, params.shape), 0.0, 1.0)


def skew_normal_sf(x, params):
    # Computed directly rather than as 1 - cdf so right tails keep precision.
    z = (np.asarray(x, dtype=float) - params.location) / params.scale
    return np.clip(special.ndtr(-z) + 2.0 * special.owens_t(z, params.shape), 0.0, 1.0)


def bimodal_pdf(x, model):
    return model.p_nv0 * skew_normal_pdf(x, model.mode_nv0) + model.p_nvm * skew_normal_pdf(x, model.mode_nvm)


def bimodal_logpdf(x, model):
    with np.errstate(divide="ignore"):
        lp0 = math.log(model.p_nv0) if model.p_nv0 > 0 else -np.inf
        lpm = math.log(model.p_nvm) if model.p_nvm > 0 else -np.inf
    return np.logaddexp(lp0 + skew_normal_logpdf(x, model.mode_nv0), lpm + skew_normal_logpdf(x, model.mode_nvm))


def bimodal_cdf(x, model):
    return model.p_nv0 * skew_normal_cdf(x, model.mode_nv0) + model.p_nvm * skew_normal_cdf(x, model.mode_nvm)


# ---------------------------------------------------------------------------
# sampling

def sample_skew_normal(params, rng, size=None):
    """Draw from a skew normal via ``loc + scale (delta |Z1| + sqrt(1-delta^2) Z2)``."""
    delta = params.delta
    z1 = np.abs(rng.standard_normal(size))
    z2 = rng.standard_normal(size)
    return params.location + params.scale * (delta * z1 + math.sqrt(1.0 - delta**2) * z2)


def sample_counts(charge_state, model, rng, size=None):
    """Integrated counts for an NV known to be in ``charge_state``."""
    return sample_skew_normal(model.mode(charge_state), rng, size)


def sample_mixture(model, n, rng):
    """Draw ``n`` counts from the full mixture; returns ``(counts, charge_states)``."""
    states = (rng.random(n) >= model.p_nv0).astype(np.int8)
    counts = np.where(
        states == ChargeState.NVM,
        sample_skew_normal(model.mode_nvm, rng, n),
        sample_skew_normal(model.mode_nv0, rng, n),
    )
    return counts, states


# ---------------------------------------------------------------------------
# fitting

_PARAM_NAMES = ("p_nv0", "location_nv0", "scale_nv0", "shape_nv0", "location_nvm", "scale_nvm", "shape_nvm")
_SHAPE_BOUND = 25.0


@dataclass
class BimodalFit:
    """Fitted mixture together with its uncertainties and goodness of fit."""

    model: BimodalChargeModel
    stderr: dict
    chi2_dof: float
    method: str
    n_samples: int
    log_likelihood: float = None
    n_iterations: int = 0


def _theta_to_model(theta):
    lp, l0, ls0, a0, l1, ls1, a1 = theta
    p0 = special.expit(lp)
    m0 = SkewNormalParams(l0, math.exp(ls0), a0)
    m1 = SkewNormalParams(l1, math.exp(ls1), a1)
    if l1 < l0:
        return BimodalChargeModel(1.0 - p0, m1, m0)
    return BimodalChargeModel(p0, m0, m1)


def _model_to_theta(model):
    p = min(max(model.p_nv0, 1e-6), 1 - 1e-6)
    return np.array(
        [
            special.logit(p),
            model.mode_nv0.location,
            math.log(model.mode_nv0.scale),
            model.mode_nv0.shape,
            model.mode_nvm.location,
            math.log(model.mode_nvm.scale),
            model.mode_nvm.shape,
        ]
    )


def _mixture_logpdf_theta(x, theta):
    lp, l0, ls0, a0, l1, ls1, a1 = theta
    z0 = (x - l0) * math.exp(-ls0)
    z1 = (x - l1) * math.exp(-ls1)
    c = _LOG2 - 0.5 * math.log(2 * math.pi)
    g0 = c - ls0 - 0.5 * z0**2 + special.log_ndtr(a0 * z0)
    g1 = c - ls1 - 0.5 * z1**2 + special.log_ndtr(a1 * z1)
    return np.logaddexp(-np.logaddexp(0.0, -lp) + g0, -np.logaddexp(0.0, lp) + g1)


def _mixture_cdf_theta(x, theta):
    lp, l0, ls0, a0, l1, ls1, a1 = theta
    p0 = special.expit(lp)
    z0 = (x - l0) * math.exp(-ls0)
    z1 = (x - l1) * math.exp(-ls1)
    c0 = special.ndtr(z0) - 2.0 * special.owens_t(z0, a0)
    c1 = special.ndtr(z1) - 2.0 * special.owens_t(z1, a1)
    return p0 * c0 + (1.0 - p0) * c1


def _numerical_hessian(f, x, rel_step=1e-4):
    n = len(x)
    h = rel_step * np.maximum(1.0, np.abs(x))
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


def _stderr_from_cov(theta, cov):
    """Map covariance of the internal parametrization to natural-unit errors."""
    with np.errstate(invalid="ignore"):
        se = np.sqrt(np.diag(cov))
    swapped = theta[4] < theta[1]
    p = special.expit(theta[0])
    out = {
        "p_nv0": p * (1 - p) * se[0],
        "location_nv0": se[1],
        "scale_nv0": math.exp(theta[2]) * se[2],
        "shape_nv0": se[3],
        "location_nvm": se[4],
        "scale_nvm": math.exp(theta[5]) * se[5],
        "shape_nvm": se[6],
    }
    if swapped:
        out = {
            "p_nv0": out["p_nv0"],
            "location_nv0": out["location_nvm"],
            "scale_nv0": out["scale_nvm"],
            "shape_nv0": out["shape_nvm"],
            "location_nvm": out["location_nv0"],
            "scale_nvm": out["scale_nv0"],
            "shape_nvm": out["shape_nv0"],
        }
    return {k: float(v) for k, v in out.items()}


def initial_guess(hist):
    """Starting mixture from the two highest peaks of a 5-bin smoothed histogram."""
    counts = hist.bin_counts.astype(float)
    centers = hist.centers
    smooth = np.convolve(np.pad(counts, 2, mode="edge"), np.ones(5) / 5.0, mode="valid")
    if smooth.max() <= 0:
        raise DegenerateFitError("empty histogram")
    peaks, _ = find_peaks(np.pad(smooth, 1), prominence=0.05 * smooth.max())
    peaks = peaks - 1
    if len(peaks) < 2:
        raise DegenerateFitError("histogram shows fewer than two modes; supply init_guess")
    top = np.sort(peaks[np.argsort(smooth[peaks])[-2:]])
    widths = []
    for k in top:
        half = 0.5 * smooth[k]
        sides = []
        for step in (-1, 1):
            j = k
            while 0 <= j + step < len(smooth) and smooth[j] > half:
                j += step
                if j in top and j != k:
                    break
            if smooth[j] <= half:
                sides.append(abs(centers[j] - centers[k]))
        hwhm = min(sides) if sides else 2.0 * np.diff(hist.bin_edges).mean()
        widths.append(max(hwhm * _HWHM_TO_SIGMA, 0.5 * np.diff(hist.bin_edges).mean()))
    areas = [smooth[k] * w for k, w in zip(top, widths)]
    p0 = areas[0] / (areas[0] + areas[1])
    return BimodalChargeModel(
        p0,
        SkewNormalParams(centers[top[0]], widths[0], 0.0),
        SkewNormalParams(centers[top[1]], widths[1], 0.0),
    )


def _pearson_chi2(hist, theta, n_params=7):
    cdf = _mixture_cdf_theta(hist.bin_edges, theta)
    expected = hist.total_shots * np.diff(cdf)
    ok = expected >= 5.0
    dof = int(ok.sum()) - n_params
    if dof <= 0:
        return float("nan")
    chi2 = np.sum((hist.bin_counts[ok] - expected[ok]) ** 2 / expected[ok])
    return float(chi2 / dof)


def _bounds(theta0, span):
    lo = [-20.0, theta0[1] - span, theta0[2] - 8, -_SHAPE_BOUND, theta0[4] - span, theta0[5] - 8, -_SHAPE_BOUND]
    hi = [20.0, theta0[1] + span, theta0[2] + 4, _SHAPE_BOUND, theta0[4] + span, theta0[5] + 4, _SHAPE_BOUND]
    return list(zip(lo, hi))


def fit_bimodal(data, init_guess=None, max_iter=2000):
    """Fit the two-state skew-normal mixture.

    Parameters
    ----------
    data : CountHistogram or array_like
        Raw per-shot counts (fit by maximum likelihood) or a histogram (fit by
        Poisson-weighted least squares on the bin contents).
    init_guess : BimodalChargeModel, optional
        Starting point.  Derived from the histogram peaks when omitted.
    max_iter : int
        Iteration budget for the optimizer.

    Returns
    -------
    BimodalFit

    Raises
    ------
    DegenerateFitError
        Fewer than two modes and no ``init_guess``.
    FitError
        The optimizer did not converge; ``err.best`` is the last iterate.
    """
    if isinstance(data, CountHistogram):
        return _fit_histogram(data, init_guess, max_iter)
    samples = np.asarray(data, dtype=float).ravel()
    _check_finite(samples=samples)
    if samples.size < 1000:
        raise InsufficientSamplesError(f"need at least 1000 samples, got {samples.size}")
    hist = CountHistogram.from_samples(samples)
    # The likelihood is flat in the shape direction at shape=0, so start from
    # the binned fit instead of the raw peak guess.
    init_guess = _fit_histogram(hist, init_guess, max_iter).model
    theta0 = _model_to_theta(init_guess)
    span = 0.5 * (samples.max() - samples.min()) + 1.0

    def nll(theta):
        return -np.sum(_mixture_logpdf_theta(samples, theta))

    res = optimize.minimize(nll, theta0, method="L-BFGS-B", bounds=_bounds(theta0, span),
                            options={"maxiter": max_iter, "maxfun": 20 * max_iter})
    if not res.success and res.nit >= max_iter:
        raise FitError(f"maximum-likelihood fit did not converge: {res.message}", best=_theta_to_model(res.x))
    theta = res.x
    H = _numerical_hessian(nll, theta)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov = np.full((7, 7), np.nan)
    return BimodalFit(
        model=_theta_to_model(theta),
        stderr=_stderr_from_cov(theta, cov),
        chi2_dof=_pearson_chi2(hist, theta),
        method="mle",
        n_samples=int(samples.size),
        log_likelihood=float(-res.fun),
        n_iterations=int(res.nit),
    )


def _fit_histogram(hist, init_guess, max_iter):
    if hist.total_shots < 1000:
        raise InsufficientSamplesError(f"need at least 1000 shots, got {hist.total_shots}")
    if init_guess is None:
        init_guess = initial_guess(hist)
    theta = _model_to_theta(init_guess)
    obs = hist.bin_counts.astype(float)
    var = np.maximum(obs, 1.0)
    span = 0.5 * (hist.bin_edges[-1] - hist.bin_edges[0]) + 1.0
    lo, hi = np.array(_bounds(theta, span)).T

    def expected(th):
        return hist.total_shots * np.diff(_mixture_cdf_theta(hist.bin_edges, th))

    res = None
    # Neyman weights first, then reweight with the model expectation (Pearson).
    for _ in range(3):
        sigma = np.sqrt(var)
        res = optimize.least_squares(lambda th: (obs - expected(th)) / sigma, np.clip(theta, lo, hi),
                                     bounds=(lo, hi), max_nfev=max_iter, x_scale="jac")
        if res.status == 0:
            raise FitError("histogram fit exceeded its evaluation budget", best=_theta_to_model(res.x))
        theta = res.x
        var = np.maximum(expected(theta), 1.0)
    J = res.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((7, 7), np.nan)
    return BimodalFit(
        model=_theta_to_model(theta),
        stderr=_stderr_from_cov(theta, cov),
        chi2_dof=_pearson_chi2(hist, theta),
        method="histogram",
        n_samples=int(hist.total_shots),
        n_iterations=int(res.nfev),
    )


# ---------------------------------------------------------------------------
# thresholding

def misclassification(t, model):
    """``P(C > t and NV0) + P(C < t and NV-)``, i.e. one minus the success total."""
    return model.p_nv0 * skew_normal_sf(t, model.mode_nv0) + model.p_nvm * skew_normal_cdf(t, model.mode_nvm)


def success_probability(t, model):
    return 1.0 - misclassification(t, model)


def _search_window(model):
    lo = hi = None
    for m in (model.mode_nv0, model.mode_nvm):
        w = 10.0 * m.scale * (1.0 + abs(m.shape))
        lo = m.location - w if lo is None else min(lo, m.location - w)
        hi = m.location + w if hi is None else max(hi, m.location + w)
    return lo, hi


def optimal_threshold(model, n_grid=10_001):
    """Threshold maximizing ``p0 CDF0(t) + p- (1 - CDF-(t))``.

    The maximizer is a point where the weighted densities cross
    (``p0 g0 = p- g-``) going from NV0-dominated to NV--dominated.  All such
    crossings on a wide grid are refined with Brent's method on the log-density
    difference and the one with the smallest misclassification wins.
    """
    if model.mode_nv0 == model.mode_nvm:
        raise AmbiguousThresholdError("identical modes: every threshold is equally good")
    if not 0.0 < model.p_nv0 < 1.0:
        raise InvalidArgumentError("threshold requires 0 < p_nv0 < 1")
    lp0, lpm = math.log(model.p_nv0), math.log(model.p_nvm)

    def h(t):
        return lp0 + skew_normal_logpdf(t, model.mode_nv0) - lpm - skew_normal_logpdf(t, model.mode_nvm)

    lo, hi = _search_window(model)
    grid = np.linspace(lo, hi, n_grid)
    hv = h(grid)
    if np.ptp(hv) == 0.0:
        raise AmbiguousThresholdError("weighted densities never cross")
    candidates = []
    for k in np.nonzero((hv[:-1] > 0) & (hv[1:] <= 0))[0]:
        if hv[k + 1] == 0.0:
            candidates.append(grid[k + 1])
        else:
            candidates.append(optimize.brentq(h, grid[k], grid[k + 1], xtol=1e-12, rtol=1e-14))
    loss_grid = misclassification(grid, model)
    kbest = int(np.argmin(loss_grid))
    if not candidates:
        candidates.append(grid[kbest])
    losses = [float(misclassification(t, model)) for t in candidates]
    best = int(np.argmin(losses))
    t = float(candidates[best])
    if losses[best] > loss_grid[kbest] + 1e-12:
        a, b = grid[max(kbest - 1, 0)], grid[min(kbest + 1, n_grid - 1)]
        t = float(optimize.minimize_scalar(lambda x: misclassification(x, model), bounds=(a, b),
                                           method="bounded", options={"xatol": 1e-10}).x)
    f0 = float(skew_normal_cdf(t, model.mode_nv0))
    fm = float(skew_normal_sf(t, model.mode_nvm))
    return ThresholdResult(t, f0, fm, float(1.0 - misclassification(t, model)))


# ---------------------------------------------------------------------------
# histogram text format

def write_histogram(path, hist):
    """Two-column ``bin_center,count`` text."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# bin_center,count\n")
        for c, n in zip(hist.centers, hist.bin_counts):
            fh.write(f"{c:.9g},{int(n)}\n")


def read_histogram(path):
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] != 2 or len(data) < 2:
        raise InvalidArgumentError(f"{path}: expected two columns and at least two rows")
    centers, counts = data[:, 0], data[:, 1]
    mids = 0.5 * (centers[1:] + centers[:-1])
    edges = np.concatenate([[centers[0] - (mids[0] - centers[0])], mids, [centers[-1] + (centers[-1] - mids[-1])]])
    return CountHistogram(edges, np.round(counts).astype(np.int64))
