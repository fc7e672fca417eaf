"""Reference implementations written independently of the package code.

Each oracle takes a different route to the same quantity: a different
library, brute-force integration, or exact probability propagation instead of
a closed form.
"""
import math

import numpy as np
from scipy import integrate, stats


def skewnorm_pdf(x, loc, scale, shape):
    return stats.skewnorm.pdf(x, shape, loc=loc, scale=scale)


def skewnorm_cdf(x, loc, scale, shape):
    return stats.skewnorm.cdf(x, shape, loc=loc, scale=scale)


def skewnorm_moments(loc, scale, shape):
    m, v = stats.skewnorm.stats(shape, loc=loc, scale=scale, moments="mv")
    return float(m), float(math.sqrt(v))


def grid_threshold(p0, m0, m1, lo=-100.0, hi=300.0, step=0.005):
    """Brute-force argmax of the joint success probability on a fine grid."""
    t = np.arange(lo, hi, step)
    ok = p0 * skewnorm_cdf(t, *m0) + (1 - p0) * (1 - skewnorm_cdf(t, *m1))
    return float(t[np.argmax(ok)]), float(ok.max())


def voigt_by_convolution(x, gaussian_fwhm, lorentzian_fwhm):
    """Numerical convolution of a Gaussian and a Lorentzian, peak-normalized."""
    sigma = gaussian_fwhm / (2 * math.sqrt(2 * math.log(2)))
    gamma = lorentzian_fwhm / 2

    def conv(x0):
        f = lambda u: stats.norm.pdf(u, scale=sigma) * stats.cauchy.pdf(x0 - u, scale=gamma)
        return integrate.quad(f, -40 * sigma, 40 * sigma, points=[x0], limit=400, epsabs=1e-14)[0]

    return np.array([conv(v) for v in np.atleast_1d(x)]) / conv(0.0)


def conditional_chain_expectation(fm, f0, a, b, n_total, attempts):
    """Exact expected measured-NV- count by propagating one NV's joint law.

    The NV is read (NV- seen with prob ``fm``, NV0 misread with ``1 - f0``),
    then ionized with probability ``1 - s``, then re-initialized with success
    ``b`` if it was read as NV0.  ``s`` is fixed by requiring that an NV read
    as NV- is read as NV- again with probability ``a * fm`` when left alone.
    """
    s = (a * fm + f0 - 1) / (fm + f0 - 1)
    # joint probabilities over (charge before readout)
    p_nvm = 0.0
    out = []
    for i in range(attempts + 1):
        # read
        read_m_given_nvm = fm
        read_m_given_nv0 = 1 - f0
        joint = {
            (1, 1): p_nvm * read_m_given_nvm,
            (1, 0): p_nvm * (1 - read_m_given_nvm),
            (0, 1): (1 - p_nvm) * read_m_given_nv0,
            (0, 0): (1 - p_nvm) * (1 - read_m_given_nv0),
        }
        out.append(n_total * (joint[(1, 1)] + joint[(0, 1)]))
        # ionize, then conditional re-initialization
        kept_nvm = joint[(1, 1)] * s
        p_read0 = joint[(1, 0)] + joint[(0, 0)]
        p_nvm = kept_nvm + p_read0 * b
    return np.array(out)


def pearson_matrix(x):
    return np.corrcoef(np.asarray(x, dtype=float), rowvar=False)


def disk_pixel_count(radius):
    """Lattice points within a circle (Gauss circle problem), by enumeration."""
    r = int(math.ceil(radius))
    return sum(1 for i in range(-r, r + 1) for j in range(-r, r + 1) if i * i + j * j <= radius * radius)
