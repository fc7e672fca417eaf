"""Repeated readout with conditional charge re-initialization.

Each trial starts with every NV in NV0.  An attempt reads all NVs, records how
many were *measured* in NV-, then re-initializes only those measured in NV0.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np

from ..errors import InvalidArgumentError
from ..rng import substream


@dataclass
class InitTrajectory:
    """Per-attempt statistics of the number of NVs measured in NV-.

    Index 0 is the readout before any initialization attempt.
    """

    mean: np.ndarray
    variance: np.ndarray
    n_trials: int
    n_total: int

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.n_trials)

    @property
    def attempts(self):
        return np.arange(self.mean.size)


def _measure(rng, charge, rates):
    u = rng.random(charge.shape)
    return np.where(charge, u < rates.fidelity_nvm, u >= rates.fidelity_nv0)


def _conditional_block(rng, n_trials, n_total, attempts, rates):
    s = rates.physical_survival
    b = rates.init_success
    charge = np.zeros((n_trials, n_total), dtype=bool)
    out = np.empty((n_trials, attempts + 1))
    measured = None
    for i in range(attempts + 1):
        if i > 0:
            redo = ~measured
            charge = np.where(redo, rng.random(charge.shape) < b, charge)
        measured = _measure(rng, charge, rates)
        out[:, i] = measured.sum(axis=1)
        # ionization during the exposure shows up at the next readout
        charge &= rng.random(charge.shape) < s
    return out


def _run_blocks(fn, n_trials, seed, label, block_size, threads):
    jobs = [(j, min(block_size, n_trials - j * block_size)) for j in range(math.ceil(n_trials / block_size))]

    def work(job):
        j, m = job
        return fn(substream(seed, label, j), m)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(job) for job in jobs]
    return np.concatenate(parts)


def _trajectory(samples, n_total):
    n = samples.shape[0]
    var = samples.var(axis=0, ddof=1) if n > 1 else np.zeros(samples.shape[1])
    return InitTrajectory(samples.mean(axis=0), var, n, n_total)


def run_conditional_init(nvs, attempts, rates, n_trials, rng_seed, block_size=8192, threads=1):
    """Monte Carlo of the readout / conditional re-initialization loop.

    Parameters
    ----------
    nvs : sequence of NvCenter or int
        The NVs (only their number matters) or the number ``N`` directly.
    attempts : int
        Number of re-initialization attempts after the first readout.
    rates : RatesConfig
    n_trials : int
    rng_seed : int

    Returns
    -------
    InitTrajectory
        ``attempts + 1`` entries; entry ``i`` follows ``i`` attempts.

    Notes
    -----
    The NV- survival per readout is ``rates.physical_survival``, chosen so that
    the expected trajectory equals the closed-form four-term recursion with
    survival ``rates.survival_nvm``.
    """
    if attempts < 1:
        raise InvalidArgumentError("attempts must be >= 1")
    if n_trials < 1:
        raise InvalidArgumentError("n_trials must be >= 1")
    n_total = nvs if isinstance(nvs, (int, np.integer)) else len(nvs)
    samples = _run_blocks(lambda rng, m: _conditional_block(rng, m, n_total, attempts, rates),
                          n_trials, rng_seed, "conditional", block_size, threads)
    return _trajectory(samples, n_total)


def run_unconditional_init(nvs, rates, n_trials, rng_seed, block_size=8192, threads=1):
    """One global initialization attempt on all NVs followed by one readout."""
    n_total = nvs if isinstance(nvs, (int, np.integer)) else len(nvs)

    def block(rng, m):
        charge = rng.random((m, n_total)) < rates.init_success
        return _measure(rng, charge, rates).sum(axis=1)[:, None].astype(float)

    samples = _run_blocks(block, n_trials, rng_seed, "unconditional", block_size, threads)
    return _trajectory(samples, n_total)
