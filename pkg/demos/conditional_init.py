"""Repeated readout with conditional charge re-initialization.

Simulates the readout / re-initialize-if-dark loop for ten NVs, compares the
Monte Carlo trajectory with the closed-form recursion, and refits the
recursion coefficients from the simulated means.
"""
import numpy as np

from nvparallel.analysis import fit_conditional_model, model_from_rates, conditional_model_predict
from nvparallel.simulator import REINIT_RATES, run_conditional_init, run_unconditional_init


def main(n_nvs=10, attempts=10, n_trials=100_000, seed=1):
    rates = REINIT_RATES
    traj = run_conditional_init(n_nvs, attempts, rates, n_trials, seed, threads=4)
    model = model_from_rates(rates, n_nvs)
    pred = conditional_model_predict(model, traj.attempts)

    print(f"rates: f-={rates.fidelity_nvm}, f0={rates.fidelity_nv0}, a={rates.survival_nvm}, b={rates.init_success}")
    print(f"{'attempt':>7} {'MC mean':>9} {'stderr':>8} {'closed form':>12} {'z':>6}")
    for i, (m, s, p) in enumerate(zip(traj.mean, traj.stderr, pred)):
        z = (m - p) / s if s > 0 else 0.0
        print(f"{i:7d} {m:9.4f} {s:8.4f} {p:12.4f} {z:6.2f}")

    fit = fit_conditional_model(traj.mean, n_nvs, sigma=traj.stderr)
    print(f"\nfitted c1 = {fit.model.c1:.4f} +- {fit.stderr['c1']:.4f}   (from rates: {model.c1:.4f})")
    print(f"fitted c2 = {fit.model.c2:.4f} +- {fit.stderr['c2']:.4f}   (from rates: {model.c2:.4f})")
    print(f"steady state {fit.model.steady_state:.3f} of {n_nvs}")

    base = run_unconditional_init(n_nvs, rates, n_trials, seed)
    print(f"one global attempt instead: {base.mean[0]:.3f} +- {base.stderr[0]:.3f}")
    return traj, fit


if __name__ == "__main__":
    main()
