"""Time to unit SNR for serial and parallel readout, and how far it scales."""
import numpy as np

from nvparallel import planning


def main(t_interrogate_s=100e-6):
    print(f"time to unit SNR at t_i = {t_interrogate_s * 1e6:.0f} us")
    print(f"{'n':>6} " + " ".join(f"{name:>24}" for name in planning.PRESET_NAMES))
    for n in (1, 10, 100, 1000):
        times = [float(planning.time_to_unit_snr_independent(planning.modality_preset(m, t_interrogate_s), n))
                 for m in planning.PRESET_NAMES]
        print(f"{n:6d} " + " ".join(f"{t:24.4g}" for t in times))

    slow = planning.modality_preset("conventional-serial", t_interrogate_s)
    fast = planning.modality_preset("scc-parallel", t_interrogate_s)
    print(f"\nparallel SCC wins from n = {planning.crossover_n(slow, fast)}; "
          f"speedup {float(planning.speedup(slow, fast, 100)):.2f}x at n = 100")

    ser = planning.modality_preset("scc-serial", t_interrogate_s)
    for n in (10, 100):
        ts = float(planning.time_to_unit_snr_correlated(ser, n, "serial"))
        tp = float(planning.time_to_unit_snr_correlated(fast, n, "parallel"))
        print(f"all pair correlations, n = {n:3d}: serial {ts:10.4g} s, parallel {tp:8.4g} s")

    print("\nbeam size that balances relaxation and AOD bandwidth (d = 0.59 / um^2, 520 nm AOD)")
    for name, row in planning.scalability_report().items():
        print(f"{name:>12}: s* = {row['beam_fraction']:.3f}, n* = {row['n_max']:.0f}")
    name, bound = planning.binding_bandwidth_bound(0.16)
    print(f"at d = 0.16 / um^2 the {name} AOD limits n to {bound}")


if __name__ == "__main__":
    main()
