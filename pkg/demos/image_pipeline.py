"""Render synthetic EMCCD frames for one shot and recover the photon counts.

Writes a 16-bit PGM of the frame to the working directory.
"""
import sys

import numpy as np

from nvparallel.analysis import estimate_baseline, integrate_counts
from nvparallel.simulator import CameraModel, correlation_experiment, default_layout, render_frame, write_pgm


def main(out="shot0.pgm", seed=5):
    nvs = default_layout()[:10]
    rec = correlation_experiment(default_layout(), "block", 1, seed)
    cam = CameraModel()
    rng = np.random.default_rng(seed)
    frame = render_frame(rec[0], nvs, cam, rng)
    write_pgm(out, frame)

    b = estimate_baseline(frame, cam.mask_region)
    print(f"baseline estimate {b:.2f} ADU (true {cam.baseline_adu})")
    print(f"{'NV':>3} {'true':>8} {'recovered':>10}")
    for nv, c in zip(nvs, rec.counts[0]):
        got = integrate_counts(frame, cam.to_px(nv.position_um), cam.integration_radius_px, b, cam.adu_per_photon)
        print(f"{nv.id:3d} {c:8.1f} {got:10.1f}")
    print(f"frame written to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
