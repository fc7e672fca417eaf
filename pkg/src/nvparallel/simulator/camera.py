"""Synthetic EMCCD frames for the image-analysis pipeline."""
from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from ..errors import GeometryError, InvalidArgumentError


@dataclass(frozen=True)
class CameraModel:
    """Region of interest of an EMCCD and the µm -> pixel mapping.

    Columns ``[0, mask_columns)`` are masked off optically and only ever see
    the baseline.  ``center_um`` is mapped to the center of the unmasked
    area.
    """

    width_px: int = 512
    height_px: int = 200
    psf_sigma_px: float = 2.0
    baseline_adu: float = 500.0
    baseline_step_adu: float = 0.2
    baseline_limits_adu: tuple = (480.0, 520.0)
    adu_per_photon: float = 20.0
    read_noise_adu: float = 4.0
    dead_time_ms: float = 12.0
    integration_radius_px: int = 12
    mask_columns: int = 64
    um_per_px: float = 0.06
    center_um: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.psf_sigma_px > 0 and self.adu_per_photon > 0 and self.um_per_px > 0):
            raise InvalidArgumentError("psf width, gain and pixel size must be > 0")
        if not 0 <= self.mask_columns < self.width_px:
            raise InvalidArgumentError("mask_columns must leave an open area")
        lo, hi = self.baseline_limits_adu
        if not lo <= self.baseline_adu <= hi:
            raise InvalidArgumentError("baseline_adu outside baseline_limits_adu")

    @property
    def shape(self):
        return (self.height_px, self.width_px)

    @property
    def mask_region(self):
        return (slice(None), slice(0, self.mask_columns))

    def to_px(self, position_um):
        """``(x, y)`` pixel coordinates of a sample-plane position."""
        x0 = 0.5 * (self.mask_columns + self.width_px - 1)
        y0 = 0.5 * (self.height_px - 1)
        u, v = position_um
        return (x0 + (u - self.center_um[0]) / self.um_per_px, y0 + (v - self.center_um[1]) / self.um_per_px)

    def check_inside(self, center_px):
        x, y = center_px
        r = self.integration_radius_px
        if x - r < self.mask_columns or x + r > self.width_px - 1 or y - r < 0 or y + r > self.height_px - 1:
            raise GeometryError(f"NV spot at ({x:.1f}, {y:.1f}) px is not inside the open region of interest")


def baseline_walk(cam, n_frames, rng):
    """Bounded Gaussian random walk of the baseline, one value per frame."""
    lo, hi = cam.baseline_limits_adu
    out = np.empty(n_frames)
    b = cam.baseline_adu
    for i in range(n_frames):
        out[i] = b
        b = b + cam.baseline_step_adu * rng.standard_normal()
        # reflect at the limits
        if b > hi:
            b = 2 * hi - b
        elif b < lo:
            b = 2 * lo - b
    return out


def _pixel_weights(center, sigma, lo, hi):
    edges = np.arange(lo, hi + 2) - 0.5
    cdf = special.ndtr((edges - center) / sigma)
    return np.diff(cdf)


def expected_photons(counts, centers_px, cam):
    """Noise-free photon image: pixel-integrated Gaussian spots."""
    img = np.zeros(cam.shape)
    half = max(16, math.ceil(8 * cam.psf_sigma_px))
    for c, (x, y) in zip(counts, centers_px):
        if c <= 0:
            continue
        x0, x1 = max(int(round(x)) - half, 0), min(int(round(x)) + half, cam.width_px - 1)
        y0, y1 = max(int(round(y)) - half, 0), min(int(round(y)) + half, cam.height_px - 1)
        wx = _pixel_weights(x, cam.psf_sigma_px, x0, x1)
        wy = _pixel_weights(y, cam.psf_sigma_px, y0, y1)
        img[y0:y1 + 1, x0:x1 + 1] += c * np.outer(wy, wx)
    img[:, :cam.mask_columns] = 0.0
    return img


def render_frame(shot, nvs, cam, rng, baseline_adu=None, noiseless=False):
    """Render one camera frame (ADU, float) for a shot.

    Parameters
    ----------
    shot : ShotRecord or array_like
        Per-NV photon counts, in the order of ``nvs``.
    nvs : sequence of NvCenter
    cam : CameraModel
    rng : numpy.random.Generator
    baseline_adu : float, optional
        Baseline for this frame; defaults to ``cam.baseline_adu``.
    noiseless : bool
        Skip photon shot noise and read noise.
    """
    counts = np.asarray(getattr(shot, "counts", shot), dtype=float)
    if counts.shape != (len(nvs),):
        raise InvalidArgumentError("one count per NV required")
    centers = [cam.to_px(nv.position_um) for nv in nvs]
    for c in centers:
        cam.check_inside(c)
    base = cam.baseline_adu if baseline_adu is None else baseline_adu
    photons = expected_photons(np.clip(counts, 0.0, None), centers, cam)
    if noiseless:
        return base + cam.adu_per_photon * photons
    photons = rng.poisson(photons)
    return base + cam.adu_per_photon * photons + cam.read_noise_adu * rng.standard_normal(cam.shape)


def pgm_bytes(frame):
    """Binary 16-bit PGM encoding (values rounded and clipped to uint16)."""
    img = np.clip(np.rint(np.asarray(frame, dtype=float)), 0, 65535).astype(">u2")
    h, w = img.shape
    return f"P5\n{w} {h}\n65535\n".encode("ascii") + img.tobytes()


def write_pgm(path, frame):
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(frame))


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P5":
        raise InvalidArgumentError("not a binary PGM file")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.uint16)
