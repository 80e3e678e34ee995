"""Synthetic vortex-street snapshot data with controllable rank and noise."""
from dataclasses import asdict, dataclass

import numpy as np

from .pod import DataMatrix


@dataclass(frozen=True)
class SyntheticSpec:
    """Traveling-wave stand-in for a wake behind a bluff body.

    ``n_v`` x ``n_h`` grid, flow along +x (columns). Mode pair j (0-based)
    has wavenumber ``2*pi/wavelength * (1 + j/4)``, amplitude
    ``amplitude/(1 + j)`` and a cross-stream envelope of two Gaussian rows
    whose relative sign alternates with j. ``noise_sigma`` is the white-noise
    standard deviation as a fraction of ``amplitude``.
    """

    n_v: int = 128
    n_h: int = 128
    snapshots: int = 512
    modes: int = 8
    convection_speed: float = 2.0
    wavelength: float = 64.0
    amplitude: float = 1.0
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("n_v", "n_h", "snapshots", "modes"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("convection_speed", "wavelength", "amplitude"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def grid_shape(self):
        return (self.n_v, self.n_h)

    @property
    def body_position(self):
        """(row, col) of the bluff body; the wake starts downstream of it."""
        return (self.n_v / 2.0, self.n_h / 5.0)

    def default_probes(self):
        """Four wake points, mimicking pressure taps downstream of the body."""
        yc, xc = self.body_position
        off = self.row_offset
        pts = [(yc - off, xc + 0.5 * (self.n_h - xc)), (yc + off, xc + 0.5 * (self.n_h - xc)),
               (yc, xc + 0.3 * (self.n_h - xc)), (yc, xc + 0.7 * (self.n_h - xc))]
        return [(int(round(i)), int(round(j))) for i, j in pts]

    @property
    def row_offset(self):
        # half the spacing between the two vortex rows (about 0.28 wavelengths in a stable street)
        return max(0.14 * self.wavelength, 1.0)

    def to_dict(self):
        return asdict(self)


def temporal_period(spec):
    """Snapshots after which the clean field repeats (all mode frequencies are multiples of the base / 4)."""
    return 4.0 * spec.wavelength / spec.convection_speed


def _spatial_modes(spec):
    y = np.arange(spec.n_v, dtype=np.float64)[:, None]
    x = np.arange(spec.n_h, dtype=np.float64)[None, :]
    yc, xc = spec.body_position
    off = spec.row_offset
    width = max(0.12 * spec.wavelength, 1.0)
    onset = 1.0 / (1.0 + np.exp(-(x - xc) / max(spec.wavelength / 8.0, 1e-9)))
    k0 = 2.0 * np.pi / spec.wavelength
    for j in range(spec.modes):
        kj = k0 * (1.0 + j / 4.0)
        upper = np.exp(-(((y - (yc - off)) / width) ** 2))
        lower = np.exp(-(((y - (yc + off)) / width) ** 2))
        env = (upper + (-1.0) ** j * lower) * onset
        amp = spec.amplitude / (1.0 + j)
        yield kj, amp * env * np.sin(kj * x), amp * env * np.cos(kj * x)


def clean_field(spec):
    """Noise-free n x m field, rank at most 2 * modes."""
    t = np.arange(spec.snapshots, dtype=np.float64)
    X = np.zeros((spec.n_v * spec.n_h, spec.snapshots))
    for kj, s_mode, c_mode in _spatial_modes(spec):
        w = kj * spec.convection_speed
        # sin(k x - w t) = sin(kx) cos(wt) - cos(kx) sin(wt)
        X += np.outer(s_mode.ravel(), np.cos(w * t)) - np.outer(c_mode.ravel(), np.sin(w * t))
    return X


def vortex_street(spec):
    """Return ``(clean, noisy)`` DataMatrix pair; noise is seeded by ``spec.seed``."""
    clean = clean_field(spec)
    noisy = clean
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        noisy = clean + spec.noise_sigma * spec.amplitude * rng.standard_normal(clean.shape)
    return DataMatrix(clean, grid_shape=spec.grid_shape), DataMatrix(noisy, grid_shape=spec.grid_shape)


def generate_vortex_street(spec):
    """Noisy synthetic snapshot matrix for ``spec``."""
    return vortex_street(spec)[1]
