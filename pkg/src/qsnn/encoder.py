"""Superposition encoding of images into phase-shifted Poisson spike trains.

A pixel with clean intensity x and inversion angle theta is shown as the blend
x cos(theta) + (1 - x) sin(theta). Its phase is read from the measured
probabilities of the inverted and original outcomes, its rate is recovered
from the blend and that phase, and its spikes are confined to a T_sp window
whose start shifts with the phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, qcircuit
from .neuro import TCKKernel, make_kernel

HALF_PI = math.pi / 2
RATE_GUARD = 1e-6
AGGREGATION_MODES = ("per_pixel", "mean", "median")


@dataclass(frozen=True)
class EncodeConfig:
    T: float = 50.0
    T_sp: float = 20.0
    r_max: float = 250.0
    dt: float = 1.0
    measurement: str = "exact"
    shots: int = 100
    phase_median_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.T_sp <= self.T:
            raise ValueError("need 0 < T_sp <= T")
        if not 0 < self.dt <= self.T_sp:
            raise ValueError("need 0 < dt <= T_sp")
        if self.measurement not in ("exact", "sampled"):
            raise ValueError("measurement must be 'exact' or 'sampled'")
        if self.shots < 1:
            raise ValueError("shots must be positive")
        if self.spike_probability > 1.0:
            raise ValueError(
                f"r_max * dt = {self.spike_probability:.3g} spikes per step exceeds 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def n_window(self) -> int:
        return int(round(self.T_sp / self.dt))

    @property
    def spike_probability(self) -> float:
        """Per-step firing probability at rate fraction 1 (dt is in ms)."""
        return self.r_max * self.dt / 1000.0


@dataclass
class SuperposedImage:
    """Clean intensities, inversion angles and the blended intensities seen.

    Arrays share a shape whose last axis runs over pixels; a leading axis
    holds a batch of images.
    """

    clean: np.ndarray
    theta: np.ndarray
    blended: np.ndarray
    height: int = 28
    width: int = 28

    def __post_init__(self):
        if not (self.clean.shape == self.theta.shape == self.blended.shape):
            raise ValueError("clean, theta and blended must share a shape")

    @property
    def n_pixels(self) -> int:
        return self.clean.shape[-1]

    def __len__(self) -> int:
        return 1 if self.clean.ndim == 1 else self.clean.shape[0]

    def row(self, i: int) -> "SuperposedImage":
        if self.clean.ndim == 1:
            if i != 0:
                raise IndexError(i)
            return self
        return SuperposedImage(self.clean[i], self.theta[i], self.blended[i], self.height, self.width)


@dataclass
class PhaseEstimate:
    per_pixel: np.ndarray
    aggregated: np.ndarray | float
    mode: str

    def broadcast(self) -> np.ndarray:
        """Phase applied to every pixel, same shape as ``per_pixel``."""
        agg = np.asarray(self.aggregated, dtype=np.float64)
        if self.mode == "per_pixel":
            return agg
        if agg.ndim:
            agg = agg[..., None]
        return np.broadcast_to(agg, self.per_pixel.shape).copy()


@dataclass
class SpikeTensor:
    trains: np.ndarray  # (n_pixels, n_steps) uint8
    t0: np.ndarray  # (n_pixels,) start step of each window
    dt: float
    rates: np.ndarray = field(default=None)
    phase: np.ndarray = field(default=None)

    @property
    def n_pixels(self) -> int:
        return self.trains.shape[0]

    @property
    def n_steps(self) -> int:
        return self.trains.shape[1]


def _check_intensity(a, name):
    if np.any(a < 0.0) or np.any(a > 1.0) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must lie in [0, 1]")


def _check_angle(a, name="theta"):
    if np.any(a < 0.0) or np.any(a > HALF_PI) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must lie in [0, pi/2]")


def blend(clean, theta):
    clean = np.asarray(clean, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    return clean * np.cos(theta) + (1.0 - clean) * np.sin(theta)


def superpose(clean, theta, height: int = 28, width: int = 28) -> SuperposedImage:
    clean = np.asarray(clean, dtype=np.float64)
    theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), clean.shape).copy()
    if clean.shape != theta.shape:
        raise ValueError("clean and theta shapes differ")
    _check_intensity(clean, "clean")
    _check_angle(theta)
    return SuperposedImage(clean, theta, blend(clean, theta), height, width)


def pixel_phase(P, Q):
    """arctan(P / Q) with P the inverted-outcome probability; Q = 0 gives pi/2."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if np.any(P < 0) or np.any(Q < 0):
        raise ValueError("probabilities must be non-negative")
    if np.any(P + Q <= 0):
        raise ValueError("P + Q must be positive")
    out = np.arctan2(P, Q)
    return float(out) if out.ndim == 0 else out


def aggregate_phase(per_pixel, mode: str = "per_pixel", median_scale: float = 1.0) -> PhaseEstimate:
    """Combine per-pixel phases; mean and median reduce over the last axis.

    An even number of pixels takes the lower of the two middle values.
    """
    phases = np.asarray(per_pixel, dtype=np.float64)
    if phases.size == 0 or phases.shape[-1] == 0:
        raise ValueError("no phases to aggregate")
    if mode == "per_pixel":
        agg = phases.copy()
    elif mode == "mean":
        agg = phases.mean(axis=-1)
    elif mode == "median":
        k = (phases.shape[-1] - 1) // 2
        agg = median_scale * np.partition(phases, k, axis=-1)[..., k]
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}; choose from {AGGREGATION_MODES}")
    if np.ndim(agg) == 0:
        agg = float(agg)
    return PhaseEstimate(per_pixel=phases, aggregated=agg, mode=mode)


def recover_rate(blended, phi):
    """(blend - sin phi) / (cos phi - sin phi) clamped to [0, 1]; 0.5 near phi = pi/4."""
    blended = np.asarray(blended, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    s, c = np.sin(phi), np.cos(phi)
    denom = c - s
    singular = np.abs(denom) < RATE_GUARD
    safe = np.where(singular, 1.0, denom)
    rate = np.where(singular, 0.5, (blended - s) / safe)
    rate = np.clip(rate, 0.0, 1.0) + 0.0  # no negative zeros
    return float(rate) if rate.ndim == 0 else rate


def window_start(phi, cfg: EncodeConfig):
    """Start step of the spiking window, nearest step to phi/(pi/2) * (T - T_sp)."""
    phi = np.asarray(phi, dtype=np.float64)
    t0 = np.rint(phi / HALF_PI * (cfg.T - cfg.T_sp) / cfg.dt).astype(np.int64)
    return int(t0) if t0.ndim == 0 else t0


def gen_spike_train(rate: float, phi: float, cfg: EncodeConfig, seed: int,
                    sample: int = 0, pixel: int = 0) -> np.ndarray:
    """One binary train of length T/dt.

    The random stream is keyed on (seed, sample, pixel), so this returns
    exactly the train :func:`encode_image` produces for that pixel.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    _check_angle(np.asarray(phi), "phi")
    rates = np.zeros(pixel + 1)
    rates[pixel] = rate
    t0 = np.zeros(pixel + 1, dtype=np.int64)
    t0[pixel] = window_start(phi, cfg)
    raster = kernels.spike_raster(rates, t0, sample, seed, cfg.n_window,
                                  cfg.spike_probability, cfg.n_steps)
    return raster[pixel]


def measured_probabilities(theta, cfg: EncodeConfig, seed: int, sample_ids) -> tuple[np.ndarray, np.ndarray]:
    """(P, Q) per pixel: closed form, or shot estimates seeded per sample."""
    if cfg.measurement == "exact":
        return qcircuit.exact_probabilities(theta)
    theta = np.atleast_2d(theta)
    P = np.empty_like(theta)
    for row, sid in enumerate(np.atleast_1d(sample_ids)):
        rng = np.random.default_rng([int(seed), int(sid), 0x5155])
        P[row], _ = qcircuit.sample_probabilities(theta[row], cfg.shots, rng)
    return P, 1.0 - P


def estimate_phase(img: SuperposedImage, mode: str, cfg: EncodeConfig, seed: int,
                   sample_ids) -> PhaseEstimate:
    P, Q = measured_probabilities(img.theta, cfg, seed, sample_ids)
    P = P.reshape(img.theta.shape)
    Q = Q.reshape(img.theta.shape)
    return aggregate_phase(pixel_phase(P, Q), mode, cfg.phase_median_scale)


def rates_and_offsets(img: SuperposedImage, mode: str, cfg: EncodeConfig, seed: int, sample_ids):
    phase = estimate_phase(img, mode, cfg, seed, sample_ids)
    phi = phase.broadcast()
    return recover_rate(img.blended, phi), window_start(phi, cfg), phi


def encode_image(img: SuperposedImage, mode: str, cfg: EncodeConfig, seed: int,
                 sample_id: int = 0) -> SpikeTensor:
    """Full spike raster for one image."""
    if img.clean.ndim != 1:
        raise ValueError("encode_image takes a single image; use encode_psp for batches")
    rates, t0, phi = rates_and_offsets(img, mode, cfg, seed, [sample_id])
    raster = kernels.spike_raster(rates, t0, sample_id, seed, cfg.n_window,
                                  cfg.spike_probability, cfg.n_steps)
    return SpikeTensor(trains=raster, t0=np.asarray(t0), dt=cfg.dt, rates=rates, phase=phi)


def encode_psp(imgs: SuperposedImage, mode: str, cfg: EncodeConfig, seed: int,
               sample_ids=None, kernel: TCKKernel | None = None,
               backend: str | None = None) -> np.ndarray:
    """PSP feature matrix (n_images, n_pixels) without building spike rasters.

    Row i uses the same random stream as ``encode_image(imgs.row(i), ...,
    sample_id=sample_ids[i])`` followed by :func:`qsnn.neuro.psp`.
    """
    if imgs.clean.ndim == 1:
        imgs = SuperposedImage(imgs.clean[None], imgs.theta[None], imgs.blended[None],
                               imgs.height, imgs.width)
    n = imgs.clean.shape[0]
    if sample_ids is None:
        sample_ids = np.arange(n)
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    if kernel is None:
        kernel = make_kernel(dt=cfg.dt, T=cfg.T)
    rates, t0, _ = rates_and_offsets(imgs, mode, cfg, seed, sample_ids)
    weights = kernel.step_weights(cfg.n_steps)
    return kernels.window_psp(rates, t0, sample_ids, seed, cfg.n_window,
                              cfg.spike_probability, weights, backend=backend)
