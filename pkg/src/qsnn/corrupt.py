"""Corruption regimes expressed as per-pixel inversion-angle fields."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .encoder import HALF_PI, SuperposedImage, superpose

KINDS = ("invert", "flip", "awgn")


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    param: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption {self.kind!r}; choose from {KINDS}")
        if not math.isfinite(self.param):
            raise ValueError("corruption parameter must be finite")
        if self.kind == "invert" and not 0.0 <= self.param <= HALF_PI + 1e-12:
            raise ValueError("invert angle must lie in [0, pi/2]")
        if self.kind == "flip" and not 0.0 <= self.param <= 1.0:
            raise ValueError("flip probability must lie in [0, 1]")
        if self.kind == "awgn" and self.param < 0.0:
            raise ValueError("noise std must be non-negative")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "CorruptionSpec":
        """Read ``kind:param`` such as ``invert:pi/4``, ``flip:0.3`` or ``awgn:0.2``."""
        kind, _, value = text.partition(":")
        return cls(kind.strip(), parse_number(value), seed)


def parse_number(text: str) -> float:
    """Float literal, optionally written with ``pi`` (``3pi/16``, ``pi/2``)."""
    t = text.strip().lower().replace(" ", "")
    if "pi" not in t:
        return float(t)
    num, _, den = t.partition("/")
    coeff = num.replace("*", "").replace("pi", "")
    value = (float(coeff) if coeff else 1.0) * math.pi
    return value / float(den) if den else value


def _sample_rngs(seed: int, sample_ids, tag: int):
    for sid in sample_ids:
        yield np.random.default_rng([int(seed), int(sid), tag])


def _as_batch(img):
    img = np.asarray(img, dtype=np.float64)
    return img, img.ndim == 1


def invert_background(img, theta: float) -> SuperposedImage:
    """Same inversion angle on every pixel."""
    if not 0.0 <= theta <= HALF_PI + 1e-12:
        raise ValueError("theta must lie in [0, pi/2]")
    clean, _ = _as_batch(img)
    return superpose(clean, np.full(clean.shape, min(theta, HALF_PI)))


def flip_pixels(img, r: float, seed: int, sample_ids=None) -> SuperposedImage:
    """Invert each pixel independently with probability ``r``."""
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must lie in [0, 1]")
    clean, single = _as_batch(img)
    rows = clean[None] if single else clean
    if sample_ids is None:
        sample_ids = np.arange(rows.shape[0])
    theta = np.zeros_like(rows)
    for i, rng in enumerate(_sample_rngs(seed, sample_ids, 0xF11F)):
        theta[i] = np.where(rng.random(rows.shape[1]) < r, HALF_PI, 0.0)
    if single:
        theta = theta[0]
    return superpose(clean, theta)


def awgn(img, std: float, seed: int, sample_ids=None, tol: float = 1e-10) -> SuperposedImage:
    """Zero-mean Gaussian noise, clipped to [0, 1], with angles that reproduce it."""
    if std < 0:
        raise ValueError("std must be non-negative")
    clean, single = _as_batch(img)
    rows = clean[None] if single else clean
    if sample_ids is None:
        sample_ids = np.arange(rows.shape[0])
    noisy = rows.copy()
    if std > 0:
        for i, rng in enumerate(_sample_rngs(seed, sample_ids, 0xA3C7)):
            noisy[i] = np.clip(rows[i] + rng.normal(0.0, std, rows.shape[1]), 0.0, 1.0)
    theta = kernels.solve_blend_angle(rows, noisy, tol=tol)
    if single:
        noisy, theta = noisy[0], theta[0]
    return SuperposedImage(clean, theta, noisy)


def apply(spec: CorruptionSpec, img, sample_ids=None) -> SuperposedImage:
    if spec.kind == "invert":
        return invert_background(img, spec.param)
    if spec.kind == "flip":
        return flip_pixels(img, spec.param, spec.seed, sample_ids)
    return awgn(img, spec.param, spec.seed, sample_ids)
