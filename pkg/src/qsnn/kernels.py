"""Hot numeric kernels: counter-based spike sampling, windowed PSP, blend solve.

Each kernel exists twice: a numba ``@njit`` loop and a vectorised numpy
version. Both consume the same counter-based random stream (splitmix64 keyed
on seed, sample, pixel and step), so the two paths give bit-identical spike
trains and PSP sums. Which path runs is chosen by :mod:`qsnn._accel`.
"""

from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SEED_SALT = np.uint64(0x5851F42D4C957F2D)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_MASK64 = (1 << 64) - 1


def _pick(backend: str | None) -> bool:
    """Return True when the numba path should run."""
    if backend is None:
        return _accel.USE_NUMBA
    if backend == "numba":
        if not _accel.HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")


def seed_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & _MASK64)


# --------------------------------------------------------------------------
# splitmix64 counter stream
# --------------------------------------------------------------------------


@njit
def _mix_nb(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def pixel_keys(seed: int, sample_ids, n_pixels: int) -> np.ndarray:
    """Stream origin for every (sample, pixel) pair, shape (n_samples, n_pixels)."""
    sid = np.asarray(sample_ids, dtype=np.int64).astype(np.uint64)
    pix = np.arange(n_pixels, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h0 = _mix_np(np.array([seed_u64(seed) ^ _SEED_SALT], dtype=np.uint64))
        h1 = _mix_np(h0 + sid * GOLDEN)
        return _mix_np(h1[:, None] + pix[None, :] * GOLDEN)


def stream_uniforms(seed: int, sample_ids, n_pixels: int, n_draws: int) -> np.ndarray:
    """Uniform [0, 1) draws of shape (n_samples, n_pixels, n_draws)."""
    keys = pixel_keys(seed, sample_ids, n_pixels)
    steps = np.arange(1, n_draws + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        u = _mix_np(keys[..., None] + steps * GOLDEN)
    return (u >> _S11).astype(np.float64) * _INV53


# --------------------------------------------------------------------------
# windowed spike sampling and PSP
# --------------------------------------------------------------------------


@njit
def _window_psp_nb(rates, t0, sample_ids, seed, n_window, p_spike, step_kernel, out):
    h0 = _mix_nb(seed ^ _SEED_SALT)
    n_samples, n_pixels = rates.shape
    for n in range(n_samples):
        h1 = _mix_nb(h0 + np.uint64(sample_ids[n]) * GOLDEN)
        for p in range(n_pixels):
            prob = rates[n, p] * p_spike
            if prob <= 0.0:
                out[n, p] = 0.0
                continue
            state = _mix_nb(h1 + np.uint64(p) * GOLDEN)
            base = t0[n, p]
            acc = 0.0
            for k in range(n_window):
                state = state + GOLDEN
                u = np.float64(_mix_nb(state) >> _S11) * _INV53
                if u < prob:
                    acc += step_kernel[base + k]
            out[n, p] = abs(acc)
    return out


def _window_psp_np(rates, t0, sample_ids, seed, n_window, p_spike, step_kernel, chunk=256):
    n_samples, n_pixels = rates.shape
    out = np.empty((n_samples, n_pixels), dtype=np.float64)
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        u = stream_uniforms(seed, sample_ids[lo:hi], n_pixels, n_window)
        prob = rates[lo:hi] * p_spike
        base = t0[lo:hi]
        acc = np.zeros((hi - lo, n_pixels), dtype=np.float64)
        # sequential accumulation keeps the summation order of the compiled loop
        for k in range(n_window):
            acc += np.where(u[..., k] < prob, step_kernel[base + k], 0.0)
        acc[prob <= 0.0] = 0.0
        out[lo:hi] = np.abs(acc)
    return out


def window_psp(
    rates: np.ndarray,
    t0: np.ndarray,
    sample_ids: np.ndarray,
    seed: int,
    n_window: int,
    p_spike: float,
    step_kernel: np.ndarray,
    backend: str | None = None,
) -> np.ndarray:
    """Sample windowed Bernoulli spike trains and reduce them to |sum kappa|.

    ``rates`` and ``t0`` have shape (n_samples, n_pixels); spikes of pixel p
    can only fall on steps ``t0 .. t0 + n_window - 1`` and each fires with
    probability ``rate * p_spike``. ``step_kernel[s]`` is the kernel value
    for a spike on step ``s``. The full spike raster is never materialised.
    """
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    t0 = np.ascontiguousarray(t0, dtype=np.int64)
    sample_ids = np.ascontiguousarray(sample_ids, dtype=np.int64)
    step_kernel = np.ascontiguousarray(step_kernel, dtype=np.float64)
    if rates.shape != t0.shape or rates.ndim != 2:
        raise ValueError("rates and t0 must share a 2-d shape")
    if sample_ids.shape != (rates.shape[0],):
        raise ValueError("one sample id per row is required")
    if t0.size and (t0.min() < 0 or t0.max() + n_window > step_kernel.shape[0]):
        raise ValueError("spike window exceeds the simulated interval")
    if _pick(backend):
        out = np.empty(rates.shape, dtype=np.float64)
        return _window_psp_nb(rates, t0, sample_ids, seed_u64(seed), int(n_window),
                              float(p_spike), step_kernel, out)
    return _window_psp_np(rates, t0, sample_ids, seed, int(n_window), float(p_spike), step_kernel)


@njit
def _spike_raster_nb(rates, t0, sample_id, seed, n_window, p_spike, out):
    h0 = _mix_nb(seed ^ _SEED_SALT)
    h1 = _mix_nb(h0 + np.uint64(sample_id) * GOLDEN)
    for p in range(rates.shape[0]):
        prob = rates[p] * p_spike
        if prob <= 0.0:
            continue
        state = _mix_nb(h1 + np.uint64(p) * GOLDEN)
        for k in range(n_window):
            state = state + GOLDEN
            u = np.float64(_mix_nb(state) >> _S11) * _INV53
            if u < prob:
                out[p, t0[p] + k] = 1
    return out


def spike_raster(
    rates: np.ndarray,
    t0: np.ndarray,
    sample_id: int,
    seed: int,
    n_window: int,
    p_spike: float,
    n_steps: int,
    backend: str | None = None,
) -> np.ndarray:
    """Binary spike raster (n_pixels, n_steps) drawn from the same stream as
    :func:`window_psp`."""
    rates = np.ascontiguousarray(rates, dtype=np.float64).ravel()
    t0 = np.ascontiguousarray(t0, dtype=np.int64).ravel()
    if t0.size and (t0.min() < 0 or t0.max() + n_window > n_steps):
        raise ValueError("spike window exceeds the simulated interval")
    out = np.zeros((rates.shape[0], n_steps), dtype=np.uint8)
    if _pick(backend):
        return _spike_raster_nb(rates, t0, np.int64(sample_id), seed_u64(seed),
                                int(n_window), float(p_spike), out)
    u = stream_uniforms(seed, [sample_id], rates.shape[0], n_window)[0]
    spikes = u < (rates * p_spike)[:, None]
    rows, ks = np.nonzero(spikes)
    out[rows, t0[rows] + ks] = 1
    return out


# --------------------------------------------------------------------------
# blend equation solve: y = x cos(theta) + (1 - x) sin(theta)
# --------------------------------------------------------------------------


def _n_bisect(tol: float) -> int:
    return max(1, math.ceil(math.log2((math.pi / 2) / tol)))


@njit
def _solve_blend_nb(x, y, n_iter, out):
    half_pi = np.pi / 2
    for i in range(x.shape[0]):
        xi = x[i]
        yi = y[i]
        if yi == xi:
            out[i] = 0.0
            continue
        peak_at = math.atan2(1.0 - xi, xi)
        peak = math.sqrt(xi * xi + (1.0 - xi) * (1.0 - xi))
        if yi >= peak:
            out[i] = peak_at
        elif yi >= xi:
            lo = 0.0
            hi = peak_at
            for _ in range(n_iter):
                mid = 0.5 * (lo + hi)
                if xi * math.cos(mid) + (1.0 - xi) * math.sin(mid) < yi:
                    lo = mid
                else:
                    hi = mid
            out[i] = 0.5 * (lo + hi)
        elif yi >= 1.0 - xi:
            lo = peak_at
            hi = half_pi
            for _ in range(n_iter):
                mid = 0.5 * (lo + hi)
                if xi * math.cos(mid) + (1.0 - xi) * math.sin(mid) > yi:
                    lo = mid
                else:
                    hi = mid
            out[i] = 0.5 * (lo + hi)
        elif xi <= 1.0 - xi:
            out[i] = 0.0
        else:
            out[i] = half_pi
    return out


def _solve_blend_np(x, y, n_iter):
    peak_at = np.arctan2(1.0 - x, x)
    peak = np.sqrt(x * x + (1.0 - x) * (1.0 - x))
    rising = (y >= x) & (y < peak)
    falling = ~rising & (y < peak) & (y >= 1.0 - x)
    lo = np.where(rising, 0.0, peak_at)
    hi = np.where(rising, peak_at, np.pi / 2)
    sign = np.where(rising, 1.0, -1.0)
    active = rising | falling
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = sign * (x * np.cos(mid) + (1.0 - x) * np.sin(mid) - y) < 0.0
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    out = np.where(active, 0.5 * (lo + hi), 0.0)
    out = np.where(y >= peak, peak_at, out)
    unreachable = (y < np.minimum(x, 1.0 - x))
    out = np.where(unreachable, np.where(x <= 1.0 - x, 0.0, np.pi / 2), out)
    return np.where(y == x, 0.0, out)


def solve_blend_angle(x, y, tol: float = 1e-10, backend: str | None = None) -> np.ndarray:
    """Per-pixel angle reproducing an observed intensity ``y`` from clean ``x``.

    Takes the smallest angle in [0, pi/2] with ``x cos + (1 - x) sin == y``.
    Intensities above the reachable peak map to the peak's angle; intensities
    below both endpoints map to the endpoint with the nearer blend (ties go
    to 0). ``y == x`` always maps to exactly 0.
    """
    x_arr = np.asarray(x, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    if x_arr.shape != y_arr.shape:
        raise ValueError("x and y must have the same shape")
    xf = np.ascontiguousarray(x_arr.ravel())
    yf = np.ascontiguousarray(y_arr.ravel())
    n_iter = _n_bisect(tol)
    if _pick(backend):
        out = _solve_blend_nb(xf, yf, n_iter, np.empty_like(xf))
    else:
        out = _solve_blend_np(xf, yf, n_iter)
    return out.reshape(x_arr.shape)
