"""Time-differential synapse kernel and two-compartment membrane dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# default model constants
TAU_KERNEL = 4.0
TAU_L = 10.0
G_B = 0.6
G_L = 0.05
R_MAX = 250.0


def kappa(t, tau: float = TAU_KERNEL):
    """Odd kernel exp(-t/tau) for t > 0, -exp(t/tau) for t < 0, zero at 0."""
    t = np.asarray(t, dtype=np.float64)
    return np.sign(t) * np.exp(-np.abs(t) / tau)


@dataclass(frozen=True)
class TCKKernel:
    tau: float
    dt: float
    samples: np.ndarray  # kappa(k * dt) for k = -n .. n

    @property
    def half_width(self) -> int:
        return (self.samples.shape[0] - 1) // 2

    @property
    def lags(self) -> np.ndarray:
        n = self.half_width
        return np.arange(-n, n + 1) * self.dt

    def __call__(self, t):
        return kappa(t, self.tau)

    def step_weights(self, n_steps: int, center: float | None = None) -> np.ndarray:
        """Kernel value for a spike on each step of an ``n_steps`` window."""
        if center is None:
            center = grid_center(n_steps, self.dt)
        return kappa(np.arange(n_steps) * self.dt - center, self.tau)


def grid_center(n_steps: int, dt: float) -> float:
    """Midpoint of a window sampled at 0, dt, ..., (n_steps - 1) dt.

    Reversing a spike array maps step s to n_steps - 1 - s, which reflects
    its time about this point, so reversed trains keep the same PSP.
    """
    return (n_steps - 1) * dt / 2.0


def make_kernel(tau: float = TAU_KERNEL, dt: float = 1.0, T: float = 50.0) -> TCKKernel:
    if tau <= 0 or dt <= 0 or T <= 0:
        raise ValueError("tau, dt and T must be positive")
    n = int(round(T / dt))
    lags = np.arange(-n, n + 1) * dt
    samples = kappa(lags, tau)
    samples.setflags(write=False)
    return TCKKernel(tau=tau, dt=dt, samples=samples)


def psp(train, kernel: TCKKernel, T: float, center: float | None = None):
    """|sum of kernel over spikes|, the rectified post-synaptic drive.

    ``train`` is one binary train of length T/dt, or a (n_pixels, n_steps)
    raster. The kernel is referenced to ``center`` (default: the midpoint of
    the step grid, see :func:`grid_center`).
    """
    train = np.asarray(train)
    n_steps = int(round(T / kernel.dt))
    if train.shape[-1] != n_steps:
        raise ValueError(f"train length {train.shape[-1]} != T/dt = {n_steps}")
    weights = kernel.step_weights(n_steps, center)
    if center is None:
        # weights are exactly odd about the grid midpoint: fold the train so
        # mirrored spikes cancel before any rounding
        half = n_steps // 2
        x = train.astype(np.float64)
        folded = x[..., :half] - x[..., ::-1][..., :half]
        return np.abs(folded @ weights[:half])
    return np.abs(train.astype(np.float64) @ weights)


@dataclass
class CompartmentLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    g_B: float = G_B
    g_L: float = G_L
    tau_L: float = TAU_L
    r_max: float = R_MAX

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (out, in) and bias (out,)")
        if self.g_B <= 0 or self.g_L <= 0:
            raise ValueError("conductances must be positive")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def soma_gain(self) -> float:
        """g_B / (g_B + g_L): steady somatic fraction of the dendritic potential."""
        return self.g_B / (self.g_B + self.g_L)


@dataclass
class ForwardTrace:
    psp: np.ndarray
    v_basal: np.ndarray
    v_soma: np.ndarray
    rates: np.ndarray


def sigmoid(x):
    return expit(x)


def sigmoid_prime(x):
    s = expit(x)
    return s * (1.0 - s)


def steady_soma(v_basal, layer: CompartmentLayer):
    return layer.soma_gain * np.asarray(v_basal, dtype=np.float64)


def max_stable_dt(layer: CompartmentLayer) -> float:
    return 2.0 * layer.tau_L / (1.0 + layer.g_B / layer.g_L)


def euler_soma(v_basal, layer: CompartmentLayer, dt: float, duration: float):
    """Forward-Euler somatic potential after ``duration`` ms from V(0) = 0."""
    if dt <= 0 or dt > max_stable_dt(layer):
        raise ValueError(f"dt={dt} outside the stable range (0, {max_stable_dt(layer):.4g}]")
    vb = np.asarray(v_basal, dtype=np.float64)
    ratio = layer.g_B / layer.g_L
    v = np.zeros_like(vb)
    for _ in range(int(round(duration / dt))):
        v = v + dt / layer.tau_L * (-v + ratio * (vb - v))
    return v


def layer_forward(x, layer: CompartmentLayer) -> ForwardTrace:
    """Dendrite, steady soma and output rate for inputs of shape (in,) or (n, in)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.n_in:
        raise ValueError(f"input width {x.shape[-1]} != layer fan-in {layer.n_in}")
    v_basal = x @ layer.weights.T + layer.bias
    v_soma = steady_soma(v_basal, layer)
    return ForwardTrace(psp=x, v_basal=v_basal, v_soma=v_soma, rates=layer.r_max * sigmoid(v_soma))


def effective_time_constant(layer: CompartmentLayer) -> float:
    return layer.tau_L / (1.0 + layer.g_B / layer.g_L)


def relaxation(v_basal, layer: CompartmentLayer, t: float):
    """Closed-form V(t) from V(0) = 0 under constant dendritic drive."""
    return steady_soma(v_basal, layer) * (1.0 - math.exp(-t / effective_time_constant(layer)))
