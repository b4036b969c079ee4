"""Dendrite-prediction training of the two-compartment network.

Rates passed between layers are in spikes per ms, the time unit of every
membrane equation here, so the network layers carry r_max = 0.25 /ms
(250 Hz).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit
from .neuro import (G_B, G_L, R_MAX, TAU_L, CompartmentLayer, ForwardTrace, layer_forward,
                    sigmoid, sigmoid_prime)

E_EXC = 8.0
E_INH = -8.0
R_B = 1.0
MS_PER_S = 1000.0


@dataclass
class TeachingSignal:
    v_inject: np.ndarray
    label: np.ndarray
    E_E: float = E_EXC
    E_I: float = E_INH
    r_B: float = R_B


def teaching_signal(label, v_soma, E_E: float = E_EXC, E_I: float = E_INH,
                    r_B: float = R_B, n_classes: int = 10) -> TeachingSignal:
    """Excitatory drive toward E_E on the label unit, inhibitory elsewhere."""
    v_soma = np.asarray(v_soma, dtype=np.float64)
    label = np.asarray(label)
    if np.any(label < 0) or np.any(label >= n_classes):
        raise ValueError(f"label outside [0, {n_classes})")
    is_label = np.arange(v_soma.shape[-1]) == label[..., None]
    current = np.where(is_label, E_E - v_soma, E_I - v_soma)
    return TeachingSignal(v_inject=r_B * current, label=label, E_E=E_E, E_I=E_I, r_B=r_B)


def nudged_soma(v_basal, v_inject, layer: CompartmentLayer):
    """Fixed point of tau_L dV/dt = -V + (g_B/g_L)(V_b - V) + V_I - V."""
    ratio = layer.g_B / layer.g_L
    return (ratio * np.asarray(v_basal) + np.asarray(v_inject)) / (2.0 + ratio)


def loss(v_nudged, v_star, r_max: float = R_MAX) -> float:
    diff = r_max * sigmoid(v_nudged) - r_max * sigmoid(v_star)
    return float(0.5 * np.sum(diff * diff))


def output_delta(v_nudged, v_star, layer: CompartmentLayer):
    return layer.r_max * layer.soma_gain * (sigmoid(v_star) - sigmoid(v_nudged)) * sigmoid_prime(v_star)


def grads_output(v_nudged, v_star, hidden_rates, layer: CompartmentLayer):
    """(delta, dW, db) of the output rule; batched inputs give batch means.

    delta_i = r_max g_B/(g_B+g_L) [s(V*_i) - s(V_i)] s'(V*_i), dW_ij = delta_i r_j.
    """
    delta = output_delta(v_nudged, v_star, layer)
    rates = np.asarray(hidden_rates, dtype=np.float64)
    if delta.shape[:-1] != rates.shape[:-1] or delta.shape[-1] != layer.n_out \
            or rates.shape[-1] != layer.n_in:
        raise ValueError("inconsistent shapes for the output gradient")
    if delta.ndim == 1:
        return delta, np.outer(delta, rates), delta.copy()
    n = delta.shape[0]
    return delta, delta.T @ rates / n, delta.mean(axis=0)


def grads_hidden(delta, output_weights, hidden: ForwardTrace, psp, layer: CompartmentLayer):
    """(dW, db) of the hidden rule, sum_k delta_k w_ki r_max g_B/(g_B+g_L) s'(V_i) psp_j."""
    delta = np.asarray(delta, dtype=np.float64)
    psp = np.asarray(psp, dtype=np.float64)
    w = np.asarray(output_weights, dtype=np.float64)
    if w.shape[0] != delta.shape[-1] or w.shape[1] != layer.n_out or psp.shape[-1] != layer.n_in:
        raise ValueError("inconsistent shapes for the hidden gradient")
    back = (delta @ w) * layer.r_max * layer.soma_gain * sigmoid_prime(hidden.v_soma)
    if back.ndim == 1:
        return np.outer(back, psp), back
    n = back.shape[0]
    return back.T @ psp / n, back.mean(axis=0)


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def ensure(self, params) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(self.m) != len(params) or any(m.shape != p.shape for m, p in zip(self.m, params)):
            raise ValueError("Adam moments do not match the parameters")


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam, updating ``params`` and ``state`` in place."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes differ")
    state.ensure(params)
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------


@dataclass
class Metrics:
    accuracy: float
    n_correct: int
    n_total: int
    loss_mean: float = float("nan")

    def __post_init__(self):
        if not 0 <= self.n_correct <= self.n_total:
            raise ValueError("n_correct must lie in [0, n_total]")


@dataclass
class Network:
    hidden: CompartmentLayer
    output: CompartmentLayer
    E_E: float = E_EXC
    E_I: float = E_INH
    r_B: float = R_B

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.hidden.n_in, self.hidden.n_out, self.output.n_out

    @property
    def params(self) -> list[np.ndarray]:
        return [self.hidden.weights, self.hidden.bias, self.output.weights, self.output.bias]

    def hyperparameters(self) -> dict:
        h = self.hidden
        return {"g_B": h.g_B, "g_L": h.g_L, "tau_L": h.tau_L, "r_max": h.r_max,
                "E_E": self.E_E, "E_I": self.E_I, "r_B": self.r_B}

    @classmethod
    def from_arrays(cls, w_hidden, b_hidden, w_out, b_out, g_B=G_B, g_L=G_L, tau_L=TAU_L,
                    r_max=R_MAX / MS_PER_S, E_E=E_EXC, E_I=E_INH, r_B=R_B) -> "Network":
        kw = dict(g_B=g_B, g_L=g_L, tau_L=tau_L, r_max=r_max)
        return cls(CompartmentLayer(w_hidden, b_hidden, **kw), CompartmentLayer(w_out, b_out, **kw),
                   E_E=E_E, E_I=E_I, r_B=r_B)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def forward(self, psp) -> tuple[ForwardTrace, ForwardTrace]:
        h = layer_forward(psp, self.hidden)
        return h, layer_forward(h.rates, self.output)


def init_network(n_in: int = 784, n_hidden: int = 500, n_out: int = 10, seed: int = 0,
                 r_max_hz: float = R_MAX, **hyper) -> Network:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng([int(seed), 0x1A17])
    a1 = np.sqrt(6.0 / (n_in + n_hidden))
    a2 = np.sqrt(6.0 / (n_hidden + n_out))
    return Network.from_arrays(rng.uniform(-a1, a1, (n_hidden, n_in)), np.zeros(n_hidden),
                               rng.uniform(-a2, a2, (n_out, n_hidden)), np.zeros(n_out),
                               r_max=r_max_hz / MS_PER_S, **hyper)


def predict_batch(net: Network, psp, chunk: int = 1024) -> np.ndarray:
    psp = np.atleast_2d(np.asarray(psp, dtype=np.float64))
    out = np.empty(psp.shape[0], dtype=np.int64)
    for lo in range(0, psp.shape[0], chunk):
        _, o = net.forward(psp[lo:lo + chunk])
        # sigma is monotone, so this is the argmax of the rates without the
        # ties that saturation produces in floating point; first max wins
        out[lo:lo + chunk] = np.argmax(o.v_soma, axis=1)
    return out


def predict(net: Network, sample) -> int:
    """Class with the highest output rate, lowest index on ties."""
    return int(predict_batch(net, np.asarray(sample)[None])[0])


def evaluate(net: Network, psp, labels) -> Metrics:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    n_correct = int(np.sum(predict_batch(net, psp) == labels))
    return Metrics(n_correct / labels.size, n_correct, int(labels.size))


def batch_gradients(net: Network, psp, labels):
    """Rule gradients averaged over a batch, plus summed loss and hits."""
    h, o = net.forward(psp)
    teach = teaching_signal(labels, o.v_soma, net.E_E, net.E_I, net.r_B, n_classes=net.output.n_out)
    v_nudged = nudged_soma(o.v_basal, teach.v_inject, net.output)
    delta, gw_o, gb_o = grads_output(v_nudged, o.v_soma, h.rates, net.output)
    gw_h, gb_h = grads_hidden(delta, net.output.weights, h, psp, net.hidden)
    batch_loss = loss(v_nudged, o.v_soma, net.output.r_max)
    hits = int(np.sum(np.argmax(o.v_soma, axis=-1) == labels))
    return [gw_h, gb_h, gw_o, gb_o], batch_loss, hits


def batch_loss(net: Network, psp, labels) -> float:
    """Summed soma-dendrite error of a batch at the current parameters."""
    _, o = net.forward(psp)
    teach = teaching_signal(labels, o.v_soma, net.E_E, net.E_I, net.r_B, n_classes=net.output.n_out)
    return loss(nudged_soma(o.v_basal, teach.v_inject, net.output), o.v_soma, net.output.r_max)


def finite_difference_gradients(net: Network, psp, labels, h: float = 1e-6) -> list[np.ndarray]:
    """Central-difference gradient of the mean batch loss, for comparison only.

    Training never uses this: the rule differentiates through V* alone and
    the loss depends on the parameters through both V and V*. Cost is two
    forward passes per parameter, so keep the network small.
    """
    psp = np.atleast_2d(np.asarray(psp, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    n = labels.size
    out = []
    for p in net.params:
        g = np.empty_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = batch_loss(net, psp, labels)
            flat[i] = old - h
            down = batch_loss(net, psp, labels)
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * h * n)
        out.append(g)
    return out


def _epoch_numpy(net, psp, labels, order, batch_size, opt):
    loss_sum, hits = 0.0, 0
    for lo in range(0, order.size, batch_size):
        idx = order[lo:lo + batch_size]
        grads, bl, bh = batch_gradients(net, psp[idx], labels[idx])
        adam_step(net.params, grads, opt)
        loss_sum += bl
        hits += bh
    return loss_sum, hits


@njit
def _adam_update(p, g, m, v, scale, lr, beta1, beta2, eps, c1, c2):
    # consumes the summed gradient g (scaled to a mean) and zeroes it
    pf = p.reshape(-1)
    gf = g.reshape(-1)
    mf = m.reshape(-1)
    vf = v.reshape(-1)
    for i in range(pf.shape[0]):
        gi = gf[i] * scale
        gf[i] = 0.0
        mi = mf[i] * beta1 + (1.0 - beta1) * gi
        vi = vf[i] * beta2 + (1.0 - beta2) * (gi * gi)
        mf[i] = mi
        vf[i] = vi
        pf[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


@njit
def _sig(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit
def _epoch_nb(psp, labels, order, batch_size, w1, b1, w2, b2,
              mw1, vw1, mb1, vb1, mw2, vw2, mb2, vb2, step,
              lr, beta1, beta2, eps, gain_h, gain_o, rmax_h, rmax_o, ratio_o,
              e_exc, e_inh, r_b):
    n_hidden, n_in = w1.shape
    n_out = w2.shape[0]
    gw1 = np.zeros_like(w1)
    gb1 = np.zeros_like(b1)
    gw2 = np.zeros_like(w2)
    gb2 = np.zeros_like(b2)
    v1 = np.empty(n_hidden)
    r1 = np.empty(n_hidden)
    vs = np.empty(n_out)
    delta = np.empty(n_out)
    back = np.empty(n_hidden)
    nz = np.empty(n_in, dtype=np.int64)
    loss_sum = 0.0
    hits = 0
    n = order.shape[0]
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        for pos in range(lo, hi):
            s = order[pos]
            x = psp[s]
            n_nz = 0
            for j in range(n_in):
                if x[j] != 0.0:
                    nz[n_nz] = j
                    n_nz += 1
            for i in range(n_hidden):
                acc = 0.0
                for q in range(n_nz):
                    acc += w1[i, nz[q]] * x[nz[q]]
                v1[i] = gain_h * (acc + b1[i])
                r1[i] = rmax_h * _sig(v1[i])
            best = 0
            for k in range(n_out):
                acc = 0.0
                for i in range(n_hidden):
                    acc += w2[k, i] * r1[i]
                vbk = acc + b2[k]
                vs[k] = gain_o * vbk
                if vs[k] > vs[best]:
                    best = k
                target = e_exc if k == labels[s] else e_inh
                vn = (ratio_o * vbk + r_b * (target - vs[k])) / (2.0 + ratio_o)
                ss = _sig(vs[k])
                sn = _sig(vn)
                loss_sum += 0.5 * (rmax_o * sn - rmax_o * ss) ** 2
                delta[k] = rmax_o * gain_o * (ss - sn) * ss * (1.0 - ss)
            if best == labels[s]:
                hits += 1
            for i in range(n_hidden):
                acc = 0.0
                for k in range(n_out):
                    acc += delta[k] * w2[k, i]
                    gw2[k, i] += delta[k] * r1[i]
                sh = _sig(v1[i])
                back[i] = acc * rmax_h * gain_h * sh * (1.0 - sh)
                gb1[i] += back[i]
                for q in range(n_nz):
                    gw1[i, nz[q]] += back[i] * x[nz[q]]
            for k in range(n_out):
                gb2[k] += delta[k]
        inv = 1.0 / (hi - lo)
        step += 1
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
        _adam_update(w1, gw1, mw1, vw1, inv, lr, beta1, beta2, eps, c1, c2)
        _adam_update(b1, gb1, mb1, vb1, inv, lr, beta1, beta2, eps, c1, c2)
        _adam_update(w2, gw2, mw2, vw2, inv, lr, beta1, beta2, eps, c1, c2)
        _adam_update(b2, gb2, mb2, vb2, inv, lr, beta1, beta2, eps, c1, c2)
    return step, loss_sum, hits


def _epoch_compiled(net, psp, labels, order, batch_size, opt):
    opt.ensure(net.params)
    h, o = net.hidden, net.output
    step, loss_sum, hits = _epoch_nb(
        np.ascontiguousarray(psp, dtype=np.float64), np.ascontiguousarray(labels, dtype=np.int64),
        np.ascontiguousarray(order, dtype=np.int64), int(batch_size),
        h.weights, h.bias, o.weights, o.bias,
        opt.m[0], opt.v[0], opt.m[1], opt.v[1], opt.m[2], opt.v[2], opt.m[3], opt.v[3],
        opt.step, opt.lr, opt.beta1, opt.beta2, opt.eps,
        h.soma_gain, o.soma_gain, h.r_max, o.r_max, o.g_B / o.g_L,
        net.E_E, net.E_I, net.r_B)
    opt.step = int(step)
    return float(loss_sum), int(hits)


def train_epoch(net: Network, psp, labels, batch_size: int, seed: int,
                opt: AdamState | None = None, backend: str | None = None) -> Metrics:
    """One shuffled pass of the dendrite-prediction rule with Adam.

    Parameters and ``opt`` are updated in place. Accuracy and loss are
    accumulated from each sample's forward pass before its batch update.
    """
    psp = np.asarray(psp, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot train on an empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    opt = opt if opt is not None else AdamState()
    for layer in (net.hidden, net.output):
        layer.weights = np.ascontiguousarray(layer.weights)
        layer.bias = np.ascontiguousarray(layer.bias)
    order = np.random.default_rng([int(seed), 0x5F1E]).permutation(labels.size)
    use_nb = _accel.USE_NUMBA if backend is None else backend == "numba"
    run = _epoch_compiled if use_nb else _epoch_numpy
    loss_sum, hits = run(net, psp, labels, order, batch_size, opt)
    return Metrics(hits / labels.size, hits, int(labels.size), loss_sum / labels.size)
