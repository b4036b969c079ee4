"""Fully connected ReLU/softmax network trained on clean pixel intensities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .trainer import AdamState, Metrics, adam_step


@dataclass
class MLP:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, n_in: int = 784, n_hidden: int = 500, n_out: int = 10, seed: int = 0) -> "MLP":
        rng = np.random.default_rng([int(seed), 0xB45E])
        a1 = np.sqrt(6.0 / (n_in + n_hidden))
        a2 = np.sqrt(6.0 / (n_hidden + n_out))
        return cls(rng.uniform(-a1, a1, (n_hidden, n_in)), np.zeros(n_hidden),
                   rng.uniform(-a2, a2, (n_out, n_hidden)), np.zeros(n_out))

    @property
    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def logits(self, x):
        h = np.maximum(x @ self.w1.T + self.b1, 0.0)
        return h @ self.w2.T + self.b2

    def predict(self, x, chunk: int = 2048) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.concatenate([np.argmax(self.logits(x[i:i + chunk]), axis=1)
                               for i in range(0, x.shape[0], chunk)])

    def gradients(self, x, y):
        pre = x @ self.w1.T + self.b1
        h = np.maximum(pre, 0.0)
        z = h @ self.w2.T + self.b2
        n = x.shape[0]
        batch_loss = -float(np.sum(log_softmax(z, axis=1)[np.arange(n), y]))
        dz = softmax(z, axis=1)
        dz[np.arange(n), y] -= 1.0
        dz /= n
        dh = (dz @ self.w2) * (pre > 0)
        return [dh.T @ x, dh.sum(axis=0), dz.T @ h, dz.sum(axis=0)], batch_loss


def train_epoch(model: MLP, x, y, batch_size: int, seed: int, opt: AdamState) -> Metrics:
    order = np.random.default_rng([int(seed), 0xB5EF]).permutation(len(y))
    loss_sum, hits = 0.0, 0
    for lo in range(0, order.size, batch_size):
        idx = order[lo:lo + batch_size]
        hits += int(np.sum(np.argmax(model.logits(x[idx]), axis=1) == y[idx]))
        grads, bl = model.gradients(x[idx], y[idx])
        adam_step(model.params, grads, opt)
        loss_sum += bl
    return Metrics(hits / len(y), hits, len(y), loss_sum / len(y))


def evaluate(model: MLP, x, y) -> Metrics:
    hits = int(np.sum(model.predict(x) == y))
    return Metrics(hits / len(y), hits, len(y))


def fit(x, y, n_hidden: int = 500, epochs: int = 20, batch_size: int = 32, lr: float = 1e-3,
        seed: int = 0, log=None) -> MLP:
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    model = MLP.init(x.shape[1], n_hidden, 10, seed)
    opt = AdamState(lr=lr)
    for epoch in range(epochs):
        m = train_epoch(model, x, y, batch_size, seed + epoch, opt)
        if log is not None:
            log(epoch, m)
    return model
