"""Training runs and corruption sweeps built from the library pieces."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baseline, corrupt, dataio, fetch, trainer
from .config import ConfigError, RunConfig
from .corrupt import CorruptionSpec, parse_number
from .encoder import HALF_PI, encode_psp, superpose
from .neuro import make_kernel

QSNN_MODEL = "QS-SNN"
BASELINE_MODEL = "ANN"
_KIND_TAG = {"invert": 1, "flip": 2, "awgn": 3}
ENCODE_CHUNK = 1000


def derive_seed(seed: int, *tags: int) -> int:
    """Independent 63-bit child seed for a (seed, tags...) path."""
    state = np.random.SeedSequence([int(seed), *(int(t) for t in tags)]).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def _param_key(param: float) -> int:
    return int(round(param * 1e9))


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------


def default_grid(kind: str) -> list[float]:
    if kind == "invert":
        return [k * math.pi / 16 for k in range(9)]
    if kind in ("flip", "awgn"):
        return [k / 10 for k in range(11)]
    raise ConfigError(f"unknown noise kind {kind!r}")


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` inclusive of ``b`` (``0:pi/2:pi/16``), or a single value."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [parse_number(parts[0])]
        if len(parts) != 3:
            raise ValueError("expected a:b:step")
        lo, hi, step = (parse_number(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad grid {text!r}: need step > 0 and b >= a")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    values = [lo + k * step for k in range(count)]
    if abs(values[-1] - hi) < 1e-9 * max(1.0, abs(hi)):
        values[-1] = hi
    return values


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------


def load_data(cfg: RunConfig, which: str) -> dataio.Dataset:
    """Train or test split, subsampled per ``n_train`` / ``n_test``."""
    paths = fetch.dataset_paths(cfg.dataset, cfg.data_dir or None)
    if not fetch.is_present(cfg.dataset, cfg.data_dir or None):
        raise dataio.DataError(
            f"{cfg.dataset} not found under {paths['train_images'].parent}; run `qsnn fetch --dataset {cfg.dataset}`")
    prefix = "train" if which == "train" else "test"
    ds = dataio.load_idx(paths[f"{prefix}_images"], paths[f"{prefix}_labels"], f"{cfg.dataset}-{prefix}")
    n = cfg.n_train if which == "train" else cfg.n_test
    if n:
        if n > len(ds):
            raise ConfigError(f"n_{prefix} = {n} exceeds the {len(ds)} available samples")
        ds = dataio.split(ds, n, derive_seed(cfg.seed, 7, 0 if which == "train" else 1))
    return ds


def corrupted_images(images, spec: CorruptionSpec, sample_ids):
    """SuperposedImage for a batch under ``spec``; a zero parameter means clean."""
    return corrupt.apply(spec, images, sample_ids)


def encode_dataset(images, spec: CorruptionSpec, mode: str, cfg: RunConfig, seed: int,
                   backend: str | None = None) -> np.ndarray:
    """PSP features of every image, built in chunks to bound memory."""
    enc = cfg.encode_config()
    kernel = make_kernel(tau=cfg.tau, dt=cfg.dt, T=cfg.T)
    images = np.asarray(images, dtype=np.float64)
    out = np.empty_like(images)
    for lo in range(0, images.shape[0], ENCODE_CHUNK):
        ids = np.arange(lo, min(lo + ENCODE_CHUNK, images.shape[0]))
        sup = corrupted_images(images[ids], spec, ids)
        out[ids] = encode_psp(sup, mode, enc, seed, sample_ids=ids, kernel=kernel, backend=backend)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite PSP features")
    return out


def clean_spec() -> CorruptionSpec:
    return CorruptionSpec("invert", 0.0)


# --------------------------------------------------------------------------
# QS-SNN
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    train_accuracy: float


def build_network(cfg: RunConfig, n_in: int) -> trainer.Network:
    return trainer.init_network(n_in, cfg.hidden, 10, seed=cfg.seed, r_max_hz=cfg.r_max,
                                g_B=cfg.g_B, g_L=cfg.g_L, tau_L=cfg.tau_L,
                                E_E=cfg.E_E, E_I=cfg.E_I, r_B=cfg.r_B)


def train_qsnn(cfg: RunConfig, data: dataio.Dataset, log=None, backend: str | None = None):
    """Train on clean (theta = 0) encodings. Returns (network, epoch logs).

    With ``cfg.reencode`` each epoch draws fresh spike trains; otherwise one
    encoding is reused throughout.
    """
    net = build_network(cfg, data.images.shape[1])
    opt = trainer.AdamState(lr=cfg.eta)
    logs = []
    psp = None
    for epoch in range(cfg.epochs):
        if psp is None or cfg.reencode:
            psp = encode_dataset(data.images, clean_spec(), "per_pixel", cfg,
                                 derive_seed(cfg.seed, 1, epoch if cfg.reencode else 0), backend)
        m = trainer.train_epoch(net, psp, data.labels, cfg.batch_size, derive_seed(cfg.seed, 2, epoch),
                                opt, backend=backend)
        if not all(np.all(np.isfinite(p)) for p in net.params):
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        entry = EpochLog(epoch, m.loss_mean, m.accuracy)
        logs.append(entry)
        if log is not None:
            log(entry)
    return net, logs


def eval_qsnn(net: trainer.Network, data: dataio.Dataset, kind: str, param: float, cfg: RunConfig,
              backend: str | None = None) -> trainer.Metrics:
    tag = _KIND_TAG[kind]
    spec = CorruptionSpec(kind, param, derive_seed(cfg.seed, 3, tag, _param_key(param)))
    psp = encode_dataset(data.images, spec, cfg.aggregation(kind), cfg,
                         derive_seed(cfg.seed, 4, tag, _param_key(param)), backend)
    return trainer.evaluate(net, psp, data.labels)


def _run_grid(fn, grid, threads: int):
    if threads <= 1 or len(grid) <= 1:
        return [fn(p) for p in grid]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, grid))


def sweep_qsnn(net, data, kind: str, grid, cfg: RunConfig, threads: int = 1,
               backend: str | None = None) -> list[dataio.RunRecord]:
    if kind not in _KIND_TAG:
        raise ConfigError(f"unknown noise kind {kind!r}")

    def point(param):
        m = eval_qsnn(net, data, kind, param, cfg, backend)
        return dataio.RunRecord(cfg.dataset, QSNN_MODEL, kind, float(param), cfg.seed, m.n_total, m.accuracy)

    return dataio.sort_records(_run_grid(point, list(grid), threads))


# --------------------------------------------------------------------------
# baseline
# --------------------------------------------------------------------------


def train_baseline(cfg: RunConfig, data: dataio.Dataset, log=None) -> baseline.MLP:
    return baseline.fit(data.images, data.labels, n_hidden=cfg.baseline_hidden, epochs=cfg.baseline_epochs,
                        batch_size=cfg.baseline_batch_size, lr=cfg.eta, seed=cfg.seed, log=log)


def eval_baseline(model: baseline.MLP, data: dataio.Dataset, kind: str, param: float,
                  cfg: RunConfig) -> trainer.Metrics:
    """Accuracy on the numerically blended (or noisy) intensities."""
    tag = _KIND_TAG[kind]
    spec = CorruptionSpec(kind, param, derive_seed(cfg.seed, 3, tag, _param_key(param)))
    ids = np.arange(len(data))
    blended = corrupted_images(data.images, spec, ids).blended
    return baseline.evaluate(model, blended, data.labels)


def sweep_baseline(model, data, kind: str, grid, cfg: RunConfig, threads: int = 1) -> list[dataio.RunRecord]:
    if kind not in _KIND_TAG:
        raise ConfigError(f"unknown noise kind {kind!r}")

    def point(param):
        m = eval_baseline(model, data, kind, param, cfg)
        return dataio.RunRecord(cfg.dataset, BASELINE_MODEL, kind, float(param), cfg.seed, m.n_total, m.accuracy)

    return dataio.sort_records(_run_grid(point, list(grid), threads))


def demo_rows(image, theta: float, cfg: RunConfig, seed: int, pixels=None):
    """Per-pixel (index, x, theta, P, Q, phi, rate, t0) for one image at a uniform angle."""
    from .encoder import encode_image

    if not 0.0 <= theta <= HALF_PI + 1e-12:
        raise ConfigError("theta must lie in [0, pi/2]")
    sup = superpose(np.asarray(image, dtype=np.float64), np.full(np.shape(image), min(theta, HALF_PI)))
    enc = cfg.encode_config()
    spikes = encode_image(sup, "per_pixel", enc, seed)
    from .encoder import measured_probabilities

    P, Q = measured_probabilities(sup.theta[None], enc, seed, np.array([0]))
    idx = range(sup.clean.size) if pixels is None else pixels
    rows = [{"pixel": int(i), "x": float(sup.clean[i]), "theta": float(sup.theta[i]), "P": float(P[0, i]),
             "Q": float(Q[0, i]), "phi": float(spikes.phase[i]), "rate": float(spikes.rates[i]),
             "t0": float(spikes.t0[i])} for i in idx]
    return rows, spikes
