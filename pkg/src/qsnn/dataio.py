"""IDX dataset loading, subsetting, model files and result tables."""

from __future__ import annotations

import csv
import gzip
import io
import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
DEFAULT_ITEM_CAP = 10_000_000
GZIP_MAGIC = b"\x1f\x8b"


class DataError(Exception):
    """A dataset or model file could not be read."""


class IDXFormatError(DataError):
    pass


class ModelFormatError(DataError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, rows*cols) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    name: str = "dataset"
    rows: int = 28
    cols: int = 28

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("image and label counts differ")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def label_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    raw = path.read_bytes()
    if raw[:2] == GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise IDXFormatError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def _parse_header(raw: bytes, path, expected_magic: int, n_dims: int, cap: int):
    head = 4 + 4 * n_dims
    if len(raw) < head:
        raise IDXFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise IDXFormatError(f"{path}: bad magic number {magic:#010x}, expected {expected_magic:#010x}")
    dims = struct.unpack(">" + "I" * n_dims, raw[4:head])
    total = int(np.prod(dims, dtype=np.int64))
    if dims[0] > cap or total > cap * 1024:
        raise IDXFormatError(f"{path}: item count {dims[0]} exceeds cap {cap}")
    if len(raw) - head < total:
        raise IDXFormatError(f"{path}: truncated payload, {len(raw) - head} of {total} bytes")
    return dims, head


def read_idx_images(path, cap: int = DEFAULT_ITEM_CAP) -> np.ndarray:
    raw = _read_bytes(path)
    (n, rows, cols), head = _parse_header(raw, path, IMAGE_MAGIC, 3, cap)
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=head)
    return pixels.reshape(n, rows, cols)


def read_idx_labels(path, cap: int = DEFAULT_ITEM_CAP) -> np.ndarray:
    raw = _read_bytes(path)
    (n,), head = _parse_header(raw, path, LABEL_MAGIC, 1, cap)
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=head).astype(np.int64)


def load_idx(path_images, path_labels, name: str = "dataset", cap: int = DEFAULT_ITEM_CAP) -> Dataset:
    images = read_idx_images(path_images, cap)
    labels = read_idx_labels(path_labels, cap)
    if images.shape[0] != labels.shape[0]:
        raise IDXFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    n, rows, cols = images.shape
    return Dataset(images.reshape(n, rows * cols).astype(np.float64) / 255.0, labels, name, rows, cols)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    payload = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images.tobytes()
    _write_maybe_gzip(path, payload)


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    payload = struct.pack(">II", LABEL_MAGIC, labels.shape[0]) + labels.tobytes()
    _write_maybe_gzip(path, payload)


def _write_maybe_gzip(path, payload: bytes) -> None:
    path = Path(path)
    if path.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


def split(ds: Dataset, n: int, seed: int) -> Dataset:
    """Seeded uniform subsample of ``n`` items without replacement."""
    if not 1 <= n <= len(ds):
        raise ValueError(f"subset size {n} outside [1, {len(ds)}]")
    if n == len(ds):
        idx = np.arange(n)
    else:
        idx = np.sort(np.random.default_rng(seed).choice(len(ds), size=n, replace=False))
    return Dataset(ds.images[idx], ds.labels[idx], f"{ds.name}[{n}]", ds.rows, ds.cols)


# --------------------------------------------------------------------------
# model container
#
#   bytes 0-7    magic b"QSNNMDL\0"
#   bytes 8-11   uint32 LE format version
#   bytes 12-15  uint32 LE header length H
#   bytes 16..   H bytes of UTF-8 JSON: {"dims": [n_in, n_hidden, n_out],
#                "hyper": {...}}
#   then, little-endian float64, row-major:
#     hidden weights (n_hidden x n_in), hidden bias (n_hidden),
#     output weights (n_out x n_hidden), output bias (n_out)
# --------------------------------------------------------------------------

MODEL_MAGIC = b"QSNNMDL\0"
MODEL_VERSION = 1


def save_model(net, path) -> None:
    from .trainer import Network  # local import avoids a cycle

    if not isinstance(net, Network):
        raise TypeError("save_model expects a Network")
    header = json.dumps({"dims": list(net.dims), "hyper": net.hyperparameters()},
                        sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<II", MODEL_VERSION, len(header)))
    buf.write(header)
    for arr in (net.hidden.weights, net.hidden.bias, net.output.weights, net.output.bias):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_model(path):
    from .trainer import Network

    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing model file: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:8] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: model format version {version}, this build reads {MODEL_VERSION}")
    if len(raw) < 16 + hlen:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:16 + hlen].decode())
        n_in, n_hidden, n_out = (int(d) for d in header["dims"])
        hyper = dict(header["hyper"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header ({exc})") from exc
    sizes = [n_hidden * n_in, n_hidden, n_out * n_hidden, n_out]
    body = raw[16 + hlen:]
    if len(body) != 8 * sum(sizes):
        raise ModelFormatError(f"{path}: expected {8 * sum(sizes)} parameter bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    return Network.from_arrays(
        parts[0].reshape(n_hidden, n_in), parts[1],
        parts[2].reshape(n_out, n_hidden), parts[3], **hyper)


# --------------------------------------------------------------------------
# result tables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    dataset: str
    model: str
    noise_kind: str
    noise_param: float
    seed: int
    n_samples: int
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


RESULT_COLUMNS = tuple(f.name for f in fields(RunRecord))
_KIND_ORDER = {"invert": 0, "flip": 1, "awgn": 2}


def _sort_key(rec: RunRecord):
    return (_KIND_ORDER.get(rec.noise_kind, 99), rec.noise_kind, rec.noise_param, rec.model, rec.dataset, rec.seed)


def sort_records(records) -> list[RunRecord]:
    return sorted(records, key=_sort_key)


def write_results(records, path, fmt: str | None = None) -> Path:
    records = sort_records(records)
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RESULT_COLUMNS)
            for rec in records:
                writer.writerow([getattr(rec, c) if c != "noise_param" else repr(rec.noise_param)
                                 for c in RESULT_COLUMNS])
    elif fmt == "json":
        path.write_text(json.dumps([asdict(r) for r in records], indent=2) + "\n")
    else:
        raise ValueError(f"unknown results format {fmt!r}")
    return path


def read_results(path) -> list[RunRecord]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing results file: {path}")
    try:
        if path.suffix == ".json":
            rows = json.loads(path.read_text())
        else:
            with path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        return [RunRecord(dataset=r["dataset"], model=r["model"], noise_kind=r["noise_kind"],
                          noise_param=float(r["noise_param"]), seed=int(r["seed"]),
                          n_samples=int(r["n_samples"]), accuracy=float(r["accuracy"]))
                for r in rows]
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed results ({exc})") from exc
