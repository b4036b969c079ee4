"""Optional dataset download helper (network access lives only here).

Two pinned sources are supported:

``official``
    The gzip IDX files from the dataset hosts, checked by MD5.
``npm``
    Tarballs from the npm registry, checked by SHA-256. ``mnist-data``
    ships the raw IDX files; ``fashion-mnist`` ships per-class JSON pixel
    lists, which are converted to IDX with the first 6000 items of each
    class as the training split and the remaining 1000 as the test split.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tarfile
import urllib.request
from pathlib import Path

import numpy as np

from .dataio import DataError, write_idx_images, write_idx_labels

FILES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}

OFFICIAL = {
    "mnist": ("https://ossci-datasets.s3.amazonaws.com/mnist/", {
        "train_images": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
        "train_labels": "d53e105ee54ea40749a09fcbcd1e9432",
        "test_images": "9fb629c4189551a2d022fa330f9573f3",
        "test_labels": "ec29112dd5afa0611ce80d1b7f02629c",
    }),
    "fashion": ("http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/", {
        "train_images": "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
        "train_labels": "25c81989df183df01b3e8a0aad5dffbe",
        "test_images": "bef4ecab320f06d8554ea6380940ec79",
        "test_labels": "bb300cfdad3c16e7a12a480ee83cd310",
    }),
}

NPM = {
    "mnist": ("https://registry.npmjs.org/mnist-data/-/mnist-data-1.2.6.tgz",
              "8f87f2d0d9133e6c9f7012d6d26bb05409e7e870a1de21d1a600b8d400cc07ed"),
    "fashion": ("https://registry.npmjs.org/fashion-mnist/-/fashion-mnist-1.1.0.tgz",
                "7fe48b6f9470efb6e15354b1b2005d60a544177bd24cf4b5da500e3e83d1f396"),
}
FASHION_TRAIN_PER_CLASS = 6000


def default_data_dir() -> Path:
    return Path(os.environ.get("QSNN_DATA_DIR", Path.home() / ".cache" / "qsnn"))


def dataset_paths(name: str, data_dir=None) -> dict[str, Path]:
    root = Path(data_dir) if data_dir else default_data_dir()
    return {key: root / name / fname for key, fname in FILES.items()}


def is_present(name: str, data_dir=None) -> bool:
    return all(p.is_file() for p in dataset_paths(name, data_dir).values())


def _download(url: str, timeout: float = 60.0) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except OSError as exc:
        raise DataError(f"download failed for {url}: {exc}") from exc


def _check(blob: bytes, algo: str, expected: str, what: str) -> None:
    got = hashlib.new(algo, blob).hexdigest()
    if got != expected:
        raise DataError(f"{what}: {algo} {got} does not match pinned {expected}")


def _fetch_official(name: str, paths: dict[str, Path]) -> None:
    base, sums = OFFICIAL[name]
    for key, path in paths.items():
        blob = _download(base + FILES[key])
        _check(blob, "md5", sums[key], FILES[key])
        path.write_bytes(blob)


def _tar_members(blob: bytes) -> dict[str, bytes]:
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        return {m.name: tar.extractfile(m).read() for m in tar.getmembers() if m.isfile()}


def _fetch_npm(name: str, paths: dict[str, Path]) -> None:
    url, sha = NPM[name]
    blob = _download(url, timeout=300.0)
    _check(blob, "sha256", sha, url)
    members = _tar_members(blob)
    if name == "mnist":
        import gzip

        for key, path in paths.items():
            raw = members[f"package/data/{FILES[key][:-3]}"]
            path.write_bytes(gzip.compress(raw, mtime=0))
        return
    train_x, train_y, test_x, test_y = [], [], [], []
    for label in range(10):
        data = json.loads(members[f"package/src/clothes/{label}.json"])["data"]
        # the class-0 file carries two empty rows
        rows = np.asarray([r for r in data if len(r) == 784], dtype=np.uint8)
        train_x.append(rows[:FASHION_TRAIN_PER_CLASS])
        test_x.append(rows[FASHION_TRAIN_PER_CLASS:])
        train_y.append(np.full(min(len(rows), FASHION_TRAIN_PER_CLASS), label))
        test_y.append(np.full(max(len(rows) - FASHION_TRAIN_PER_CLASS, 0), label))
    rng = np.random.default_rng(20170825)
    for (xs, ys), prefix in (((train_x, train_y), "train"), ((test_x, test_y), "test")):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(y))
        write_idx_images(paths[f"{prefix}_images"], x[order].reshape(-1, 28, 28))
        write_idx_labels(paths[f"{prefix}_labels"], y[order])


def fetch(name: str, data_dir=None, source: str = "auto", force: bool = False) -> dict[str, Path]:
    """Download ``mnist`` or ``fashion`` into ``data_dir`` unless already there."""
    if name not in OFFICIAL:
        raise ValueError(f"unknown dataset {name!r}")
    paths = dataset_paths(name, data_dir)
    if not force and is_present(name, data_dir):
        return paths
    paths["train_images"].parent.mkdir(parents=True, exist_ok=True)
    if source == "official":
        _fetch_official(name, paths)
    elif source == "npm":
        _fetch_npm(name, paths)
    elif source == "auto":
        try:
            _fetch_official(name, paths)
        except DataError:
            _fetch_npm(name, paths)
    else:
        raise ValueError(f"unknown source {source!r}")
    return paths
