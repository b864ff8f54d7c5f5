"""Dataset ingestion: IDX image files, CSV tables, and synthetic generators."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(eq=False)
class Dataset:
    X: np.ndarray  # (N, features) or (N, C, H, W), float64
    y: np.ndarray  # (N,) int64
    num_classes: int

    def __post_init__(self):
        if len(self.X) != len(self.y):
            raise ValueError(f"{len(self.X)} samples but {len(self.y)} labels")
        if len(self.X) == 0:
            raise ValueError("empty dataset")


def two_spirals(samples: int = 2000, noise: float = 0.02, seed: int = 0) -> Dataset:
    """Two interleaved spirals in the plane, scaled to roughly [-1, 1]^2.

    ``noise`` is the standard deviation of the positional jitter.
    """
    rng = np.random.default_rng(seed)
    per_class = samples // 2
    xs, ys = [], []
    turns = 1.75
    for cls in (0, 1):
        k = per_class if cls == 0 else samples - per_class
        theta = np.sqrt(rng.uniform(size=k)) * turns * 2.0 * np.pi
        r = theta / (turns * 2.0 * np.pi)
        px = r * np.cos(theta + np.pi * cls) + rng.normal(scale=noise, size=k)
        py = r * np.sin(theta + np.pi * cls) + rng.normal(scale=noise, size=k)
        xs.append(np.stack([px, py], axis=1))
        ys.append(np.full(k, cls, dtype=np.int64))
    X = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(samples)
    return Dataset(X[order], y[order], num_classes=2)


def two_gaussians(samples: int = 1000, separation: float = 2.0, seed: int = 0) -> Dataset:
    """Two Gaussian blobs at (+-separation/2, 0)."""
    rng = np.random.default_rng(seed)
    per_class = samples // 2
    half = separation / 2.0
    xs, ys = [], []
    for cls, cx in ((0, -half), (1, half)):
        k = per_class if cls == 0 else samples - per_class
        pts = rng.normal(size=(k, 2))
        pts[:, 0] += cx
        xs.append(pts)
        ys.append(np.full(k, cls, dtype=np.int64))
    X = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(samples)
    return Dataset(X[order], y[order], num_classes=2)


def from_csv(path: str | Path, label_column: str) -> Dataset:
    """Numeric CSV with a header row; one column holds integer class labels."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or label_column not in reader.fieldnames:
            raise ValueError(f"CSV {path} has no column named {label_column!r}")
        feature_names = [c for c in reader.fieldnames if c != label_column]
        features, labels = [], []
        for row in reader:
            features.append([float(row[c]) for c in feature_names])
            labels.append(int(row[label_column]))
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.size and y.min() < 0:
        raise ValueError("labels must be nonnegative integers")
    return Dataset(X, y, num_classes=int(y.max()) + 1 if y.size else 0)


def read_idx(path: str | Path) -> np.ndarray:
    """Read one IDX file (big-endian magic, dims, raw unsigned bytes)."""
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise ValueError(f"{path}: unsupported IDX magic 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    start = 4 + 4 * ndim
    count = int(np.prod(dims))
    if len(blob) - start != count:
        raise ValueError(f"{path}: expected {count} payload bytes, found {len(blob) - start}")
    return np.frombuffer(blob, dtype=np.uint8, offset=start).reshape(dims)


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Pair of IDX files -> images scaled to [0, 1] with shape (N, 1, H, W)."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise ValueError(f"{images_path}: expected image data")
    if labels.ndim != 1:
        raise ValueError(f"{labels_path}: expected label data")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    X = images.astype(np.float64)[:, None, :, :] / 255.0
    y = labels.astype(np.int64)
    return Dataset(X, y, num_classes=int(y.max()) + 1)


def build(spec: dict) -> Dataset:
    """Construct a dataset from a run-configuration ``dataset`` section."""
    kind = spec.get("kind")
    if kind == "two_spirals":
        return two_spirals(
            samples=int(spec.get("samples", 2000)),
            noise=float(spec.get("noise", 0.02)),
            seed=int(spec.get("seed", 0)),
        )
    if kind == "two_gaussians":
        return two_gaussians(
            samples=int(spec.get("samples", 1000)),
            separation=float(spec.get("separation", 2.0)),
            seed=int(spec.get("seed", 0)),
        )
    if kind == "csv":
        return from_csv(spec["path"], spec["label_column"])
    if kind == "idx":
        return load_idx(spec["images"], spec["labels"])
    raise ValueError(f"unknown dataset kind {kind!r}")
