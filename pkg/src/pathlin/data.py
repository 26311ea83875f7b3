"""Datasets: synthetic generators and IDX-format image ingestion.

All generators are deterministic in their seed and produce a stratified
80/20 train/test split.  The reference task ``hierarchical-xor`` composes
parity structure at two scales (pair products, then products of pair
products within each feature group), so shallow models cannot express the
labels and depth pays off.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

SYNTHETIC_KINDS = ("gaussian-mixture", "spirals", "hierarchical-xor")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    n_classes: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise ValueError("labels do not match feature rows")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("labels outside class range")
        combined = np.concatenate([self.train_idx, self.test_idx])
        if len(np.unique(combined)) != n or combined.size != n:
            raise ValueError("split indices must be disjoint and cover all samples")

    @property
    def train_features(self):
        return self.features[self.train_idx]

    @property
    def train_labels(self):
        return self.labels[self.train_idx]

    @property
    def test_features(self):
        return self.features[self.test_idx]

    @property
    def test_labels(self):
        return self.labels[self.test_idx]


def _stratified_split(labels, rng, test_fraction=0.2):
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round((1.0 - test_fraction) * idx.size))
        n_train = min(max(n_train, 1), idx.size)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return (
        np.sort(np.concatenate(train)).astype(np.int64),
        np.sort(np.concatenate(test)).astype(np.int64),
    )


def _gaussian_mixture(size, classes, noise, rng):
    angles = 2.0 * np.pi * np.arange(classes) / classes
    means = 3.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = rng.integers(0, classes, size=size)
    features = means[labels] + noise * rng.normal(size=(size, 2))
    return features, labels


def _spirals(size, classes, noise, rng):
    labels = rng.integers(0, classes, size=size)
    t = rng.uniform(0.25, 1.0, size=size)
    theta = 2.0 * np.pi * (1.5 * t + labels / classes)
    r = 2.0 * t
    features = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    features += noise * rng.normal(size=(size, 2))
    return features, labels


def _hierarchical_xor(size, classes, noise, rng):
    bits = int(np.log2(classes))
    if 2**bits != classes:
        raise ValueError(
            f"hierarchical-xor needs a power-of-two class count, got {classes}"
        )
    d = 4 * bits
    signs = rng.choice([-1.0, 1.0], size=(size, d))
    labels = np.zeros(size, dtype=np.int64)
    for k in range(bits):
        group = signs[:, 4 * k : 4 * (k + 1)]
        pair = group[:, 0::2] * group[:, 1::2]
        labels += (pair[:, 0] * pair[:, 1] < 0).astype(np.int64) << k
    features = signs + noise * rng.normal(size=(size, d))
    return features, labels


def generate_synthetic(kind, size, classes, noise, seed):
    """Deterministic synthetic dataset with a stratified 80/20 split."""
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if size < classes:
        raise ValueError(f"size {size} smaller than class count {classes}")
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    rng = np.random.default_rng(seed)
    maker = {
        "gaussian-mixture": _gaussian_mixture,
        "spirals": _spirals,
        "hierarchical-xor": _hierarchical_xor,
    }[kind]
    features, labels = maker(size, classes, noise, rng)
    train_idx, test_idx = _stratified_split(labels, rng)
    return Dataset(
        features=features.astype(np.float64),
        labels=labels.astype(np.int64),
        train_idx=train_idx,
        test_idx=test_idx,
        n_classes=classes,
        provenance={
            "generator": kind,
            "size": size,
            "classes": classes,
            "noise": noise,
            "seed": seed,
        },
    )


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_exact(path, offset, count, what):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < offset + count:
        raise IdxFormatError(
            f"{path}: truncated {what}: need {count} bytes at offset {offset}, "
            f"found {max(0, len(blob) - offset)}"
        )
    return blob


def load_idx(images_path, labels_path, test_fraction=0.2, seed=0):
    """Load an IDX image/label file pair into a standardized Dataset.

    Headers are big-endian; the images file must carry magic 0x00000803
    (count, rows, cols of u8 pixels) and the labels file 0x00000801.
    Pixels are scaled to [0, 1]; per-feature standardization statistics are
    computed on the train split only and applied to both splits.

    Rejected malformations (see README for the list): bad magic in either
    file, truncated header in either file, truncated or oversized payload
    in either file, and image/label count mismatch.
    """
    blob = _read_exact(images_path, 0, 16, "images header")
    magic, count, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    expected = count * rows * cols
    if len(blob) - 16 != expected:
        raise IdxFormatError(
            f"{images_path}: image payload size mismatch: expected {expected} "
            f"bytes at offset 16, found {len(blob) - 16}"
        )
    pixels = np.frombuffer(blob, dtype=np.uint8, count=expected, offset=16)

    lblob = _read_exact(labels_path, 0, 8, "labels header")
    lmagic, lcount = struct.unpack(">II", lblob[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad magic 0x{lmagic:08x} at offset 0, "
            f"expected 0x{IDX_LABELS_MAGIC:08x}"
        )
    if len(lblob) - 8 != lcount:
        raise IdxFormatError(
            f"{labels_path}: label payload size mismatch: expected {lcount} "
            f"bytes at offset 8, found {len(lblob) - 8}"
        )
    if count != lcount:
        raise IdxFormatError(
            f"image count {count} ({images_path}) != label count {lcount} "
            f"({labels_path})"
        )
    labels = np.frombuffer(lblob, dtype=np.uint8, offset=8).astype(np.int64)

    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    rng = np.random.default_rng(seed)
    train_idx, test_idx = _stratified_split(labels, rng, test_fraction)
    mean = features[train_idx].mean(axis=0)
    std = np.maximum(features[train_idx].std(axis=0), 1e-8)
    features = (features - mean) / std
    return Dataset(
        features=features,
        labels=labels,
        train_idx=train_idx,
        test_idx=test_idx,
        n_classes=int(labels.max()) + 1,
        provenance={
            "images": str(images_path),
            "images_sha256": _sha256(images_path),
            "labels": str(labels_path),
            "labels_sha256": _sha256(labels_path),
            "seed": seed,
        },
    )


def save_dataset(ds, path):
    """Persist a dataset as .npz (used by the gen-data CLI)."""
    import json

    np.savez(
        path,
        features=ds.features,
        labels=ds.labels,
        train_idx=ds.train_idx,
        test_idx=ds.test_idx,
        n_classes=np.int64(ds.n_classes),
        provenance=np.frombuffer(
            json.dumps(ds.provenance).encode("utf-8"), dtype=np.uint8
        ),
    )


def load_dataset(path):
    import json

    with np.load(path) as z:
        return Dataset(
            features=z["features"],
            labels=z["labels"],
            train_idx=z["train_idx"],
            test_idx=z["test_idx"],
            n_classes=int(z["n_classes"]),
            provenance=json.loads(z["provenance"].tobytes().decode("utf-8")),
        )
