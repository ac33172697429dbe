"""Labeled datasets: loading, class counts, stratified splits, normalization
and augmentation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

RASTER_SUFFIXES = (".ppm", ".pgm")
FORMATS = ("raster-dir", "feature-csv")
SUBSETS = ("train", "val", "test")


class DatasetError(ValueError):
    """Raised for unreadable, inconsistent or degenerate datasets."""


@dataclass(frozen=True)
class Sample:
    input: np.ndarray
    label: int
    sample_id: str = ""


@dataclass(frozen=True)
class ClassCounts:
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) == 0:
            raise ValueError("ClassCounts needs at least one class")
        if min(counts) < 1:
            raise ValueError(f"every class count must be >= 1, got {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def n_max(self) -> int:
        return max(self.counts)

    def __len__(self):
        return len(self.counts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


@dataclass(frozen=True)
class SplitRatios:
    train: float = 0.65
    val: float = 0.20
    test: float = 0.15

    def __post_init__(self):
        parts = (self.train, self.val, self.test)
        if any(r < 0 for r in parts):
            raise ValueError(f"split ratios must be non-negative, got {parts}")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {parts} (sum {sum(parts)})")


@dataclass(frozen=True)
class AugmentPolicy:
    rotation_range_degrees: tuple = (-180.0, 180.0)
    flip_horizontal: bool = True
    flip_vertical: bool = True

    def __post_init__(self):
        lo, hi = (float(v) for v in self.rotation_range_degrees)
        if not (-180.0 <= lo <= hi <= 180.0):
            raise ValueError(
                f"rotation range must be a sub-interval of [-180, 180], got {(lo, hi)}")
        object.__setattr__(self, "rotation_range_degrees", (lo, hi))

    @classmethod
    def from_dict(cls, d):
        return cls(rotation_range_degrees=tuple(d.get("rotation_range_degrees", (-180.0, 180.0))),
                   flip_horizontal=bool(d.get("flip_horizontal", True)),
                   flip_vertical=bool(d.get("flip_vertical", True)))

    def to_dict(self):
        return {"rotation_range_degrees": list(self.rotation_range_degrees),
                "flip_horizontal": self.flip_horizontal,
                "flip_vertical": self.flip_vertical}


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Immutable collection of samples sharing one input shape.

    ``inputs`` has shape (n, H, W, K) for rasters or (n, D) for feature
    vectors. Class indices follow ``class_names`` order.
    """

    inputs: np.ndarray
    labels: np.ndarray
    class_names: tuple
    sample_ids: tuple = field(default=())
    kind: str = "features"

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        names = tuple(str(n) for n in self.class_names)
        if len(names) < 2:
            raise DatasetError(f"need at least 2 classes, got {len(names)}")
        if inputs.shape[0] != labels.shape[0]:
            raise DatasetError("inputs and labels differ in length")
        if labels.size and (labels.min() < 0 or labels.max() >= len(names)):
            raise DatasetError(f"labels must lie in [0, {len(names)})")
        if self.kind not in ("features", "raster"):
            raise DatasetError(f"unknown dataset kind {self.kind!r}")
        expected_ndim = 4 if self.kind == "raster" else 2
        if inputs.ndim != expected_ndim and not (inputs.shape[0] == 0):
            raise DatasetError(f"{self.kind} inputs must be {expected_ndim}-d, got {inputs.shape}")
        ids = tuple(self.sample_ids) or tuple(str(i) for i in range(len(labels)))
        if len(ids) != len(labels):
            raise DatasetError("sample_ids and labels differ in length")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "sample_ids", ids)

    def __len__(self):
        return int(self.labels.shape[0])

    def __getitem__(self, i) -> Sample:
        return Sample(self.inputs[i], int(self.labels[i]), self.sample_ids[i])

    @property
    def samples(self):
        return [self[i] for i in range(len(self))]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def input_shape(self):
        return tuple(self.inputs.shape[1:])

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes).astype(np.int64)

    def class_counts(self) -> ClassCounts:
        return ClassCounts(tuple(self.counts))

    def flat_inputs(self) -> np.ndarray:
        return self.inputs.reshape(len(self), -1)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.class_names,
                              tuple(self.sample_ids[i] for i in idx), self.kind)


def one_hot(label: int, n_classes: int) -> np.ndarray:
    if n_classes < 2:
        raise ValueError(f"one-hot targets need at least 2 classes, got C={n_classes}")
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for C={n_classes}")
    t = np.zeros(n_classes, dtype=np.float64)
    t[label] = 1.0
    return t


# -- loading -----------------------------------------------------------------

def detect_format(path) -> str:
    path = Path(path)
    if path.is_dir():
        return "raster-dir"
    if path.suffix.lower() == ".csv":
        return "feature-csv"
    raise DatasetError(f"cannot infer dataset format of {path}")


def load_dataset(path, format: str | None = None, normalize: bool = True) -> LabeledDataset:
    """Load a dataset from disk.

    ``raster-dir`` expects ``<root>/<class_name>/*.ppm|*.pgm``; intensities
    are mapped to [-1, 1] unless ``normalize`` is False. ``feature-csv``
    expects a ``label,f0,...,fK`` header. Classes are ordered
    lexicographically by name in both cases.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset path does not exist: {path}")
    format = format or detect_format(path)
    if format == "raster-dir":
        return _load_raster_dir(path, normalize)
    if format == "feature-csv":
        return _load_feature_csv(path)
    raise DatasetError(f"unknown dataset format {format!r}; expected one of {FORMATS}")


def read_netpbm(path):
    """Decode a PPM/PGM file into an (H, W, K) float array and its maxval."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DatasetError(f"cannot parse raster {path}: {exc}") from exc
    maxval = 255.0 if arr.dtype == np.uint8 else 65535.0
    if mode.startswith("I;16") or arr.dtype == np.uint16:
        maxval = 65535.0
    arr = arr.astype(np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr, maxval


def _load_raster_dir(root: Path, normalize: bool) -> LabeledDataset:
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name)
    if len(class_dirs) < 2:
        raise DatasetError(f"{root}: need at least 2 class subdirectories")
    inputs, labels, ids = [], [], []
    shape = None
    for k, d in enumerate(class_dirs):
        files = sorted(f for f in d.iterdir() if f.suffix.lower() in RASTER_SUFFIXES)
        if not files:
            raise DatasetError(f"empty class: {d.name}")
        for f in files:
            arr, maxval = read_netpbm(f)
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise DatasetError(
                    f"inconsistent input shapes: {f} is {arr.shape}, expected {shape}")
            if normalize:
                arr = normalize_raster(arr, (0.0, maxval))
            inputs.append(arr)
            labels.append(k)
            ids.append(f"{d.name}/{f.name}")
    return LabeledDataset(np.stack(inputs), np.asarray(labels), tuple(d.name for d in class_dirs),
                          tuple(ids), kind="raster")


def _load_feature_csv(path: Path) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise DatasetError(f"{path}: header must be `label,f0,...,fK`, got {header}")
        width = len(header) - 1
        names, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise DatasetError(
                    f"{path}:{lineno}: inconsistent input shapes: expected {width} features, "
                    f"got {len(row) - 1}")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: unparseable value ({exc})") from None
            names.append(row[0].strip())
    if not rows:
        raise DatasetError(f"{path}: no samples")
    class_names = tuple(sorted(set(names)))
    index = {n: i for i, n in enumerate(class_names)}
    labels = np.asarray([index[n] for n in names], dtype=np.int64)
    return LabeledDataset(np.asarray(rows, dtype=np.float64), labels, class_names,
                          tuple(f"row{i}" for i in range(len(rows))), kind="features")


def write_feature_csv(ds: LabeledDataset, path) -> None:
    x = ds.flat_inputs()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{j}" for j in range(x.shape[1])])
        for row, y in zip(x, ds.labels):
            w.writerow([ds.class_names[y]] + [repr(float(v)) for v in row])


# -- splitting ---------------------------------------------------------------

def split_sizes(n: int, ratios: SplitRatios) -> tuple:
    """Per-class subset sizes: floor for train and val, remainder to test."""
    # guard against products like 0.2 * 35 landing one ulp below an integer
    n_train = math.floor(n * ratios.train + 1e-9)
    n_val = math.floor(n * ratios.val + 1e-9)
    return n_train, n_val, n - n_train - n_val


def stratified_split(ds: LabeledDataset, ratios: SplitRatios = SplitRatios(), seed: int = 0):
    """Split each class independently into (train, val, test) subsets.

    Each class's indices are shuffled with one seeded generator, visited in
    class-index order.
    """
    counts = ds.counts
    small = [ds.class_names[k] for k in range(ds.n_classes) if counts[k] < 3]
    if small:
        raise DatasetError(
            f"class too small to populate all three subsets (need >= 3 samples): {small}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for k in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == k)
        idx = idx[rng.permutation(idx.size)]
        n_train, n_val, _ = split_sizes(idx.size, ratios)
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_val])
        parts[2].append(idx[n_train + n_val:])
    return tuple(ds.subset(np.concatenate(p)) for p in parts)


def write_split_manifest(path, ds: LabeledDataset, train, val, test) -> None:
    where = {}
    for name, part in zip(SUBSETS, (train, val, test)):
        for sid in part.sample_ids:
            where[sid] = name
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "subset"])
        for sid in ds.sample_ids:
            w.writerow([sid, where[sid]])


def read_split_manifest(path, ds: LabeledDataset):
    """Rebuild (train, val, test) from a manifest written for ``ds``."""
    assignment = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["sample_id", "subset"]:
            raise DatasetError(f"{path}: header must be `sample_id,subset`")
        for row in reader:
            if row["subset"] not in SUBSETS:
                raise DatasetError(f"{path}: unknown subset {row['subset']!r}")
            assignment[row["sample_id"]] = row["subset"]
    missing = [sid for sid in ds.sample_ids if sid not in assignment]
    if missing:
        raise DatasetError(f"{path}: {len(missing)} samples not in manifest, e.g. {missing[0]}")
    return tuple(
        ds.subset([i for i, sid in enumerate(ds.sample_ids) if assignment[sid] == name])
        for name in SUBSETS)


# -- normalization and augmentation ------------------------------------------

def normalize_raster(r, source_range) -> np.ndarray:
    lo, hi = (float(v) for v in source_range)
    if not hi > lo:
        raise ValueError(f"source range needs hi > lo, got {(lo, hi)}")
    r = np.asarray(r, dtype=np.float64)
    if r.size and (r.min() < lo or r.max() > hi):
        raise ValueError(f"intensity outside declared source range [{lo}, {hi}]")
    return (r - lo) * (2.0 / (hi - lo)) - 1.0


def denormalize_raster(r, source_range) -> np.ndarray:
    lo, hi = (float(v) for v in source_range)
    return (np.asarray(r, dtype=np.float64) + 1.0) * ((hi - lo) / 2.0) + lo


def rotate_raster(r, degrees: float, fill: float = -1.0) -> np.ndarray:
    """Counter-clockwise nearest-neighbour rotation about the raster center."""
    r = np.asarray(r, dtype=np.float64)
    squeeze = r.ndim == 2
    if squeeze:
        r = r[:, :, None]
    if degrees == 0.0:
        out = r.copy()
    else:
        theta = math.radians(degrees)
        out = kernels.rotate_nearest(r, math.cos(theta), math.sin(theta), fill)
    return out[:, :, 0] if squeeze else out


def flip_horizontal(r) -> np.ndarray:
    return np.asarray(r)[:, ::-1].copy()


def flip_vertical(r) -> np.ndarray:
    return np.asarray(r)[::-1].copy()


def augment(s: Sample, policy: AugmentPolicy, rng: np.random.Generator) -> Sample:
    """Random rotation then independent coin-flip mirrors.

    Feature-vector samples (1-d inputs) pass through unchanged and consume
    no randomness.
    """
    x = np.asarray(s.input)
    if x.ndim < 2:
        return s
    lo, hi = policy.rotation_range_degrees
    angle = float(rng.uniform(lo, hi)) if hi > lo else lo
    x = rotate_raster(x, angle)
    if policy.flip_horizontal and rng.random() < 0.5:
        x = flip_horizontal(x)
    if policy.flip_vertical and rng.random() < 0.5:
        x = flip_vertical(x)
    return Sample(x, s.label, s.sample_id)
