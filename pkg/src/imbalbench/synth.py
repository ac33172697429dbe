"""Seeded synthetic datasets so every workflow runs without downloads."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import LabeledDataset

# five-class imbalance profile used by the bundled benchmark
IMBALANCED_COUNTS = (500, 400, 300, 50, 20)


def class_names_for(n_classes: int):
    width = len(str(n_classes - 1))
    return tuple(f"class_{k:0{width}d}" for k in range(n_classes))


def make_blobs(counts=IMBALANCED_COUNTS, dim: int = 16, separation: float = 3.0,
               noise: float = 1.0, seed: int = 0) -> LabeledDataset:
    """Isotropic Gaussian blobs, one per class.

    Class centers are random directions scaled to ``separation``; samples
    are the center plus N(0, noise^2) in every coordinate.
    """
    counts = [int(c) for c in counts]
    if len(counts) < 2 or min(counts) < 1:
        raise ValueError("need at least two classes with >= 1 sample each")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(len(counts), dim))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    xs, ys = [], []
    for k, n in enumerate(counts):
        xs.append(centers[k] + noise * rng.normal(size=(n, dim)))
        ys.append(np.full(n, k))
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys), class_names_for(len(counts)),
                          kind="features")


def write_raster_dir(root, counts=(6, 6), size: int = 8, channels: int = 1,
                     seed: int = 0) -> Path:
    """Write class-per-subdirectory PGM/PPM rasters.

    Each class gets a distinct oriented stripe pattern plus pixel noise.
    """
    from PIL import Image

    if channels not in (1, 3):
        raise ValueError("channels must be 1 (PGM) or 3 (PPM)")
    root = Path(root)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    names = class_names_for(len(counts))
    suffix = ".pgm" if channels == 1 else ".ppm"
    for k, (name, n) in enumerate(zip(names, counts)):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        angle = np.pi * k / len(counts)
        pattern = 0.5 + 0.5 * np.sin((xx * np.cos(angle) + yy * np.sin(angle)) * 1.5)
        for i in range(int(n)):
            img = pattern[:, :, None] * np.ones(channels) + 0.15 * rng.normal(size=(size, size, channels))
            img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(img[:, :, 0] if channels == 1 else img).save(d / f"{i:04d}{suffix}")
    return root
