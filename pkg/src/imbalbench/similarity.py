"""Inter-class cosine similarity of penultimate-layer features."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import LabeledDataset
from .model import Model, forward


class ZeroNormFeature(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityConfig:
    pairs_per_cell: int = 30
    seed: int = 0
    source_subset: str = "test"

    def __post_init__(self):
        if self.pairs_per_cell < 1:
            raise ValueError("pairs_per_cell must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.source_subset not in ("train", "val", "test", "all"):
            raise ValueError(f"unknown source subset {self.source_subset!r}")


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    values: np.ndarray
    class_names: tuple

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([""] + list(self.class_names))
            for name, row in zip(self.class_names, self.values):
                w.writerow([name] + [f"{v:.2f}" for v in row])


def cosine(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("cosine needs equal-length vectors")
    nx = math.sqrt(float(x @ x))
    ny = math.sqrt(float(y @ y))
    if nx == 0.0 or ny == 0.0:
        raise ZeroNormFeature("cosine of a zero-norm vector is undefined")
    return min(1.0, max(-1.0, float(x @ y) / (nx * ny)))


def _features(m: Model, ds: LabeledDataset) -> np.ndarray:
    if not m.has_body:
        warnings.warn("model has no hidden layer; raw inputs are used as features",
                      stacklevel=3)
    _, feats = forward(m, ds.flat_inputs())
    return np.atleast_2d(feats)


def _pair_draw(ds, a, b, cfg):
    rng = np.random.default_rng([cfg.seed, a, b])
    picks = []
    for k in (a, b):
        idx = np.flatnonzero(ds.labels == k)
        if idx.size == 0:
            raise ValueError(f"empty class: {ds.class_names[k]}")
        n = cfg.pairs_per_cell
        picks.append(idx[rng.choice(idx.size, size=n, replace=idx.size < n)])
    return picks


def _mean_cosine(feats, ds, ia, ib) -> float:
    cos = kernels.paired_cosine(feats[ia], feats[ib])
    bad = np.flatnonzero(np.isnan(cos))
    if bad.size:
        i = bad[0]
        which = ia[i] if not np.any(feats[ia[i]]) else ib[i]
        raise ZeroNormFeature(f"zero-norm feature for sample {ds.sample_ids[which]}")
    return float(np.mean(cos))


def class_pair_similarity(m: Model, ds: LabeledDataset, a: int, b: int,
                          cfg: SimilarityConfig = SimilarityConfig()) -> float:
    """Mean cosine over ``cfg.pairs_per_cell`` seeded cross-class pairs.

    ``ds`` is the subset to sample from (``cfg.source_subset`` is resolved
    by the caller). The draw depends only on (seed, min(a,b), max(a,b)).
    """
    if a == b:
        raise ValueError("class_pair_similarity needs two distinct classes")
    a, b = min(a, b), max(a, b)
    feats = _features(m, ds)
    ia, ib = _pair_draw(ds, a, b, cfg)
    return _mean_cosine(feats, ds, ia, ib)


def similarity_matrix(m: Model, ds: LabeledDataset,
                      cfg: SimilarityConfig = SimilarityConfig()) -> SimilarityMatrix:
    c = ds.n_classes
    empty = [ds.class_names[k] for k in range(c) if not np.any(ds.labels == k)]
    if empty:
        raise ValueError(f"empty class: {', '.join(empty)}")
    feats = _features(m, ds)
    values = np.eye(c)
    for a in range(c):
        for b in range(a + 1, c):
            ia, ib = _pair_draw(ds, a, b, cfg)
            values[a, b] = values[b, a] = _mean_cosine(feats, ds, ia, ib)
    return SimilarityMatrix(values, ds.class_names)
