"""Softmax, the CE / WCE / CB / focal losses, their logit gradients, and
class-weight strategies."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import ClassCounts

EPS = 1e-12
LOSS_KINDS = ("CE", "WCE", "CB", "FL")
WEIGHT_STRATEGIES = ("uniform", "inverse_proportion", "explicit")


@dataclass(frozen=True)
class ClassWeights:
    w: tuple
    strategy: str = "explicit"

    def __post_init__(self):
        w = tuple(float(v) for v in self.w)
        if self.strategy not in WEIGHT_STRATEGIES:
            raise ValueError(f"unknown weight strategy {self.strategy!r}")
        if not w:
            raise ValueError("class weights cannot be empty")
        if any(not (v > 0.0) or not math.isfinite(v) for v in w):
            raise ValueError(f"class weights must be finite and > 0, got {w}")
        if self.strategy == "uniform" and any(v != 1.0 for v in w):
            raise ValueError("uniform weights must all equal 1")
        object.__setattr__(self, "w", w)

    def __len__(self):
        return len(self.w)

    def as_array(self):
        return np.asarray(self.w, dtype=np.float64)


@dataclass(frozen=True)
class CBParams:
    beta: float
    per_class_n: tuple

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        n = tuple(int(v) for v in self.per_class_n)
        if not n or min(n) < 1:
            raise ValueError("per-class sample counts must all be >= 1")
        object.__setattr__(self, "per_class_n", n)

    def coefficients(self) -> np.ndarray:
        """(1 - beta) / (1 - beta**n) for each class."""
        b = float(self.beta)
        return np.asarray([(1.0 - b) / (1.0 - b ** n) for n in self.per_class_n])


@dataclass(frozen=True)
class FocalParams:
    gamma: float = 2.0

    def __post_init__(self):
        if not (self.gamma >= 0.0) or not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be a finite value >= 0, got {self.gamma}")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "CE"
    weights: ClassWeights | None = None
    cb: CBParams | None = None
    focal: FocalParams | None = None
    reduction: str = "mean"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        needs = {"WCE": "weights", "CB": "cb", "FL": "focal"}.get(self.kind)
        for name in ("weights", "cb", "focal"):
            present = getattr(self, name) is not None
            if present != (name == needs):
                state = "requires" if name == needs else "does not take"
                raise ValueError(f"loss {self.kind} {state} `{name}`")

    def class_coefficients(self, n_classes: int) -> np.ndarray:
        if self.kind == "WCE":
            coef = self.weights.as_array()
        elif self.kind == "CB":
            coef = self.cb.coefficients()
        else:
            return np.ones(n_classes)
        if coef.size != n_classes:
            raise ValueError(f"{self.kind} parameters cover {coef.size} classes, model has {n_classes}")
        return coef

    @property
    def gamma(self) -> float:
        return float(self.focal.gamma) if self.kind == "FL" else 0.0

    def to_dict(self):
        d = {"kind": self.kind, "reduction": self.reduction}
        if self.weights is not None:
            d["weights"] = {"strategy": self.weights.strategy, "w": list(self.weights.w)}
        if self.cb is not None:
            d["beta"] = self.cb.beta
            d["per_class_n"] = list(self.cb.per_class_n)
        if self.focal is not None:
            d["gamma"] = self.focal.gamma
        return d

    @classmethod
    def from_config(cls, cfg, counts: ClassCounts | None = None) -> "LossSpec":
        """Build a spec from a config mapping, resolving count-based parts.

        ``weights`` may be a list (explicit), ``"inverse_proportion"`` or
        ``"uniform"``, or a ``{"strategy", "w"}`` mapping. CB reads its
        per-class counts from ``per_class_n`` or falls back to ``counts``.
        """
        if isinstance(cfg, str):
            cfg = {"kind": cfg}
        kind = str(cfg.get("kind", "CE")).upper()
        reduction = cfg.get("reduction", "mean")
        if kind == "WCE":
            spec = cfg.get("weights", "inverse_proportion")
            if isinstance(spec, dict):
                weights = ClassWeights(tuple(spec["w"]), spec.get("strategy", "explicit"))
            elif spec == "inverse_proportion":
                if counts is None:
                    raise ValueError("inverse-proportion weights need class counts")
                weights = inverse_proportion_weights(counts)
            elif spec == "uniform":
                if counts is None:
                    raise ValueError("uniform weights need the class count")
                weights = uniform_weights(len(counts))
            else:
                weights = explicit_weights(spec)
            return cls("WCE", weights=weights, reduction=reduction)
        if kind == "CB":
            n = cfg.get("per_class_n")
            if n is None:
                if counts is None:
                    raise ValueError("class-balanced loss needs class counts")
                n = counts.counts
            return cls("CB", cb=CBParams(float(cfg.get("beta", 0.999)), tuple(n)), reduction=reduction)
        if kind == "FL":
            return cls("FL", focal=FocalParams(float(cfg.get("gamma", 2.0))), reduction=reduction)
        return cls(kind, reduction=reduction)


# -- scalar API on probability vectors ----------------------------------------

def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax: logits must be finite")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _true_index(t) -> int:
    t = np.asarray(t)
    k = int(np.argmax(t))
    if t.ndim != 1 or t[k] != 1 or np.count_nonzero(t) != 1:
        raise ValueError("target must be a one-hot vector")
    return k


def _nll(p, k) -> float:
    return -math.log(max(float(p[k]), EPS))


def ce_loss(p, t) -> float:
    return _nll(p, _true_index(t))


def wce_loss(p, t, w: ClassWeights) -> float:
    k = _true_index(t)
    if len(w) != len(p):
        raise ValueError(f"weights cover {len(w)} classes, p has {len(p)}")
    return w.w[k] * _nll(p, k)


def cb_loss(p, t, cb: CBParams) -> float:
    k = _true_index(t)
    b = float(cb.beta)
    n = cb.per_class_n[k]
    return (1.0 - b) / (1.0 - b ** n) * _nll(p, k)


def focal_loss(p, t, fp: FocalParams) -> float:
    k = _true_index(t)
    return (1.0 - float(p[k])) ** fp.gamma * _nll(p, k)


def loss_value(spec: LossSpec, p, t) -> float:
    if spec.kind == "WCE":
        return wce_loss(p, t, spec.weights)
    if spec.kind == "CB":
        return cb_loss(p, t, spec.cb)
    if spec.kind == "FL":
        return focal_loss(p, t, spec.focal)
    return ce_loss(p, t)


# -- logits API (what training uses) -----------------------------------------

def batch_loss_grad(spec: LossSpec, logits, labels):
    """Reduced loss over a batch and its gradient w.r.t. the (B, C) logits."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    coef = spec.class_coefficients(logits.shape[1])
    losses, grad = kernels.loss_grad(logits, labels, coef, spec.gamma)
    if spec.reduction == "mean":
        n = max(len(losses), 1)
        return float(losses.sum()) / n, grad / n
    return float(losses.sum()), grad


def loss_grad_logits(spec: LossSpec, logits, t) -> np.ndarray:
    """Gradient of a single sample's loss with respect to its logits."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("expected a single logit vector")
    k = _true_index(t)
    if len(t) != z.size:
        raise ValueError("target and logits differ in length")
    _, grad = batch_loss_grad(LossSpec(spec.kind, spec.weights, spec.cb, spec.focal, "sum"),
                              z[None, :], np.asarray([k]))
    return grad[0]


def loss_from_logits(spec: LossSpec, logits, t) -> float:
    return loss_value(spec, softmax(logits), t)


# -- weighting strategies -----------------------------------------------------

def uniform_weights(n_classes: int) -> ClassWeights:
    return ClassWeights((1.0,) * n_classes, "uniform")


def inverse_proportion_weights(counts: ClassCounts) -> ClassWeights:
    """w_i = N_max / N_i: 1 for the largest class, larger for rarer ones."""
    if not isinstance(counts, ClassCounts):
        counts = ClassCounts(tuple(counts))
    n_max = counts.n_max
    return ClassWeights(tuple(n_max / n for n in counts.counts), "inverse_proportion")


def explicit_weights(values, n_classes: int | None = None) -> ClassWeights:
    values = tuple(float(v) for v in values)
    if n_classes is not None and len(values) != n_classes:
        raise ValueError(f"expected {n_classes} weights, got {len(values)}")
    return ClassWeights(values, "explicit")


def write_weights_csv(path, class_names, weights: ClassWeights) -> None:
    if len(class_names) != len(weights):
        raise ValueError("class names and weights differ in length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_name", "weight"])
        for name, v in zip(class_names, weights.w):
            w.writerow([name, repr(v)])


def read_weights_csv(path):
    """Return (class_names, explicit ClassWeights) from a weights CSV."""
    names, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["class_name", "weight"]:
            raise ValueError(f"{path}: header must be `class_name,weight`")
        for row in reader:
            names.append(row["class_name"])
            values.append(float(row["weight"]))
    return names, explicit_weights(values)
