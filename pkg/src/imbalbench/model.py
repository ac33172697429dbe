"""Small feedforward classifier with a tappable penultimate layer.

``hidden_dim == 0`` gives softmax regression; otherwise one ReLU hidden
layer feeds the classification head. With ``freeze_body`` only the head is
trained, which is how head replacement on a pretrained network is emulated
on fixed feature vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

CHECKPOINT_FORMAT = "imbalbench-model"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelArch:
    input_dim: int
    output_dim: int
    hidden_dim: int = 0
    freeze_body: bool = False

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        if self.hidden_dim < 0:
            raise ValueError(f"hidden_dim must be non-negative, got {self.hidden_dim}")
        if self.output_dim < 2:
            raise ValueError(f"output_dim must be >= 2, got {self.output_dim}")

    def to_dict(self):
        return {"input_dim": self.input_dim, "hidden_dim": self.hidden_dim,
                "output_dim": self.output_dim, "freeze_body": self.freeze_body}


@dataclass(frozen=True, eq=False)
class Model:
    arch: ModelArch
    params: dict

    def __post_init__(self):
        expected = param_shapes(self.arch)
        if list(self.params) != list(expected):
            raise ValueError(f"parameter names {list(self.params)} != {list(expected)}")
        for name, shape in expected.items():
            p = self.params[name]
            if p.shape != shape:
                raise ValueError(f"{name}: shape {p.shape} != {shape}")
            if not np.all(np.isfinite(p)):
                raise ValueError(f"{name}: non-finite parameters")

    @property
    def has_body(self) -> bool:
        return self.arch.hidden_dim > 0


def param_shapes(arch: ModelArch) -> dict:
    if arch.hidden_dim == 0:
        return {"head.weight": (arch.input_dim, arch.output_dim),
                "head.bias": (arch.output_dim,)}
    return {"body.weight": (arch.input_dim, arch.hidden_dim),
            "body.bias": (arch.hidden_dim,),
            "head.weight": (arch.hidden_dim, arch.output_dim),
            "head.bias": (arch.output_dim,)}


def init_model(arch: ModelArch, seed: int) -> Model:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(arch).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            s = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-s, s, size=shape)
    return Model(arch, params)


def _as_batch(m: Model, x):
    x = np.asarray(x, dtype=np.float64)
    # a lone raster (H, W, K) is one sample; (B, ...) with matching row size is a batch
    single = x.ndim == 1 or (x[0].size != m.arch.input_dim and x.size == m.arch.input_dim)
    x = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
    if x.shape[1] != m.arch.input_dim:
        raise ValueError(f"input has {x.shape[1]} values, model expects {m.arch.input_dim}")
    return x, single


def forward(m: Model, x):
    """Return (logits, features) for one input or a batch.

    A 1-d input (or a single raster) yields 1-d outputs; a batch of shape
    (B, ...) yields (B, C) logits and (B, F) features.
    """
    xb, single = _as_batch(m, x)
    p = m.params
    if m.has_body:
        feats = np.maximum(xb @ p["body.weight"] + p["body.bias"], 0.0)
    else:
        feats = xb
    logits = feats @ p["head.weight"] + p["head.bias"]
    if single:
        return logits[0], feats[0]
    return logits, feats


def backward(m: Model, x, grad_logits) -> dict:
    """Parameter gradients given d(loss)/d(logits); batch rows are summed."""
    xb, _ = _as_batch(m, x)
    g = np.asarray(grad_logits, dtype=np.float64).reshape(xb.shape[0], -1)
    if g.shape[1] != m.arch.output_dim:
        raise ValueError(f"grad_logits has {g.shape[1]} columns, model has {m.arch.output_dim}")
    p = m.params
    if not m.has_body:
        return {"head.weight": xb.T @ g, "head.bias": g.sum(axis=0)}
    pre = xb @ p["body.weight"] + p["body.bias"]
    h = np.maximum(pre, 0.0)
    grads = {}
    if m.arch.freeze_body:
        grads["body.weight"] = np.zeros_like(p["body.weight"])
        grads["body.bias"] = np.zeros_like(p["body.bias"])
    else:
        dh = (g @ p["head.weight"].T) * (pre > 0.0)
        grads["body.weight"] = xb.T @ dh
        grads["body.bias"] = dh.sum(axis=0)
    grads["head.weight"] = h.T @ g
    grads["head.bias"] = g.sum(axis=0)
    return grads


def predict(m: Model, x) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    logits, _ = forward(m, x)
    return np.argmax(np.atleast_2d(logits), axis=1)


def count_parameters(m: Model) -> int:
    return int(sum(p.size for p in m.params.values()))


def save_checkpoint(m: Model, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": m.arch.to_dict(),
        "params": [{"name": k, "shape": list(v.shape), "values": v.ravel().tolist()}
                   for k, v in m.params.items()],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    arch = ModelArch(**doc["arch"])
    params = {e["name"]: np.asarray(e["values"], dtype=np.float64).reshape(e["shape"])
              for e in doc["params"]}
    return Model(arch, params)
